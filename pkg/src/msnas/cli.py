"""Command line interface.

Subcommands: sample, flops, fit, select-family, simulate, search, stats.

Every subcommand accepts ``--config FILE`` (a flat JSON object whose keys
match the long option names with underscores); explicit command-line flags
win over config-file values, which win over built-in defaults.  The merged
configuration is echoed to ``effective_config.json`` in the output
directory, and the final stdout line of a successful run is a JSON summary.
Outputs are byte-identical across reruns with the same effective
configuration; wall-clock time is logged to stderr only.

Commands that consume randomness (sample, simulate, search) refuse to run
without a seed.  Contract violations (bad files, bad values, aborted
searches) exit with status 2 and a one-line ``error:`` message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import report
from .capacity import (
    ConfigurationError,
    DEFAULT_MACRO,
    MacroConfig,
    flops_total,
    solve_channels,
)
from .controllers import (
    EvoConfig,
    PredictorConfig,
    evo_search,
    predictor_search,
)
from .curvefit import (
    CurvePoint,
    FunctionFamily,
    MultiShotReward,
    fallback_predict,
    fit,
    predict_at,
)
from .evaluator import (
    DEFAULT_CHANNELS,
    SimulatorBackend,
    SimulatorConfig,
    dump_table,
    load_table,
    table_from_backend,
)
from .search_space import (
    Layout,
    Topology,
    deserialize,
    sample_random,
    serialize,
    space_size,
)
from .selection import (
    kendall_tau,
    pairwise_spearman_matrix,
    precision_at_k,
    select_family,
    spearman,
)
from .surrogate import SurrogateConfig

TOPOLOGY_SCHEMA = "msnas-topologies-v1"

_CONTRACT_ERRORS = (
    ValueError,
    KeyError,
    RuntimeError,
    OSError,
    json.JSONDecodeError,
)


# -- shared helpers ----------------------------------------------------------


def _load_config_file(path) -> dict:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigurationError("config file must contain a JSON object")
    return data


def _merge(args: argparse.Namespace, spec: dict) -> dict:
    """CLI flag > config-file key > default, for every key in ``spec``."""
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_cfg) - set(spec)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    eff = {}
    for key, default in spec.items():
        cli_value = getattr(args, key, None)
        eff[key] = cli_value if cli_value is not None else file_cfg.get(key, default)
    return eff


def _require_seed(eff: dict) -> int:
    if eff.get("seed") is None:
        raise ConfigurationError("a seed is required (pass --seed or set it in --config)")
    return int(eff["seed"])


def _outdir(eff: dict) -> str:
    out = eff.get("out") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _echo_config(out: str, command: str, eff: dict) -> str:
    path = os.path.join(out, "effective_config.json")
    doc = {"command": command, **{k: v for k, v in eff.items() if k != "out"}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _parse_channels(value) -> tuple[int, ...]:
    if value is None:
        return DEFAULT_CHANNELS
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    channels = tuple(int(v) for v in value)
    if not channels:
        raise ConfigurationError("channel list must not be empty")
    return channels


def _layout(value) -> Layout:
    try:
        return Layout(value)
    except ValueError:
        raise ConfigurationError(
            f"layout must be one of {[l.value for l in Layout]}, got {value!r}"
        ) from None


def _family(value) -> FunctionFamily:
    try:
        return FunctionFamily(value)
    except ValueError:
        raise ConfigurationError(
            f"family must be one of {[f.value for f in FunctionFamily]}, got {value!r}"
        ) from None


def _write_topologies(path, topologies) -> None:
    layouts = {t.layout for t in topologies}
    if len(layouts) != 1:
        raise ConfigurationError("topology files must hold a single layout")
    doc = {
        "schema": TOPOLOGY_SCHEMA,
        "layout": topologies[0].layout.value,
        "count": len(topologies),
        "topologies": [json.loads(serialize(t)) for t in topologies],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_topologies(path) -> list[Topology]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict) or doc.get("schema") != TOPOLOGY_SCHEMA:
        raise ConfigurationError(
            f"{path}: expected a topology file with schema '{TOPOLOGY_SCHEMA}'"
        )
    return [deserialize(json.dumps(entry)) for entry in doc["topologies"]]


def _macro_for(eff: dict) -> MacroConfig:
    """Macro settings shared by capacity-aware commands."""
    return MacroConfig(
        init_channels=1,
        num_cells=DEFAULT_MACRO.num_cells,
        reduction_positions=DEFAULT_MACRO.reduction_positions,
        input_resolution=int(eff.get("input_resolution") or 32),
        num_classes=int(eff.get("num_classes") or 10),
    )


# -- sample ------------------------------------------------------------------


def _cmd_sample(args) -> dict:
    spec = {"layout": "cell_wise", "count": 8, "seed": None, "out": None}
    eff = _merge(args, spec)
    seed = _require_seed(eff)
    layout = _layout(eff["layout"])
    count = int(eff["count"])
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    out = _outdir(eff)
    rng = np.random.default_rng(seed)
    topologies = [
        sample_random(int(rng.integers(2**63)), layout) for _ in range(count)
    ]
    path = os.path.join(out, "topologies.json")
    _write_topologies(path, topologies)
    size = space_size(layout)
    return {
        "command": "sample",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "topologies_json": path,
        "effective_config": _echo_config(out, "sample", eff),
        "ids": [t.id for t in topologies],
        "space_size_log10": size.log10,
    }


# -- flops -------------------------------------------------------------------


def _cmd_flops(args) -> dict:
    spec = {
        "topologies": None,
        "channels": None,
        "channel_list": None,
        "target_mflops": None,
        "solve": None,
        "out": None,
        "input_resolution": 32,
        "num_classes": 10,
    }
    eff = _merge(args, spec)
    if not eff["topologies"]:
        raise ConfigurationError("--topologies is required")
    topologies = _read_topologies(eff["topologies"])
    out = _outdir(eff)
    macro = _macro_for(eff)
    rows: list[tuple[str, int, float]] = []
    if eff["solve"]:
        if eff["target_mflops"] is None:
            raise ConfigurationError("--solve requires --target-mflops")
        target = float(eff["target_mflops"])
        for t in topologies:
            ch = solve_channels(t, target, macro)
            rows.append((t.id, ch, flops_total(t, replace(macro, init_channels=ch))))
    else:
        if eff["channels"] is not None:
            channels = (int(eff["channels"]),)
        else:
            channels = _parse_channels(eff["channel_list"])
        for t in topologies:
            for ch in channels:
                rows.append(
                    (t.id, ch, flops_total(t, replace(macro, init_channels=ch)))
                )
    path = os.path.join(out, "capacity.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["topology_id", "init_channels", "mflops"])
        for tid, ch, mf in rows:
            writer.writerow([tid, ch, repr(float(mf))])
    return {
        "command": "flops",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "capacity_csv": path,
        "effective_config": _echo_config(out, "flops", eff),
        "rows": len(rows),
    }


# -- fit ---------------------------------------------------------------------


def _read_points_csv(path) -> list[CurvePoint]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["mflops", "reward"]:
            raise ConfigurationError(
                f"{path}: expected header 'mflops,reward', got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ConfigurationError(f"{path}:{lineno}: expected 2 fields")
            try:
                points.append(CurvePoint(float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: {exc}") from None
    return points


def _fit_payload(family: FunctionFamily, points, target: float) -> dict:
    result = fit(family, points)
    pred = (
        predict_at(result, target)
        if result.converged
        else fallback_predict(points, target)
    )
    return {
        "family": family.value,
        "params": list(result.params),
        "rss": result.rss,
        "converged": result.converged,
        "n_points": result.n_points,
        "x_scale": result.x_scale,
        "prediction": {
            "value": pred.value,
            "clamped": pred.clamped,
            "fallback": pred.fallback,
        },
        "_result": result,
        "_pred": pred,
    }


def _cmd_fit(args) -> dict:
    spec = {
        "points": None,
        "table": None,
        "topology_id": None,
        "family": "log_power",
        "target_mflops": None,
        "all_families": None,
        "out": None,
        "no_plots": None,
    }
    eff = _merge(args, spec)
    if eff["target_mflops"] is None:
        raise ConfigurationError("--target-mflops is required")
    target = float(eff["target_mflops"])
    if bool(eff["points"]) == bool(eff["table"]):
        raise ConfigurationError("provide exactly one of --points or --table")
    if eff["points"]:
        points = _read_points_csv(eff["points"])
    else:
        if not eff["topology_id"]:
            raise ConfigurationError("--table requires --topology-id")
        backend = load_table(eff["table"])
        table = table_from_backend(backend)
        caps, rewards = table.row(eff["topology_id"])
        points = [CurvePoint(c, r) for c, r in zip(caps, rewards)]
    family = _family(eff["family"])
    out = _outdir(eff)

    main_payload = _fit_payload(family, points, target)
    alternatives = []
    if eff["all_families"]:
        for other in FunctionFamily:
            if other is family:
                continue
            p = _fit_payload(other, points, target)
            p.pop("_result"), p.pop("_pred")
            alternatives.append(p)
    result = main_payload.pop("_result")
    pred = main_payload.pop("_pred")

    doc = {
        "target_mflops": target,
        **main_payload,
        "alternatives": alternatives,
    }
    fit_json = os.path.join(out, "fit.json")
    with open(fit_json, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    figures = []
    if not eff["no_plots"]:
        figures.append(
            report.plot_fit(points, result, target, pred.value,
                            os.path.join(out, "fit.png"))
        )
    return {
        "command": "fit",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "fit_json": fit_json,
        "figures": figures,
        "effective_config": _echo_config(out, "fit", eff),
        "family": family.value,
        "prediction": doc["prediction"],
        "converged": doc["converged"],
    }


# -- select-family -----------------------------------------------------------


def _cmd_select_family(args) -> dict:
    spec = {"table": None, "include_first": None, "out": None, "no_plots": None}
    eff = _merge(args, spec)
    if not eff["table"]:
        raise ConfigurationError("--table is required")
    backend = load_table(eff["table"])
    table = table_from_backend(backend)
    loo = select_family(table, include_first=bool(eff["include_first"]))
    out = _outdir(eff)
    report_json = os.path.join(out, "loo_report.json")
    with open(report_json, "w") as fh:
        json.dump(loo.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    figures = []
    if not eff["no_plots"]:
        figures.append(
            report.plot_loo_report(loo, os.path.join(out, "loo.png"))
        )
    return {
        "command": "select-family",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "report_json": report_json,
        "figures": figures,
        "effective_config": _echo_config(out, "select-family", eff),
        "selected": loo.selected.value,
        "averages": {f.value: loo.averages[f] for f in loo.averages},
    }


# -- simulate ----------------------------------------------------------------


def _cmd_simulate(args) -> dict:
    spec = {
        "seed": None,
        "count": 200,
        "layout": "cell_wise",
        "noise_sigma": 0.01,
        "family": "log_power",
        "lam": 0.5,
        "channel_list": None,
        "crossing": None,
        "n_crossing_pairs": 10,
        "target_mflops": 2000.0,
        "out": None,
        "no_plots": None,
    }
    eff = _merge(args, spec)
    seed = _require_seed(eff)
    layout = _layout(eff["layout"])
    count = int(eff["count"])
    out = _outdir(eff)
    config = SimulatorConfig(
        seed=seed,
        noise_sigma=float(eff["noise_sigma"]),
        lam=float(eff["lam"]),
        channel_list=_parse_channels(eff["channel_list"]),
        family=_family(eff["family"]),
        crossing_scenario=bool(eff["crossing"]),
        n_crossing_pairs=int(eff["n_crossing_pairs"]),
    )
    rng = np.random.default_rng(seed)
    topologies = [
        sample_random(int(rng.integers(2**63)), layout) for _ in range(count)
    ]
    backend = SimulatorBackend(config)
    table = backend.population_table(topologies)

    topo_json = os.path.join(out, "topologies.json")
    _write_topologies(topo_json, topologies)
    table_csv = os.path.join(out, "rewards.csv")
    dump_table(table, table_csv)
    truth_json = os.path.join(out, "ground_truth.json")
    with open(truth_json, "w") as fh:
        json.dump(backend.ground_truth_sidecar(topologies), fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    figures = []
    if not eff["no_plots"]:
        highlight = [(p.id_low, p.id_high) for p in backend.crossing_pairs]
        figures.append(
            report.plot_population_curves(
                backend,
                topologies,
                float(eff["target_mflops"]),
                os.path.join(out, "population.png"),
                highlight=highlight,
            )
        )
    return {
        "command": "simulate",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "rewards_csv": table_csv,
        "topologies_json": topo_json,
        "ground_truth_json": truth_json,
        "figures": figures,
        "effective_config": _echo_config(out, "simulate", eff),
        "rows": count * len(config.channel_list),
        "crossing_pairs": len(backend.crossing_pairs),
    }


# -- search ------------------------------------------------------------------


def _search_reward_fn(eff: dict, seed: int):
    family = _family(eff["family"])
    target = float(eff["target_mflops"])
    threads = int(eff["threads"])
    if eff["backend"] == "simulator":
        config = SimulatorConfig(
            seed=seed,
            noise_sigma=float(eff["noise_sigma"]),
            lam=float(eff["lam"]),
            channel_list=_parse_channels(eff["channel_list"]),
            family=_family(eff["sim_family"]),
        )
        backend = SimulatorBackend(config)
    elif eff["backend"] == "table":
        if not eff["table"]:
            raise ConfigurationError("--backend table requires --table")
        backend = load_table(eff["table"])
    else:
        raise ConfigurationError("backend must be 'simulator' or 'table'")
    return backend, MultiShotReward(backend, family, target, threads=threads)


def _cmd_search(args) -> dict:
    spec = {
        "controller": "evo",
        "backend": "simulator",
        "seed": None,
        "target_mflops": 2000.0,
        "family": "log_power",
        "threads": 1,
        "out": None,
        "no_plots": None,
        # simulator backend
        "noise_sigma": 0.01,
        "lam": 0.5,
        "channel_list": None,
        "sim_family": "log_power",
        # table backend
        "table": None,
        "topologies": None,
        # evolutionary controller
        "layout": "cell_wise",
        "steps": 200,
        "population": 100,
        "tournament": 10,
        "init_samples": 200,
        # predictor controller
        "stages": 8,
        "picks_per_stage": 50,
        "inner_steps": 2500,
        "inner_population": 20,
        "inner_tournament": 5,
        "epochs": 100,
        "tune_epochs": 50,
        "batch_size": 50,
        "lr": 1e-3,
        "margin": 0.1,
        "surrogate_dim": 48,
        "cell_out_dim": 32,
        "mlp_hidden": 256,
        "mlp_layers": 3,
        "dropout": 0.1,
    }
    eff = _merge(args, spec)
    seed = _require_seed(eff)
    out = _outdir(eff)
    backend, reward_fn = _search_reward_fn(eff, seed)

    initial_pool = None
    if eff["topologies"]:
        initial_pool = _read_topologies(eff["topologies"])

    if eff["controller"] == "evo":
        config = EvoConfig(
            seed=seed,
            steps=int(eff["steps"]),
            population=int(eff["population"]),
            tournament=int(eff["tournament"]),
            init_samples=int(eff["init_samples"]),
            layout=_layout(eff["layout"]),
        )
        result = evo_search(config, reward_fn, initial_pool=initial_pool)
    elif eff["controller"] == "predictor":
        if initial_pool is not None:
            raise ConfigurationError(
                "the predictor controller samples its own pool; drop --topologies"
            )
        dim = int(eff["surrogate_dim"])
        config = PredictorConfig(
            seed=seed,
            stages=int(eff["stages"]),
            picks_per_stage=int(eff["picks_per_stage"]),
            inner_steps=int(eff["inner_steps"]),
            inner_population=int(eff["inner_population"]),
            inner_tournament=int(eff["inner_tournament"]),
            init_samples=int(eff["init_samples"]),
            surrogate=SurrogateConfig(
                op_dim=dim,
                node_dim=dim,
                hidden_dim=dim,
                cell_out_dim=int(eff["cell_out_dim"]),
                mlp_hidden=int(eff["mlp_hidden"]),
                mlp_layers=int(eff["mlp_layers"]),
                dropout=float(eff["dropout"]),
            ),
            epochs=int(eff["epochs"]),
            tune_epochs=int(eff["tune_epochs"]),
            batch_size=int(eff["batch_size"]),
            lr=float(eff["lr"]),
            margin=float(eff["margin"]),
        )
        result = predictor_search(config, reward_fn)
    else:
        raise ConfigurationError("controller must be 'evo' or 'predictor'")

    history_csv = os.path.join(out, "history.csv")
    result.history.to_csv(history_csv)
    best_json = os.path.join(out, "best_topology.json")
    with open(best_json, "w") as fh:
        fh.write(serialize(result.best_topology))
        fh.write("\n")
    summary = {
        "controller": eff["controller"],
        "backend": eff["backend"],
        **result.summary_dict(),
    }
    if isinstance(backend, SimulatorBackend):
        summary["best_ground_truth"] = backend.ground_truth_at(
            result.best_topology, float(eff["target_mflops"])
        )
    summary_json = os.path.join(out, "summary.json")
    with open(summary_json, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    figures = []
    if not eff["no_plots"]:
        figures.append(
            report.plot_history(result.history,
                                os.path.join(out, "trajectory.png"))
        )
    return {
        "command": "search",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "history_csv": history_csv,
        "summary_json": summary_json,
        "best_topology_json": best_json,
        "figures": figures,
        "effective_config": _echo_config(out, "search", eff),
        **summary,
    }


# -- stats -------------------------------------------------------------------


def _cmd_stats(args) -> dict:
    spec = {
        "table": None,
        "pair": None,
        "all_pairs": None,
        "k": 10,
        "out": None,
        "no_plots": None,
    }
    eff = _merge(args, spec)
    if not eff["table"]:
        raise ConfigurationError("--table is required")
    backend = load_table(eff["table"])
    table = table_from_backend(backend)
    out = _outdir(eff)
    figures = []
    if eff["all_pairs"]:
        matrix = pairwise_spearman_matrix(table)
        matrix_csv = os.path.join(out, "correlation_matrix.csv")
        with open(matrix_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["init_channels"] + [str(c) for c in table.channels])
            for i, ch in enumerate(table.channels):
                writer.writerow([str(ch)] + [repr(float(v)) for v in matrix[i]])
        if not eff["no_plots"]:
            figures.append(
                report.plot_correlation_matrix(
                    matrix, table.channels, os.path.join(out, "correlation.png")
                )
            )
        payload = {
            "matrix_csv": matrix_csv,
            "matrix": [[float(v) for v in row] for row in matrix],
        }
    else:
        if not eff["pair"] or len(eff["pair"]) != 2:
            raise ConfigurationError("provide --pair A B or --all-pairs")
        a, b = (int(v) for v in eff["pair"])
        k_count = table.rewards.shape[1]
        for idx in (a, b):
            if not 1 <= idx <= k_count:
                raise ConfigurationError(
                    f"supernet index {idx} outside [1, {k_count}]"
                )
        xs = table.rewards[:, a - 1]
        ys = table.rewards[:, b - 1]
        payload = {
            "pair": [a, b],
            "spearman": spearman(xs, ys).value,
            "kendall": kendall_tau(xs, ys).value,
            "precision_at_k": precision_at_k(xs, ys, int(eff["k"])).value,
            "k": int(eff["k"]),
            "n": int(xs.size),
        }
    stats_json = os.path.join(out, "stats.json")
    with open(stats_json, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {
        "command": "stats",
        "config": {k: v for k, v in eff.items() if k != "out"},
        "stats_json": stats_json,
        "figures": figures,
        "effective_config": _echo_config(out, "stats", eff),
        **{k: v for k, v in payload.items() if k != "matrix"},
    }


# -- parser ------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with defaults for this command")
    p.add_argument("--out", help="output directory (default: current directory)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msnas",
        description=(
            "Multi-shot architecture search: capacity-aware reward "
            "extrapolation over a family of differently sized supernets."
        ),
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("sample", help="sample random topologies to a JSON file")
    _add_common(p)
    p.add_argument("--layout", choices=[l.value for l in Layout])
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("flops", help="tabulate topology capacity in MFLOPs")
    _add_common(p)
    p.add_argument("--topologies", help="topology JSON file (see 'sample')")
    p.add_argument("--channels", type=int, help="single width to evaluate")
    p.add_argument("--channel-list", dest="channel_list",
                   help="comma-separated widths (default: the 8 supernet widths)")
    p.add_argument("--target-mflops", dest="target_mflops", type=float)
    p.add_argument("--solve", action="store_true", default=None,
                   help="solve for the width closest to --target-mflops")
    p.set_defaults(func=_cmd_flops)

    p = sub.add_parser("fit", help="fit a saturating curve and extrapolate")
    _add_common(p)
    p.add_argument("--points", help="CSV with header 'mflops,reward'")
    p.add_argument("--table", help="reward table CSV (with --topology-id)")
    p.add_argument("--topology-id", dest="topology_id")
    p.add_argument("--family", choices=[f.value for f in FunctionFamily])
    p.add_argument("--target-mflops", dest="target_mflops", type=float)
    p.add_argument("--all-families", dest="all_families", action="store_true",
                   default=None, help="also report fits for the other families")
    p.add_argument("--no-plots", dest="no_plots", action="store_true", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser(
        "select-family",
        help="pick the extrapolation family by leave-one-out rank correlation",
    )
    _add_common(p)
    p.add_argument("--table", help="reward table CSV")
    p.add_argument("--include-first", dest="include_first", action="store_true",
                   default=None,
                   help="average over all leave-out indices, not just j >= 2")
    p.add_argument("--no-plots", dest="no_plots", action="store_true", default=None)
    p.set_defaults(func=_cmd_select_family)

    p = sub.add_parser("simulate", help="generate a synthetic reward table")
    _add_common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--layout", choices=[l.value for l in Layout])
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--family", choices=[f.value for f in FunctionFamily])
    p.add_argument("--lam", type=float, help="weight on the adversarial term")
    p.add_argument("--channel-list", dest="channel_list")
    p.add_argument("--crossing", action="store_true", default=None,
                   help="plant curve pairs whose ranking flips with capacity")
    p.add_argument("--n-crossing-pairs", dest="n_crossing_pairs", type=int)
    p.add_argument("--target-mflops", dest="target_mflops", type=float)
    p.add_argument("--no-plots", dest="no_plots", action="store_true", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("search", help="run a topology search")
    _add_common(p)
    p.add_argument("--controller", choices=["evo", "predictor"])
    p.add_argument("--backend", choices=["simulator", "table"])
    p.add_argument("--seed", type=int)
    p.add_argument("--target-mflops", dest="target_mflops", type=float)
    p.add_argument("--family", choices=[f.value for f in FunctionFamily],
                   help="extrapolation family used by the reward estimator")
    p.add_argument("--threads", type=int,
                   help="parallel one-shot queries per evaluation")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--channel-list", dest="channel_list")
    p.add_argument("--sim-family", dest="sim_family",
                   choices=[f.value for f in FunctionFamily])
    p.add_argument("--table", help="reward table CSV for --backend table")
    p.add_argument(
        "--topologies",
        help=(
            "initial pool for the evolutionary controller; required with "
            "--backend table, whose coverage is fixed, so mutated children "
            "usually miss the table and abort the run: combine with --steps 0 "
            "to rank a fixed pool"
        ),
    )
    p.add_argument("--layout", choices=[l.value for l in Layout])
    p.add_argument("--steps", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--tournament", type=int)
    p.add_argument("--init-samples", dest="init_samples", type=int)
    p.add_argument("--stages", type=int)
    p.add_argument("--picks-per-stage", dest="picks_per_stage", type=int)
    p.add_argument("--inner-steps", dest="inner_steps", type=int)
    p.add_argument("--inner-population", dest="inner_population", type=int)
    p.add_argument("--inner-tournament", dest="inner_tournament", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--tune-epochs", dest="tune_epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--margin", type=float)
    p.add_argument("--surrogate-dim", dest="surrogate_dim", type=int)
    p.add_argument("--cell-out-dim", dest="cell_out_dim", type=int)
    p.add_argument("--mlp-hidden", dest="mlp_hidden", type=int)
    p.add_argument("--mlp-layers", dest="mlp_layers", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--no-plots", dest="no_plots", action="store_true", default=None)
    p.set_defaults(func=_cmd_search)

    p = sub.add_parser("stats", help="rank statistics between supernet columns")
    _add_common(p)
    p.add_argument("--table", help="reward table CSV")
    p.add_argument("--pair", nargs=2, type=int, metavar=("A", "B"),
                   help="1-based supernet indices to compare")
    p.add_argument("--all-pairs", dest="all_pairs", action="store_true",
                   default=None, help="full pairwise correlation matrix")
    p.add_argument("--k", type=int, help="cutoff for precision-at-k")
    p.add_argument("--no-plots", dest="no_plots", action="store_true", default=None)
    p.set_defaults(func=_cmd_stats)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    started = time.perf_counter()
    try:
        payload = args.func(args)
    except _CONTRACT_ERRORS as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return 2
    print(json.dumps(payload, indent=2, sort_keys=True))
    elapsed = time.perf_counter() - started
    print(f"[msnas] {args.command} finished in {elapsed:.2f}s", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
