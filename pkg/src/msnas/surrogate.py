"""Graph-encoder surrogate that scores stage-wise topologies.

Per cell, each of the 6 nodes starts from a learned per-node-index
embedding; two rounds of message passing follow, where an internal node's
next state is an affine transform (through tanh) of the sum over incoming
non-NONE edges of (op embedding * source state).  The four internal-node
final states are summed and mapped to a cell embedding; the four cell
embeddings are concatenated and a small MLP (tanh hidden layers, linear
output, dropout on the input during training) produces a scalar score.

Training minimizes a pairwise hinge ranking loss with margin m over all
strictly-ordered reward pairs inside each batch.  Every gradient here is
derived and implemented by hand (no autodiff); analytic gradients are
validated against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .search_space import (
    OPS,
    Layout,
    Topology,
    admissible_edges,
)

__all__ = [
    "SurrogateConfig",
    "SurrogateModel",
    "UnsupportedLayoutError",
    "LossDivergedError",
    "pairwise_hinge",
    "train_ranking",
    "pairwise_violation_rate",
    "encode_batch",
]

_EDGES = admissible_edges()
_SRC = np.array([u for u, _v in _EDGES])
_DST_IDX = np.array([v - 2 for _u, v in _EDGES])  # internal-node slot per edge
_SRC_GROUPS = [np.flatnonzero(_SRC == u) for u in range(6)]
_NONE_INDEX = 0  # OPS[0] is NONE; its embedding row is masked out


class UnsupportedLayoutError(ValueError):
    """Surrogate scoring is defined for stage-wise topologies only."""


class LossDivergedError(RuntimeError):
    """Training loss became non-finite; carries step diagnostics."""

    def __init__(self, epoch: int, batch: int, lr: float):
        super().__init__(
            f"non-finite training loss at epoch {epoch}, batch {batch} (lr={lr})"
        )
        self.epoch = epoch
        self.batch = batch
        self.lr = lr


@dataclass(frozen=True)
class SurrogateConfig:
    """Encoder/head dimensions.  The three encoder dims must match because
    messages are elementwise products of op embeddings and node states."""

    op_dim: int = 48
    node_dim: int = 48
    hidden_dim: int = 48
    cell_out_dim: int = 32
    mlp_hidden: int = 256
    mlp_layers: int = 3  # affine layers including the scalar output
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if not (self.op_dim == self.node_dim == self.hidden_dim):
            raise ValueError("op_dim, node_dim and hidden_dim must be equal")
        if self.mlp_layers < 1:
            raise ValueError("mlp_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def encode_batch(topologies) -> np.ndarray:
    """(B, 4, 14) op-index array for stage-wise topologies."""
    out = np.empty((len(topologies), 4, len(_EDGES)), dtype=np.int64)
    op_index = {op: i for i, op in enumerate(OPS)}
    for b, t in enumerate(topologies):
        if not isinstance(t, Topology) or t.layout is not Layout.STAGE_WISE:
            raise UnsupportedLayoutError(
                "surrogate scoring requires stage-wise topologies"
            )
        for c, cell in enumerate(t.cells):
            for e, op in enumerate(cell.ops):
                out[b, c, e] = op_index[op]
    return out


class SurrogateModel:
    """Parameter container plus hand-written forward/backward passes."""

    def __init__(self, config: SurrogateConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    # -- construction --------------------------------------------------------

    @classmethod
    def initialize(cls, config: SurrogateConfig, seed: int) -> "SurrogateModel":
        rng = np.random.default_rng(seed)
        d, c_out = config.node_dim, config.cell_out_dim
        params: dict[str, np.ndarray] = {
            "node_emb": rng.normal(0.0, 0.5, (6, d)),
            "op_emb": rng.normal(0.0, 0.5, (len(OPS), d)),
            "w1": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
            "b1": np.zeros(d),
            "w2": rng.normal(0.0, 1.0 / np.sqrt(d), (d, d)),
            "b2": np.zeros(d),
            "wc": rng.normal(0.0, 1.0 / np.sqrt(d), (d, c_out)),
            "bc": np.zeros(c_out),
        }
        fan_in = 4 * c_out
        for layer in range(config.mlp_layers):
            fan_out = 1 if layer == config.mlp_layers - 1 else config.mlp_hidden
            params[f"mlp_w{layer}"] = rng.normal(
                0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)
            )
            params[f"mlp_b{layer}"] = np.zeros(fan_out)
            fan_in = fan_out
        return cls(config, params)

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def copy(self) -> "SurrogateModel":
        return SurrogateModel(
            self.config, {k: v.copy() for k, v in self.params.items()}
        )

    # -- forward -------------------------------------------------------------

    def forward(
        self, ops: np.ndarray, dropout_mask: np.ndarray | None = None
    ) -> tuple[np.ndarray, dict]:
        """Scores for an encoded batch.  ``dropout_mask`` (train time only)
        is an inverted-dropout multiplier on the concatenated embedding."""
        p = self.params
        nb = ops.shape[0]
        d = self.config.node_dim
        cells_cache = []
        zs = []
        for c in range(4):
            o = ops[:, c, :]
            mask = (o != _NONE_INDEX).astype(float)[..., None]
            gate = p["op_emb"][o] * mask
            h0 = np.broadcast_to(p["node_emb"], (nb, 6, d))
            msgs1 = gate * h0[:, _SRC, :]
            agg1 = np.stack(
                [msgs1[:, _DST_IDX == v, :].sum(axis=1) for v in range(4)], axis=1
            )
            u1 = np.tanh(agg1 @ p["w1"] + p["b1"])
            h1 = np.concatenate([h0[:, :2, :], u1], axis=1)
            msgs2 = gate * h1[:, _SRC, :]
            agg2 = np.stack(
                [msgs2[:, _DST_IDX == v, :].sum(axis=1) for v in range(4)], axis=1
            )
            u2 = np.tanh(agg2 @ p["w2"] + p["b2"])
            cell_sum = u2.sum(axis=1)
            zs.append(cell_sum @ p["wc"] + p["bc"])
            cells_cache.append(
                {
                    "o": o,
                    "mask": mask,
                    "gate": gate,
                    "h0": h0,
                    "h1": h1,
                    "agg1": agg1,
                    "u1": u1,
                    "agg2": agg2,
                    "u2": u2,
                    "cell_sum": cell_sum,
                }
            )
        z = np.concatenate(zs, axis=1)
        zd = z * dropout_mask if dropout_mask is not None else z
        acts = [zd]
        pres = []
        a = zd
        last = self.config.mlp_layers - 1
        for layer in range(self.config.mlp_layers):
            pre = a @ p[f"mlp_w{layer}"] + p[f"mlp_b{layer}"]
            pres.append(pre)
            a = pre if layer == last else np.tanh(pre)
            acts.append(a)
        cache = {
            "cells": cells_cache,
            "dropout_mask": dropout_mask,
            "acts": acts,
            "pres": pres,
        }
        return a[:, 0], cache

    # -- backward ------------------------------------------------------------

    def backward(self, cache: dict, dscores: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of sum(dscores * scores) w.r.t. every parameter."""
        p = self.config
        w = self.params
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        da = dscores[:, None]
        last = p.mlp_layers - 1
        for layer in range(last, -1, -1):
            a_in = cache["acts"][layer]
            if layer != last:
                da = da * (1.0 - np.tanh(cache["pres"][layer]) ** 2)
            grads[f"mlp_w{layer}"] += a_in.T @ da
            grads[f"mlp_b{layer}"] += da.sum(axis=0)
            da = da @ w[f"mlp_w{layer}"].T
        if cache["dropout_mask"] is not None:
            da = da * cache["dropout_mask"]
        c_out = p.cell_out_dim
        for c in range(4):
            cc = cache["cells"][c]
            dz_c = da[:, c * c_out : (c + 1) * c_out]
            grads["wc"] += cc["cell_sum"].T @ dz_c
            grads["bc"] += dz_c.sum(axis=0)
            dcell_sum = dz_c @ w["wc"].T
            du2 = np.repeat(dcell_sum[:, None, :], 4, axis=1)
            dpre2 = du2 * (1.0 - cc["u2"] ** 2)
            grads["w2"] += np.einsum("bnd,bne->de", cc["agg2"], dpre2)
            grads["b2"] += dpre2.sum(axis=(0, 1))
            dagg2 = dpre2 @ w["w2"].T
            dmsgs2 = dagg2[:, _DST_IDX, :]
            dgate = dmsgs2 * cc["h1"][:, _SRC, :]
            dh1 = np.zeros_like(cc["h1"])
            src_grad2 = dmsgs2 * cc["gate"]
            for u in range(6):
                grp = _SRC_GROUPS[u]
                if grp.size:
                    dh1[:, u, :] += src_grad2[:, grp, :].sum(axis=1)
            du1 = dh1[:, 2:, :]
            dpre1 = du1 * (1.0 - cc["u1"] ** 2)
            grads["w1"] += np.einsum("bnd,bne->de", cc["agg1"], dpre1)
            grads["b1"] += dpre1.sum(axis=(0, 1))
            dagg1 = dpre1 @ w["w1"].T
            dmsgs1 = dagg1[:, _DST_IDX, :]
            dgate += dmsgs1 * cc["h0"][:, _SRC, :]
            dh0 = np.zeros_like(dh1)
            src_grad1 = dmsgs1 * cc["gate"]
            for u in range(6):
                grp = _SRC_GROUPS[u]
                if grp.size:
                    dh0[:, u, :] += src_grad1[:, grp, :].sum(axis=1)
            dh0[:, :2, :] += dh1[:, :2, :]  # input rows pass through round 1
            grads["node_emb"] += dh0.sum(axis=0)
            flat_idx = cc["o"].reshape(-1)
            flat_grad = (dgate * cc["mask"]).reshape(-1, dgate.shape[-1])
            np.add.at(grads["op_emb"], flat_idx, flat_grad)
        return grads

    # -- scoring -------------------------------------------------------------

    def score(self, topology: Topology) -> float:
        return float(self.score_batch([topology])[0])

    def score_batch(self, topologies) -> np.ndarray:
        ops = encode_batch(topologies)
        scores, _ = self.forward(ops)
        return scores


def pairwise_hinge(
    scores: np.ndarray, rewards: np.ndarray, margin: float
) -> tuple[float, np.ndarray, int]:
    """Mean hinge over all strictly-ordered pairs: for rewards y_i < y_j the
    pair contributes max(0, margin - (s_j - s_i)).  Equal rewards form no
    pair.  Returns (loss, dloss/dscores, n_pairs)."""
    worse_than = rewards[:, None] < rewards[None, :]  # [i, j]: y_i < y_j
    n_pairs = int(worse_than.sum())
    if n_pairs == 0:
        return 0.0, np.zeros_like(scores), 0
    viol = margin - (scores[None, :] - scores[:, None])  # [i, j]
    active = worse_than & (viol > 0)
    loss = float(viol[active].sum() / n_pairs)
    dscores = (active.sum(axis=1) - active.sum(axis=0)) / n_pairs
    return loss, dscores.astype(float), n_pairs


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= (
                self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            )


def train_ranking(
    model: SurrogateModel,
    topologies,
    rewards,
    *,
    epochs: int,
    batch_size: int = 50,
    lr: float = 1e-3,
    margin: float = 0.1,
    seed: int = 0,
    optimizer: _Adam | None = None,
) -> tuple[list[float], _Adam]:
    """In-place pairwise ranking training; returns the per-epoch loss trace
    and the optimizer (pass it back in to warm-start further tuning)."""
    ops = encode_batch(topologies)
    y = np.asarray(rewards, dtype=float)
    if len(y) != ops.shape[0]:
        raise ValueError("one reward per topology required")
    rng = np.random.default_rng(seed)
    opt = optimizer or _Adam(model.params, lr)
    dropout = model.config.dropout
    trace = []
    for epoch in range(epochs):
        perm = rng.permutation(len(y))
        losses = []
        for lo in range(0, len(y), batch_size):
            batch = perm[lo : lo + batch_size]
            if batch.size < 2:
                continue
            mask = None
            if dropout > 0:
                keep = rng.random((batch.size, 4 * model.config.cell_out_dim))
                mask = (keep >= dropout).astype(float) / (1.0 - dropout)
            scores, cache = model.forward(ops[batch], dropout_mask=mask)
            loss, dscores, n_pairs = pairwise_hinge(scores, y[batch], margin)
            if not np.isfinite(loss):
                raise LossDivergedError(epoch, lo // batch_size, opt.lr)
            losses.append(loss)
            if n_pairs == 0:
                continue
            grads = model.backward(cache, dscores)
            opt.step(model.params, grads)
        trace.append(float(np.mean(losses)) if losses else 0.0)
    return trace, opt


def pairwise_violation_rate(scores, rewards) -> float:
    """Fraction of strictly-ordered reward pairs the scores order wrongly
    or tie (lower is better; 0.5 is chance for continuous scores)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(rewards, dtype=float)
    worse = y[:, None] < y[None, :]
    n_pairs = int(worse.sum())
    if n_pairs == 0:
        raise ValueError("no strictly-ordered pairs")
    bad = worse & (s[:, None] >= s[None, :])
    return float(bad.sum() / n_pairs)
