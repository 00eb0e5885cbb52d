"""Saturating-curve fitting and reward extrapolation to a target capacity.

Seven candidate function families are fit to (capacity, reward) points by
nonlinear least squares and evaluated at a target capacity.  The optimizer
is a damped Gauss-Newton iteration (Levenberg-style lambda*I damping,
multiplicative factor 10, initial damping 1e-3, at most 200 iterations,
stopping when the relative rss improvement falls below 1e-10) started from
a deterministic per-family grid of initial points.  Jacobians are central
finite differences.  Points whose model value is non-finite contribute a
fixed penalty residual of 1e6 during optimization, so the iteration
retreats from invalid parameter regions.

Capacities are rescaled to units of 1000 MFLOPs before fitting; fitted
parameters live in that normalized domain and ``FitResult.x_scale`` records
the scale so predictions stay consistent.

The implementation is batched: many (curve, start) rows advance through the
same iteration with per-row damping and convergence state, which is what
keeps leave-one-out sweeps over hundreds of topologies fast.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

__all__ = [
    "FunctionFamily",
    "PARAM_COUNTS",
    "CurvePoint",
    "FitResult",
    "Prediction",
    "MultiShotEstimate",
    "CurveDomainError",
    "UnderDeterminedError",
    "UnconvergedFitError",
    "EvaluationError",
    "eval_family",
    "fit",
    "fit_many",
    "predict_at",
    "fallback_predict",
    "multi_shot_eval",
    "MultiShotReward",
    "X_SCALE",
    "PENALTY",
]

#: Capacity unit used inside the fitter: 1000 MFLOPs.
X_SCALE = 1000.0

#: Residual substituted for non-finite model values during optimization.
PENALTY = 1e6

_MAX_ITER = 200
_REL_STOP = 1e-10
_DAMP_INIT = 1e-3
_DAMP_FACTOR = 10.0
_DAMP_MAX = 1e10
_PHASE1_ITER = 20  # multi-start tournament: short phase for every start
_N_FINALISTS = 4  # starts per curve that receive the full budget


class FunctionFamily(Enum):
    JANOSCHEK = "janoschek"
    VAPOR_PRESSURE = "vapor_pressure"
    LOG_LOG_LINEAR = "log_log_linear"
    ILOG2 = "ilog2"
    LOG_POWER = "log_power"
    MMF = "mmf"
    LOG_POWER_REP = "log_power_rep"


PARAM_COUNTS: dict[FunctionFamily, int] = {
    FunctionFamily.JANOSCHEK: 4,
    FunctionFamily.VAPOR_PRESSURE: 3,
    FunctionFamily.LOG_LOG_LINEAR: 2,
    FunctionFamily.ILOG2: 2,
    FunctionFamily.LOG_POWER: 3,
    FunctionFamily.MMF: 4,
    FunctionFamily.LOG_POWER_REP: 3,
}


class CurveDomainError(ValueError):
    """Model value is non-finite for the given parameters and inputs."""


class UnderDeterminedError(ValueError):
    """Fewer points than free parameters."""


class UnconvergedFitError(RuntimeError):
    """Prediction requested from an unconverged fit; use the fallback."""


class EvaluationError(RuntimeError):
    """A one-shot evaluation failed; carries the supernet index."""

    def __init__(self, supernet_index: int, message: str):
        super().__init__(f"supernet {supernet_index}: {message}")
        self.supernet_index = supernet_index


@dataclass(frozen=True)
class CurvePoint:
    """One observation: capacity in MFLOPs and a reward in [0, 1]."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (self.x > 0 and np.isfinite(self.x)):
            raise ValueError(f"capacity must be positive and finite, got {self.x}")
        if not (0.0 <= self.y <= 1.0):
            raise ValueError(f"reward must lie in [0, 1], got {self.y}")


@dataclass(frozen=True)
class FitResult:
    family: FunctionFamily
    params: tuple[float, ...]
    rss: float
    converged: bool
    n_points: int
    x_scale: float = X_SCALE


@dataclass(frozen=True)
class Prediction:
    value: float
    clamped: bool
    fallback: bool = False


def _raw(family: FunctionFamily, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Family value, vectorized over parameter rows; non-finite allowed.

    theta: (..., p) parameter rows; x: broadcastable to theta's leading
    dims plus a trailing point axis.  Returns values on that broadcast.
    """
    t = theta[..., None, :]  # broadcast against x
    with np.errstate(all="ignore"):
        if family is FunctionFamily.JANOSCHEK:
            a, b, c, d = (t[..., i] for i in range(4))
            return a - (a - b) * np.exp(-c * x**d)
        if family is FunctionFamily.VAPOR_PRESSURE:
            a, b, c = (t[..., i] for i in range(3))
            return np.exp(a + b / x + c * np.log(x))
        if family is FunctionFamily.LOG_LOG_LINEAR:
            a, b = (t[..., i] for i in range(2))
            return np.log(a * np.log(x) + b)
        if family is FunctionFamily.ILOG2:
            a, c = (t[..., i] for i in range(2))
            return c - a / np.log(x)
        if family is FunctionFamily.LOG_POWER:
            a, b, c = (t[..., i] for i in range(3))
            return a / (1.0 + (x / np.exp(b)) ** c)
        if family is FunctionFamily.MMF:
            a, b, c, d = (t[..., i] for i in range(4))
            return a - (a - b) / (1.0 + (d * x) ** c)
        if family is FunctionFamily.LOG_POWER_REP:
            a, b, c = (t[..., i] for i in range(3))
            return 1.0 / ((1.0 + np.exp(-a)) * (1.0 + np.exp(c) * x ** np.exp(-b)))
    raise ValueError(f"unknown family {family!r}")


def eval_family(
    family: FunctionFamily, params: Sequence[float], x
) -> float | np.ndarray:
    """Evaluate a family at raw abscissae.  Raises CurveDomainError on a
    non-finite result (e.g. log of a non-positive inner term)."""
    p = PARAM_COUNTS[family]
    theta = np.asarray(params, dtype=float)
    if theta.shape != (p,):
        raise ValueError(f"{family.value} takes {p} parameters, got {theta.shape}")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    vals = _raw(family, theta[None, :], xs)[0]
    if not np.all(np.isfinite(vals)):
        raise CurveDomainError(
            f"{family.value} is undefined for params {tuple(theta)} at "
            f"x={xs[~np.isfinite(vals)][:3]}"
        )
    return float(vals[0]) if np.isscalar(x) or np.ndim(x) == 0 else vals


def _grid(*axes: Sequence[float]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


# Deterministic multi-start grids (normalized-x domain).  3 values per
# parameter for the 3- and 4-parameter families (27 / 81 starts); the two
# 2-parameter families use a denser 6x6 grid (36 starts).
START_GRIDS: dict[FunctionFamily, np.ndarray] = {
    FunctionFamily.JANOSCHEK: _grid(
        (0.3, 0.6, 0.9), (0.0, 0.2, 0.4), (0.5, 2.0, 8.0), (0.5, 1.0, 2.0)
    ),
    FunctionFamily.VAPOR_PRESSURE: _grid(
        (-1.0, -0.3, 0.3), (-1.0, -0.1, -0.01), (-0.5, 0.05, 0.5)
    ),
    FunctionFamily.LOG_LOG_LINEAR: _grid(
        (0.02, 0.05, 0.1, 0.2, 0.4, 0.8), (1.0, 1.4, 1.8, 2.2, 2.6, 3.4)
    ),
    FunctionFamily.ILOG2: _grid(
        (0.02, 0.05, 0.1, 0.2, 0.5, 1.0), (0.1, 0.3, 0.5, 0.7, 0.9, 1.2)
    ),
    FunctionFamily.LOG_POWER: _grid(
        (0.3, 0.6, 0.9), (-3.0, -1.2, 0.4), (-2.5, -1.2, -0.5)
    ),
    FunctionFamily.MMF: _grid(
        (0.3, 0.6, 0.9), (0.0, 0.1, 0.3), (0.6, 1.3, 2.6), (0.5, 3.0, 15.0)
    ),
    FunctionFamily.LOG_POWER_REP: _grid(
        (0.0, 1.0, 2.5), (-1.1, 0.0, 1.2), (-3.0, -0.7, 1.6)
    ),
}


def _residuals(
    family: FunctionFamily, theta: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Penalized residuals r = f - y, (R, n); plus per-row penalty flag."""
    f = _raw(family, theta, x)
    bad = ~np.isfinite(f)
    r = f - y
    r[bad] = PENALTY
    return r, bad.any(axis=-1)


def _jacobian(family: FunctionFamily, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Central finite-difference Jacobian of the model values.

    theta: (R, p); x: (R, n) per-row abscissae.  Returns (R, n, p).  The
    constant target cancels in the difference, so only model values are
    probed; non-finite probes are penalty-substituted like the residuals.
    All 2p probes advance through a single stacked family evaluation.
    """
    nrow, p = theta.shape
    h = 1e-6 * np.maximum(np.abs(theta), 1.0)  # per-parameter step
    eye = np.eye(p)
    signs = np.array([1.0, -1.0]).reshape(1, 1, 2, 1)
    probes = (
        theta[:, None, None, :]
        + eye[None, :, None, :] * h[:, None, None, :] * signs
    )  # (R, p, 2, p)
    f = _raw(family, probes.reshape(nrow, 2 * p, p), x[:, None, :])
    f = np.where(np.isfinite(f), f, PENALTY)
    f = f.reshape(nrow, p, 2, -1)
    jac = (f[:, :, 0, :] - f[:, :, 1, :]) / (2.0 * h[:, :, None])
    return np.transpose(jac, (0, 2, 1))


def _solve_damped(a_mat: np.ndarray, g: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """Solve (A + lam*I) delta = -g for a batch of small systems."""
    p = a_mat.shape[-1]
    m = a_mat + (lam[:, None, None] + 1e-12) * np.eye(p)
    try:
        return -np.linalg.solve(m, g[..., None])[..., 0]
    except np.linalg.LinAlgError:
        m = m + 1e-8 * np.eye(p)
        try:
            return -np.linalg.solve(m, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            return -(np.linalg.pinv(m) @ g[..., None])[..., 0]


def _gauss_newton(
    family: FunctionFamily,
    theta0: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    max_iter: int = _MAX_ITER,
    lam0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Damped Gauss-Newton over a batch of independent rows.

    theta0: (R, p) starts; x, y: (R, n) per-row abscissae and targets.
    Returns (theta, rss, ok, lam) where ok marks rows whose final residuals
    are finite and penalty-free; lam is the damping state, so a run can be
    resumed.  Only strictly improving steps are accepted, so every row's
    rss is non-increasing (descent property).
    """
    theta = theta0.astype(float).copy()
    nrow = theta.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        r, _pen = _residuals(family, theta, x, y)
        rss = (r * r).sum(axis=-1)
    lam = np.full(nrow, _DAMP_INIT) if lam0 is None else lam0.copy()
    active = np.ones(nrow, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        t_a, x_a, y_a = theta[idx], x[idx], y[idx]
        jac = _jacobian(family, t_a, x_a)
        jac = np.nan_to_num(jac, nan=0.0, posinf=0.0, neginf=0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            g = np.einsum("rnp,rn->rp", jac, r[idx])
            a_mat = np.einsum("rnp,rnq->rpq", jac, jac)
            delta = _solve_damped(a_mat, g, lam[idx])
            delta = np.nan_to_num(delta, nan=0.0, posinf=0.0, neginf=0.0)
            trial = t_a + delta
            r_t, _ = _residuals(family, trial, x_a, y_a)
            rss_t = (r_t * r_t).sum(axis=-1)
            improved = rss_t < rss[idx]
            rel_gain = (rss[idx] - rss_t) / np.maximum(rss[idx], 1e-300)
        acc = idx[improved]
        theta[acc] = trial[improved]
        r[acc] = r_t[improved]
        rss[acc] = rss_t[improved]
        lam[acc] = np.maximum(lam[acc] / _DAMP_FACTOR, 1e-12)
        rej = idx[~improved]
        lam[rej] *= _DAMP_FACTOR
        # Stop rows: tiny relative improvement, exact zero, or damping blown up.
        active[acc[rel_gain[improved] < _REL_STOP]] = False
        active[idx[rss[idx] <= 1e-300]] = False
        active[rej[lam[rej] > _DAMP_MAX]] = False
    _, pen = _residuals(family, theta, x, y)
    ok = ~pen & np.all(np.isfinite(theta), axis=1) & np.isfinite(rss)
    return theta, rss, ok, lam


def fit_many(
    family: FunctionFamily,
    xs: np.ndarray,
    ys: np.ndarray,
    x_scale: float = X_SCALE,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Fit one family to B curves at once (multi-start per curve).

    xs, ys: (B, n) raw capacities (MFLOPs) and rewards.  All curves must
    share the same point count; rows are independent fits and may have
    different abscissae.  Returns (params (B, p), rss (B,), converged (B,)).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 2 or xs.shape != ys.shape:
        raise ValueError("xs and ys must both be (B, n)")
    nb, n = xs.shape
    p = PARAM_COUNTS[family]
    if n < p:
        raise UnderDeterminedError(
            f"{family.value} needs at least {p} points, got {n}"
        )
    starts = START_GRIDS[family]
    n_starts = starts.shape[0]
    xn = xs / x_scale
    theta0 = np.tile(starts, (nb, 1))
    x_rows = np.repeat(xn, n_starts, axis=0)
    y_rows = np.repeat(ys, n_starts, axis=0)
    # Tournament schedule: all starts advance a short first phase, then only
    # the best few per curve get the remaining iteration budget.  rss is
    # non-increasing per row, and penalized rows score >= 1e12, so the
    # finalists always include every start that could still win.
    theta1, rss1, ok1, lam1 = _gauss_newton(
        family, theta0, x_rows, y_rows, max_iter=_PHASE1_ITER
    )
    if n_starts > _N_FINALISTS:
        order = np.argsort(rss1.reshape(nb, n_starts), axis=1, kind="stable")
        sel = (
            np.arange(nb)[:, None] * n_starts + order[:, :_N_FINALISTS]
        ).ravel()
        n_final = _N_FINALISTS
    else:
        sel = np.arange(nb * n_starts)
        n_final = n_starts
    theta, rss, ok, _lam = _gauss_newton(
        family,
        theta1[sel],
        x_rows[sel],
        y_rows[sel],
        max_iter=_MAX_ITER - _PHASE1_ITER,
        lam0=lam1[sel],
    )
    theta = theta.reshape(nb, n_final, p)
    rss = rss.reshape(nb, n_final)
    ok = ok.reshape(nb, n_final)
    # Best penalty-free finalist per curve; else best overall, unconverged.
    masked = np.where(ok, rss, np.inf)
    has_ok = ok.any(axis=1)
    pick = np.where(has_ok, masked.argmin(axis=1), rss.argmin(axis=1))
    rows = np.arange(nb)
    return theta[rows, pick], rss[rows, pick], has_ok


def fit(
    family: FunctionFamily,
    points: Sequence[CurvePoint],
    x_scale: float = X_SCALE,
) -> FitResult:
    """Least-squares fit of one family to one curve.

    Deterministic: identical inputs give bit-identical results.  Raises
    UnderDeterminedError when there are fewer points than parameters.
    """
    pts = [p if isinstance(p, CurvePoint) else CurvePoint(*p) for p in points]
    xs = np.array([[p.x for p in pts]])
    ys = np.array([[p.y for p in pts]])
    params, rss, conv = fit_many(family, xs, ys, x_scale=x_scale)
    return FitResult(
        family=family,
        params=tuple(float(v) for v in params[0]),
        rss=float(rss[0]),
        converged=bool(conv[0]),
        n_points=len(pts),
        x_scale=x_scale,
    )


def predict_at(fit_result: FitResult, target_mflops: float) -> Prediction:
    """Fitted-curve value at a raw target capacity, clamped to [0, 1].

    Raises UnconvergedFitError for unconverged fits (callers should use
    ``fallback_predict``).
    """
    if not fit_result.converged:
        raise UnconvergedFitError(
            "fit did not converge; use fallback_predict on the raw points"
        )
    if target_mflops <= 0:
        raise ValueError("target capacity must be positive")
    value = eval_family(
        fit_result.family, fit_result.params, target_mflops / fit_result.x_scale
    )
    clamped = not (0.0 <= value <= 1.0)
    return Prediction(value=float(min(1.0, max(0.0, value))), clamped=clamped)


def fallback_predict(
    points: Sequence[CurvePoint], target_mflops: float
) -> Prediction:
    """Piecewise-linear interpolation over the points sorted by capacity,
    with constant extension beyond both ends.  Used when fits fail."""
    pts = sorted(points, key=lambda p: p.x)
    xs = np.array([p.x for p in pts])
    ys = np.array([p.y for p in pts])
    value = float(np.interp(target_mflops, xs, ys))
    return Prediction(value=value, clamped=False, fallback=True)


@dataclass(frozen=True)
class MultiShotEstimate:
    """Reward estimate at the target capacity plus fit diagnostics."""

    estimate: float
    target_mflops: float
    fit_result: FitResult
    points: tuple[CurvePoint, ...]
    clamped: bool
    used_fallback: bool


def multi_shot_eval(
    topology,
    evaluator,
    family: FunctionFamily,
    target_mflops: float,
    threads: int = 1,
) -> MultiShotEstimate:
    """Estimate a topology's reward at the target capacity.

    Queries every supernet of the evaluator once, fits the family to the
    (capacity, reward) points and evaluates the curve at the target.  An
    unconverged fit falls back to flagged piecewise-linear interpolation.
    One-shot failures propagate with the supernet index attached.
    """
    indices = [spec.index for spec in evaluator.supernets]

    def query(i):
        try:
            return evaluator.one_shot(topology, i)
        except Exception as exc:
            raise EvaluationError(i, str(exc)) from exc

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(query, indices))
    else:
        records = [query(i) for i in indices]
    points = tuple(CurvePoint(rec.mflops, rec.reward) for rec in records)
    fit_result = fit(family, points)
    if fit_result.converged:
        pred = predict_at(fit_result, target_mflops)
    else:
        pred = fallback_predict(points, target_mflops)
    return MultiShotEstimate(
        estimate=pred.value,
        target_mflops=target_mflops,
        fit_result=fit_result,
        points=points,
        clamped=pred.clamped,
        used_fallback=pred.fallback,
    )


class MultiShotReward:
    """Callable reward function for controllers, with query accounting."""

    def __init__(
        self,
        evaluator,
        family: FunctionFamily,
        target_mflops: float,
        threads: int = 1,
    ):
        self.evaluator = evaluator
        self.family = family
        self.target_mflops = target_mflops
        self.threads = threads
        self.n_evals = 0
        self.one_shot_queries = 0

    def __call__(self, topology) -> float:
        est = multi_shot_eval(
            topology,
            self.evaluator,
            self.family,
            self.target_mflops,
            threads=self.threads,
        )
        self.n_evals += 1
        self.one_shot_queries += len(est.points)
        return est.estimate
