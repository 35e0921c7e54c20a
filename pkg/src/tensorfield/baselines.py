"""Comparison methods: biharmonic spline interpolation and masked Tucker-ALS."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.spatial.distance import cdist

from .recon import ObservationSet
from .tensor import ShapeError, _ttm, unvectorize

__all__ = [
    "GREEN_FUNCTIONS",
    "SplineModel",
    "SplineSolveError",
    "spline_fit",
    "spline_predict",
    "spline_predict_grid",
    "TuckerAlsConfig",
    "TuckerAlsResult",
    "tucker_als",
    "tucker_als_complete",
]

log = logging.getLogger(__name__)


def _green_biharmonic3d(r):
    return r


def _green_biharmonic2d(r):
    r = np.asarray(r, dtype=np.float64)
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * (np.log(r[nz]) - 1.0)
    return out


GREEN_FUNCTIONS: dict[str, Callable] = {
    "biharmonic3d": _green_biharmonic3d,
    "biharmonic2d": _green_biharmonic2d,
}

RIDGE_FACTOR = 1e-8
SOLVE_RTOL = 1e-8
_PREDICT_CHUNK = 2048


class SplineSolveError(np.linalg.LinAlgError):
    """The spline weight system could not be solved accurately."""


@dataclass
class SplineModel:
    """Weighted sum of Green functions centred on the sample locations.

    ``offset`` is the mean of the fitted values; it is removed before solving
    for the weights and added back on prediction.
    """

    sample_indices: np.ndarray
    weights: np.ndarray
    green: str = "biharmonic3d"
    ridge: float = 0.0
    offset: float = 0.0

    def green_fn(self) -> Callable:
        return GREEN_FUNCTIONS[self.green]


def _default_ridge(gram: np.ndarray) -> float:
    n = gram.shape[0]
    scale = np.trace(gram) / n
    if scale <= 0:
        # distance kernels vanish on the diagonal
        scale = np.abs(gram).mean()
    return RIDGE_FACTOR * scale if scale > 0 else RIDGE_FACTOR


def _observed_points(obs: ObservationSet):
    flat = np.flatnonzero(obs.o.ravel(order="F") == 1)
    idx = np.stack(np.unravel_index(flat, obs.shape, order="F"), axis=1)
    values = obs.y.ravel(order="F")[flat]
    return idx.astype(np.float64), values


def spline_fit(obs: ObservationSet, green: str = "biharmonic3d", ridge=None, center: bool = True) -> SplineModel:
    """Solve ``(G + ridge I) w = y_obs`` with ``G[n, k] = g(|i_n - i_k|)``.

    ``ridge=None`` picks ``1e-8`` times the mean diagonal of ``G`` (or its
    mean absolute entry when the diagonal is zero).
    """
    if green not in GREEN_FUNCTIONS:
        raise ValueError(f"unknown Green function {green!r}; expected one of {sorted(GREEN_FUNCTIONS)}")
    pts, values = _observed_points(obs)
    if len(values) == 0:
        raise ValueError("spline fit needs at least one observation")
    offset = float(values.mean()) if center else 0.0
    rhs = values - offset
    gram = GREEN_FUNCTIONS[green](cdist(pts, pts))
    if ridge is None:
        ridge = _default_ridge(gram)
    system = gram + ridge * np.eye(len(values))
    try:
        w = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise SplineSolveError(
            f"spline system is singular (N={len(values)}, cond={np.linalg.cond(system):.3e})"
        ) from exc
    resid = np.linalg.norm(system @ w - rhs)
    bound = SOLVE_RTOL * max(np.linalg.norm(rhs), np.finfo(float).tiny)
    if not np.all(np.isfinite(w)) or resid > bound:
        raise SplineSolveError(
            f"spline solve residual {resid:.3e} exceeds {bound:.3e} "
            f"(N={len(values)}, cond={np.linalg.cond(system):.3e})"
        )
    return SplineModel(pts, w, green, float(ridge), offset)


def spline_predict(model: SplineModel, index: Sequence[float]) -> float:
    """Evaluate the spline at one grid coordinate (0-based, may be fractional)."""
    point = np.asarray(index, dtype=np.float64).reshape(1, 3)
    r = cdist(point, model.sample_indices)[0]
    return float(model.green_fn()(r) @ model.weights + model.offset)


def spline_predict_grid(model: SplineModel, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    grid = np.stack(np.unravel_index(np.arange(int(np.prod(shape))), shape, order="F"), axis=1)
    grid = grid.astype(np.float64)
    g = model.green_fn()
    out = np.empty(len(grid))
    for start in range(0, len(grid), _PREDICT_CHUNK):
        block = grid[start : start + _PREDICT_CHUNK]
        out[start : start + len(block)] = g(cdist(block, model.sample_indices)) @ model.weights
    return unvectorize(out + model.offset, shape)


@dataclass(frozen=True)
class TuckerAlsConfig:
    core_dims: tuple[int, int, int] = (7, 8, 8)
    max_sweeps: int = 100
    tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        dims = tuple(int(d) for d in self.core_dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"core_dims must be 3 positive ints, got {self.core_dims}")
        object.__setattr__(self, "core_dims", dims)
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")


@dataclass
class TuckerAlsResult:
    x: np.ndarray
    core: np.ndarray
    factors: list[np.ndarray]
    residuals: list[float] = field(default_factory=list)
    n_sweeps: int = 0
    frozen_rows: list[tuple[int, int]] = field(default_factory=list)


def _compose(core, factors):
    return _ttm(_ttm(_ttm(core, factors[0], 0), factors[1], 1), factors[2], 2)


def _masked_residual(y, o, x) -> float:
    r = o * (y - x)
    return float(np.dot(r.ravel(), r.ravel()))


def _solve_core(y, o, factors, core_dims) -> np.ndarray:
    i, j, k = np.nonzero(o)
    u1, u2, u3 = factors
    # rows of kron(U3, U2, U1) restricted to observed entries, matching F-order vec(core)
    design = (u3[k][:, :, None, None] * u2[j][:, None, :, None] * u1[i][:, None, None, :])
    design = design.reshape(len(i), -1)
    coef, *_ = np.linalg.lstsq(design, y[i, j, k], rcond=None)
    return unvectorize(coef, core_dims)


def _update_factor(y, o, core, factors, mode, frozen):
    others = [m for m in range(3) if m != mode]
    # basis for mode-`mode` rows: core times the other two factors
    basis = core
    for m in others:
        basis = _ttm(basis, factors[m], m)
    basis = np.moveaxis(basis, mode, 0).reshape(core.shape[mode], -1)
    y_m = np.moveaxis(y, mode, 0).reshape(y.shape[mode], -1)
    o_m = np.moveaxis(o, mode, 0).reshape(o.shape[mode], -1) == 1
    u = factors[mode].copy()
    for row in range(u.shape[0]):
        seen = o_m[row]
        if not seen.any():
            frozen.add((mode + 1, row))
            continue
        u[row], *_ = np.linalg.lstsq(basis[:, seen].T, y_m[row, seen], rcond=None)
    # move the scale into the core; the composed tensor is unchanged
    q, r = np.linalg.qr(u)
    factors[mode] = q
    return _ttm(core, r, mode)


def tucker_als(obs: ObservationSet, cfg: TuckerAlsConfig) -> TuckerAlsResult:
    """Masked alternating least squares for a Tucker model.

    Each sweep re-solves every factor row against that row's observed
    entries, then the whole core against all observed entries. Each block
    step is an exact least-squares solve, so the masked residual never
    increases.
    """
    y, o = obs.y, obs.o
    if obs.n_observed == 0:
        raise ValueError("Tucker-ALS needs at least one observation")
    for r, n in zip(cfg.core_dims, obs.shape):
        if r > n:
            raise ShapeError(f"core dims {cfg.core_dims} exceed field shape {obs.shape}")
    rng = np.random.default_rng([int(cfg.seed), 3])
    factors = [np.linalg.qr(rng.normal(size=(n, r)))[0] for n, r in zip(obs.shape, cfg.core_dims)]
    core = _solve_core(y, o, factors, cfg.core_dims)
    residuals = [_masked_residual(y, o, _compose(core, factors))]

    frozen: set = set()
    sweeps = 0
    for sweeps in range(1, cfg.max_sweeps + 1):
        for mode in range(3):
            core = _update_factor(y, o, core, factors, mode, frozen)
        core = _solve_core(y, o, factors, cfg.core_dims)
        residuals.append(_masked_residual(y, o, _compose(core, factors)))
        prev, cur = residuals[-2], residuals[-1]
        if abs(prev - cur) <= cfg.tol * max(prev, np.finfo(float).tiny):
            break

    if frozen:
        warnings.warn(
            f"Tucker-ALS: {len(frozen)} factor rows have no observations and were left at "
            "their initial values",
            RuntimeWarning,
            stacklevel=2,
        )
    return TuckerAlsResult(
        x=_compose(core, factors),
        core=core,
        factors=factors,
        residuals=residuals,
        n_sweeps=sweeps,
        frozen_rows=sorted(frozen),
    )


def tucker_als_complete(obs: ObservationSet, cfg: TuckerAlsConfig) -> np.ndarray:
    return tucker_als(obs, cfg).x
