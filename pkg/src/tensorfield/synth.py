"""Synthetic 3-D sound speed fields.

Mode 3 is depth (10 m spacing); modes 1 and 2 are horizontal. A field is
the sum of three anomalies, each scaled to unit standard deviation before
weighting:

* a Munk-type canonical profile (depth only),
* a smooth random perturbation of multilinear rank (4, 4, 4),
* two tilted, rotated mesoscale eddies, which are not separable along the
  grid axes.

The summed anomaly is rescaled to ``TARGET_STD`` m/s and offset by
``C0`` m/s.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import tucker_compose

__all__ = ["synthetic_field", "munk_profile", "low_rank_field", "C0", "TARGET_STD"]

C0 = 1500.0
TARGET_STD = 2.0
DEPTH_STEP = 10.0

MUNK_WEIGHT = 1.0
PERTURB_WEIGHT = 0.6
EDDY_WEIGHT = 0.8
PERTURB_RANK = (4, 4, 4)
N_EDDIES = 2


def munk_profile(depth, axis_depth: float = 1300.0, width: float = 1300.0, eps: float = 0.00737):
    """Canonical Munk profile ``C0 (1 + eps (eta - 1 + exp(-eta)))``."""
    eta = 2.0 * (np.asarray(depth, dtype=np.float64) - axis_depth) / width
    return C0 * (1.0 + eps * (eta - 1.0 + np.exp(-eta)))


def _smooth_columns(rng: np.random.Generator, n: int, r: int, n_freq: int = 4) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    cols = np.empty((n, r))
    for j in range(r):
        amp = rng.normal(size=n_freq) / (1.0 + np.arange(n_freq))
        phase = rng.uniform(0, 2 * np.pi, size=n_freq)
        cols[:, j] = sum(a * np.cos(np.pi * f * s + p) for f, (a, p) in enumerate(zip(amp, phase)))
    return cols


def low_rank_field(shape: Sequence[int], rank: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    """Random Tucker tensor with smooth factor columns."""
    core = rng.normal(size=tuple(rank))
    factors = [_smooth_columns(rng, n, r) for n, r in zip(shape, rank)]
    return tucker_compose(core, *factors)


def _eddy(shape, rng: np.random.Generator) -> np.ndarray:
    i_n, j_n, k_n = shape
    ii, jj, kk = np.meshgrid(
        np.arange(i_n, dtype=float), np.arange(j_n, dtype=float), np.arange(k_n, dtype=float),
        indexing="ij",
    )
    cx = rng.uniform(0.3, 0.7) * (i_n - 1)
    cy = rng.uniform(0.3, 0.7) * (j_n - 1)
    # the eddy core drifts horizontally with depth
    drift = rng.uniform(-0.25, 0.25, size=2) * np.array([i_n, j_n])
    depth_frac = kk / max(k_n - 1, 1)
    dx = ii - (cx + drift[0] * depth_frac)
    dy = jj - (cy + drift[1] * depth_frac)
    theta = rng.uniform(0, np.pi)
    u = np.cos(theta) * dx + np.sin(theta) * dy
    v = -np.sin(theta) * dx + np.cos(theta) * dy
    a, b = rng.uniform(0.12, 0.25, size=2) * min(i_n, j_n)
    zc = rng.uniform(0.1, 0.5) * (k_n - 1)
    zs = rng.uniform(0.25, 0.5) * k_n
    sign = rng.choice([-1.0, 1.0])
    return sign * np.exp(-0.5 * ((u / a) ** 2 + (v / b) ** 2) - 0.5 * ((kk - zc) / zs) ** 2)


def _unit(x: np.ndarray) -> np.ndarray:
    x = x - x.mean()
    std = x.std()
    return x / std if std > 0 else x


def synthetic_field(seed: int = 0, shape: Sequence[int] = (20, 20, 20)) -> np.ndarray:
    """Deterministic synthetic sound speed field in m/s."""
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 2:
        raise ValueError(f"field shape must be 3 sizes >= 2, got {shape}")
    rng = np.random.default_rng([int(seed), 7])

    depth = DEPTH_STEP * np.arange(shape[2])
    munk = np.broadcast_to(munk_profile(depth), shape)
    rank = tuple(min(r, n) for r, n in zip(PERTURB_RANK, shape))
    perturb = low_rank_field(shape, rank, rng)
    eddies = sum(_eddy(shape, rng) for _ in range(N_EDDIES))

    anomaly = (
        MUNK_WEIGHT * _unit(np.array(munk))
        + PERTURB_WEIGHT * _unit(perturb)
        + EDDY_WEIGHT * _unit(eddies)
    )
    return C0 + TARGET_STD * _unit(anomaly)
