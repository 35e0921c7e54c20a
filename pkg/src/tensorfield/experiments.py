"""Monte-Carlo trial harness and CSV reports."""

from __future__ import annotations

import csv
import io
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .baselines import spline_fit, spline_predict_grid, tucker_als
from .config import RunConfig
from .recon import (
    NoiseFitResult,
    NoiseSpec,
    ObservationSet,
    SamplingSpec,
    observe,
    reconstruct,
    rmse,
    sample_mask,
)

__all__ = [
    "REPORT_COLUMNS",
    "TrialResult",
    "run_method",
    "run_trial",
    "run_sweep",
    "report_rows",
    "format_report",
    "format_noisefit",
    "thread_cap",
]

REPORT_COLUMNS = ("method", "rho", "sigma", "seed", "rmse", "iters", "wall_seconds", "note")
THREADS_ENV = "TENSORFIELD_THREADS"


@dataclass
class TrialResult:
    method: str
    rho: float
    sigma: float
    seed: int
    rmse: Optional[float] = None
    iters: int = 0
    wall_seconds: float = 0.0
    note: str = ""

    @property
    def ok(self) -> bool:
        return not self.note and self.rmse is not None


def run_method(method: str, obs: ObservationSet, cfg: RunConfig, seed: int, truth=None):
    """Run one reconstruction method; returns ``(x_hat, iters, wall_seconds)``."""
    start = time.perf_counter()
    if method in ("tnn", "tnn_tv"):
        rep = reconstruct(
            obs, cfg.model(obs.shape), cfg.loss_for(method), cfg.optimizer,
            truth=truth, init_seed=seed,
        )
        x_hat, iters = rep.x_hat, rep.iters
    elif method == "tucker_als":
        res = tucker_als(obs, cfg.tucker_als(seed))
        x_hat, iters = res.x, res.n_sweeps
    elif method == "spline":
        model = spline_fit(obs, cfg["spline.green"], cfg["spline.ridge"])
        x_hat, iters = spline_predict_grid(model, obs.shape), 0
    else:
        raise ValueError(f"unknown method {method!r}")
    return x_hat, iters, time.perf_counter() - start


def run_trial(method: str, rho: float, sigma: float, seed: int, truth, cfg: RunConfig) -> TrialResult:
    """Sample, corrupt and reconstruct ``truth`` once; failures become a note."""
    result = TrialResult(method, rho, sigma, seed)
    try:
        mask = sample_mask(truth.shape, SamplingSpec(rho, seed))
        obs = observe(truth, mask, NoiseSpec(sigma, seed), SamplingSpec(rho, seed))
        with np.errstate(over="ignore", invalid="ignore"):
            x_hat, result.iters, result.wall_seconds = run_method(method, obs, cfg, seed)
        if not np.all(np.isfinite(x_hat)):
            raise FloatingPointError("reconstruction contains non-finite values")
        result.rmse = rmse(x_hat, truth)
    except Exception as exc:  # recorded in the report; the sweep carries on
        result.note = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    if not cfg["report.timing"]:
        result.wall_seconds = 0.0
    return result


def thread_cap() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _trial_args(cfg: RunConfig, truth):
    for method in cfg["sweep.methods"]:
        for rho in cfg["sweep.rhos"]:
            for sigma in cfg["sweep.sigmas"]:
                for seed in cfg["sweep.seeds"]:
                    yield (method, rho, sigma, seed, truth, cfg)


def _run_star(args):
    return run_trial(*args)


def run_sweep(truth, cfg: RunConfig, workers: Optional[int] = None) -> list[TrialResult]:
    """Every (method, rho, sigma, seed) trial, sorted canonically."""
    workers = thread_cap() if workers is None else workers
    jobs = list(_trial_args(cfg, truth))
    if workers <= 1:
        results = [run_trial(*job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_star, jobs))
    return sorted(results, key=lambda r: (r.method, r.rho, r.sigma, r.seed))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_rows(results: Sequence[TrialResult]) -> list[dict]:
    """Trial rows, each group followed by its mean row (``seed = mean``)."""
    ordered = sorted(results, key=lambda r: (r.method, r.rho, r.sigma, r.seed))
    rows = []
    group: list[TrialResult] = []

    def flush():
        if not group:
            return
        good = [r for r in group if r.ok]
        head = group[0]
        rows.append({
            "method": head.method,
            "rho": head.rho,
            "sigma": head.sigma,
            "seed": "mean",
            "rmse": float(np.mean([r.rmse for r in good])) if good else None,
            "iters": float(np.mean([r.iters for r in good])) if good else None,
            "wall_seconds": float(np.mean([r.wall_seconds for r in good])) if good else None,
            "note": f"{len(good)}/{len(group)} trials",
        })
        group.clear()

    for r in ordered:
        if group and (r.method, r.rho, r.sigma) != (group[0].method, group[0].rho, group[0].sigma):
            flush()
        group.append(r)
        rows.append({
            "method": r.method, "rho": r.rho, "sigma": r.sigma, "seed": r.seed,
            "rmse": r.rmse, "iters": r.iters, "wall_seconds": r.wall_seconds, "note": r.note,
        })
    flush()
    return rows


def format_report(results: Sequence[TrialResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in report_rows(results):
        writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    return buf.getvalue()


def format_noisefit(result: NoiseFitResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("iteration", "mse_noise", "mse_field", "mse_field_plus_noise"))
    traces = (result.noise, result.field, result.field_plus_noise)
    for i, k in enumerate(result.noise.iterations):
        writer.writerow([k] + [repr(float(t.losses[i])) for t in traces])
    return buf.getvalue()
