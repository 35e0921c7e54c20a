"""End-to-end field reconstruction and its diagnostics.

Observed values are mapped affinely onto [-0.9, 0.9] before fitting so
the tanh output layer can reach them; reconstructions are mapped back to
physical units. Measurement noise is added in physical units.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .grad import LossSpec
from .model import ModelConfig, TnnParams, init_params, param_count, tnn_forward
from .optim import OptimizerConfig, TrainTrace, fit
from .tensor import ShapeError, as_tensor3, frobenius_norm_sq, inner_product

__all__ = [
    "SamplingSpec",
    "NoiseSpec",
    "ObservationSet",
    "Normalization",
    "ErrorDecomposition",
    "ReconReport",
    "NoiseFitResult",
    "sample_count",
    "sample_mask",
    "observe",
    "rmse",
    "reconstruct",
    "decompose",
    "error_decomposition",
    "prop1_bound",
    "noise_residual",
    "noise_fit_experiment",
]

NORM_HALF_RANGE = 0.9

# Independent random streams derived from a single integer seed.
MASK_STREAM, NOISE_STREAM = 0, 1


@dataclass(frozen=True)
class SamplingSpec:
    rho: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError(f"sampling ratio must lie in (0, 1], got {self.rho}")


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"noise sigma must be finite and >= 0, got {self.sigma}")


@dataclass
class ObservationSet:
    y: np.ndarray
    o: np.ndarray
    sampling: Optional[SamplingSpec] = None
    noise: Optional[NoiseSpec] = None

    def __post_init__(self):
        self.y = as_tensor3(self.y, "observations")
        self.o = as_tensor3(self.o, "mask")
        if self.y.shape != self.o.shape:
            raise ShapeError(f"observation shape {self.y.shape} != mask shape {self.o.shape}")
        if not np.all((self.o == 0) | (self.o == 1)):
            raise ValueError("mask entries must be 0 or 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.y.shape

    @property
    def n_observed(self) -> int:
        return int(self.o.sum())

    @property
    def rho(self) -> float:
        return self.n_observed / self.o.size

    def observed_values(self) -> np.ndarray:
        return self.y[self.o == 1]


@dataclass(frozen=True)
class Normalization:
    """Affine map ``x -> (x - mean) * scale``."""

    mean: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("normalization scale must be positive")

    @classmethod
    def from_values(cls, values, half_range: float = NORM_HALF_RANGE) -> "Normalization":
        """Map the span of ``values`` onto ``[-half_range, half_range]``."""
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ValueError("cannot normalize an empty set of values")
        lo, hi = float(values.min()), float(values.max())
        half = 0.5 * (hi - lo)
        scale = half_range / half if half > 0 else 1.0
        # a subnormal spread would overflow the scale; treat it as constant
        return cls(0.5 * (hi + lo), scale if np.isfinite(scale) else 1.0)

    def normalize(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) * self.scale

    def denormalize(self, z):
        return np.asarray(z, dtype=np.float64) / self.scale + self.mean


@dataclass
class ErrorDecomposition:
    E: float
    E1: float
    E2: float
    eps: float
    notes: list[str] = field(default_factory=list)

    @property
    def residual(self) -> float:
        return self.E - (self.E1 + self.E2 + self.eps)

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / max(self.E, 1e-12)


@dataclass
class ReconReport:
    x_hat: np.ndarray
    trace: TrainTrace
    params: TnnParams
    normalization: Normalization
    config: dict
    rmse: Optional[float] = None
    wall_seconds: float = 0.0
    decomposition: Optional[ErrorDecomposition] = None

    @property
    def iters(self) -> int:
        return self.trace.n_iters


def sample_count(shape: Sequence[int], rho: float) -> int:
    total = int(np.prod(shape))
    n = int(round(rho * total))
    if not 1 <= n <= total:
        raise ValueError(f"rho={rho} gives {n} samples on a grid of {total}")
    return n


def sample_mask(shape: Sequence[int], spec: SamplingSpec) -> np.ndarray:
    """Binary mask with exactly ``round(rho * T)`` ones, uniform without replacement."""
    shape = tuple(int(s) for s in shape)
    n = sample_count(shape, spec.rho)
    rng = np.random.default_rng([int(spec.seed), MASK_STREAM])
    order = rng.permutation(int(np.prod(shape)))
    flat = np.zeros(int(np.prod(shape)))
    flat[order[:n]] = 1.0
    return flat.reshape(shape, order="F")


def observe(x, mask, noise: NoiseSpec = NoiseSpec(), sampling: Optional[SamplingSpec] = None) -> ObservationSet:
    """``y = mask * (x + e)`` with ``e ~ N(0, sigma^2)`` drawn only where observed."""
    x = as_tensor3(x, "field")
    mask = as_tensor3(mask, "mask")
    if x.shape != mask.shape:
        raise ShapeError(f"field shape {x.shape} != mask shape {mask.shape}")
    y = np.zeros_like(x)
    hit = mask == 1
    y[hit] = x[hit]
    if noise.sigma > 0:
        rng = np.random.default_rng([int(noise.seed), NOISE_STREAM])
        y[hit] += rng.normal(0.0, noise.sigma, size=int(hit.sum()))
    return ObservationSet(y, mask, sampling, noise)


def rmse(x_hat, x) -> float:
    x_hat = as_tensor3(x_hat, "x_hat")
    x = as_tensor3(x, "x")
    if x_hat.shape != x.shape:
        raise ShapeError(f"rmse: shape mismatch {x_hat.shape} vs {x.shape}")
    return float(np.sqrt(frobenius_norm_sq(x_hat - x) / x.size))


def _config_echo(model: ModelConfig, loss_spec: LossSpec, opt: OptimizerConfig) -> dict:
    return {
        "core_dims": model.core_dims,
        "layers": [(l.out_dims, str(l.activation)) for l in model.layers],
        "n_params": param_count(model),
        "lambda": loss_spec.lam,
        "regularizer": loss_spec.regularizer,
        "optimizer": opt.method,
        "learning_rate": opt.learning_rate,
        "max_iters": opt.max_iters,
    }


def _fit_normalized(obs: ObservationSet, model: ModelConfig, norm: Normalization,
                    loss_spec: LossSpec, opt: OptimizerConfig, params0: TnnParams):
    y_n = obs.o * norm.normalize(obs.y)
    return fit(params0, model, y_n, obs.o, loss_spec, opt)


def reconstruct(
    obs: ObservationSet,
    model: ModelConfig,
    loss_spec: LossSpec = LossSpec(),
    opt: OptimizerConfig = OptimizerConfig(),
    truth=None,
    init_seed: int = 0,
    params0: Optional[TnnParams] = None,
) -> ReconReport:
    """Fit a TNN to the observations and return the denormalized field."""
    if model.output_shape != obs.shape:
        raise ShapeError(f"model output {model.output_shape} != observation grid {obs.shape}")
    if obs.n_observed == 0:
        raise ValueError("mask has no observed entries; nothing to fit")
    start = time.perf_counter()
    norm = Normalization.from_values(obs.observed_values())
    if params0 is None:
        params0 = init_params(model, init_seed)
    params, trace = _fit_normalized(obs, model, norm, loss_spec, opt, params0)
    x_hat = norm.denormalize(tnn_forward(params, model))
    report = ReconReport(
        x_hat=x_hat,
        trace=trace,
        params=params,
        normalization=norm,
        config=_config_echo(model, loss_spec, opt),
        wall_seconds=time.perf_counter() - start,
    )
    if truth is not None:
        report.rmse = rmse(x_hat, truth)
    return report


def decompose(x, d_star, d_hat) -> ErrorDecomposition:
    """Split ``||x - d_hat||^2`` into representation, identification and cross terms."""
    x, d_star, d_hat = (as_tensor3(t) for t in (x, d_star, d_hat))
    rep = x - d_star
    ident = d_star - d_hat
    return ErrorDecomposition(
        E=frobenius_norm_sq(x - d_hat),
        E1=frobenius_norm_sq(rep),
        E2=frobenius_norm_sq(ident),
        eps=2.0 * inner_product(rep, ident),
    )


def _stalled(trace: TrainTrace) -> bool:
    return not trace.final_loss < trace.initial_loss


def error_decomposition(
    x,
    model: ModelConfig,
    loss_spec: LossSpec,
    opt: OptimizerConfig,
    obs: ObservationSet,
    init_seed: int = 0,
    warm_start: bool = False,
    hat_iters: Optional[int] = None,
) -> ErrorDecomposition:
    """Decompose the reconstruction error of a TNN fit against ground truth ``x``.

    The best-representation parameters are approximated by fitting the
    fully observed field with the same optimizer budget. Both fits share
    the normalization derived from ``obs`` so they describe one model class.

    ``warm_start`` starts the observation fit from the full-field optimum;
    ``hat_iters`` overrides its iteration budget, and 0 skips it.
    """
    x = as_tensor3(x, "ground truth")
    if x.shape != obs.shape:
        raise ShapeError(f"ground truth {x.shape} != observation grid {obs.shape}")
    norm = Normalization.from_values(obs.observed_values())
    full = np.ones_like(x)
    p0 = init_params(model, init_seed)
    star, star_trace = fit(p0, model, norm.normalize(x), full, LossSpec(), opt)

    notes = []
    if _stalled(star_trace):
        notes.append("full-field fit made no progress")
    start = star if warm_start else p0
    if hat_iters == 0:
        hat = start.copy()
    else:
        hat_opt = opt if hat_iters is None else _with_iters(opt, hat_iters)
        hat, hat_trace = _fit_normalized(obs, model, norm, loss_spec, hat_opt, start)
        if not warm_start and _stalled(hat_trace):
            notes.append("observation fit made no progress")

    result = decompose(
        x,
        norm.denormalize(tnn_forward(star, model)),
        norm.denormalize(tnn_forward(hat, model)),
    )
    result.notes = notes
    return result


def _with_iters(opt: OptimizerConfig, iters: int) -> OptimizerConfig:
    return replace(opt, max_iters=int(iters))


def prop1_bound(R: int, T: int) -> float:
    """Noise-rejection factor ``1 - 10 R / T`` for a one-layer ReLU TNN.

    With high probability the best fit of such a model to i.i.d. Gaussian
    noise ``E`` leaves a residual of at least this fraction of ``||E||^2``.
    """
    if R < 1 or T < 1:
        raise ValueError("R and T must be >= 1")
    return 1.0 - 10.0 * R / T


@dataclass
class NoiseFitResult:
    """MSE traces for fits to noise, the clean field and the noisy field.

    ``field_plus_noise`` is tracked against the clean field, i.e. it shows
    how much of the noise leaked into the fit.
    """

    noise: TrainTrace
    field: TrainTrace
    field_plus_noise: TrainTrace
    noise_energy: float
    noise_residual: float
    n_entries: int


def _mse_trace(trace: TrainTrace, n: int) -> TrainTrace:
    return TrainTrace(
        iterations=list(trace.iterations),
        losses=[v / n for v in trace.losses],
        n_iters=trace.n_iters,
        stop_reason=trace.stop_reason,
        initial_loss=trace.initial_loss / n,
    )


def noise_residual(model: ModelConfig, opt: OptimizerConfig, sigma: float, seed: int = 0):
    """Fit ``model`` to pure Gaussian noise.

    Returns ``(residual, noise_energy, trace)`` with ``residual`` the final
    ``||X - E||_F^2``.
    """
    shape = model.output_shape
    rng = np.random.default_rng([int(seed), NOISE_STREAM])
    noise = rng.normal(0.0, sigma, size=shape)
    full = np.ones(shape)
    params, trace = fit(init_params(model, seed), model, noise, full, LossSpec(), opt)
    resid = frobenius_norm_sq(tnn_forward(params, model) - noise)
    return resid, frobenius_norm_sq(noise), trace


def noise_fit_experiment(
    model: ModelConfig,
    opt: OptimizerConfig,
    sigma: float,
    field_values,
    seed: int = 0,
) -> NoiseFitResult:
    """Fit the same architecture to noise, to the field, and to field + noise.

    The field is normalized onto [-0.9, 0.9]; noise with std ``sigma`` is in
    those normalized units. All fits are fully observed with no regularizer.
    """
    field_values = as_tensor3(field_values, "field")
    model = model.with_output_shape(field_values.shape)
    n = field_values.size
    clean = Normalization.from_values(field_values).normalize(field_values)
    full = np.ones_like(clean)

    resid, energy, noise_trace = noise_residual(model, opt, sigma, seed)
    rng = np.random.default_rng([int(seed), NOISE_STREAM])
    noise = rng.normal(0.0, sigma, size=clean.shape)

    p0 = init_params(model, seed)
    _, field_trace = fit(p0, model, clean, full, LossSpec(), opt)

    leak = TrainTrace()

    def track(k, params):
        leak.record(k, frobenius_norm_sq(tnn_forward(params, model) - clean) / n)

    _, noisy_trace = fit(p0, model, clean + noise, full, LossSpec(), opt, on_record=track)
    leak.n_iters = noisy_trace.n_iters
    leak.stop_reason = noisy_trace.stop_reason
    leak.initial_loss = frobenius_norm_sq(tnn_forward(p0, model) - clean) / n

    return NoiseFitResult(
        noise=_mse_trace(noise_trace, n),
        field=_mse_trace(field_trace, n),
        field_plus_noise=leak,
        noise_energy=energy,
        noise_residual=resid,
        n_entries=n,
    )
