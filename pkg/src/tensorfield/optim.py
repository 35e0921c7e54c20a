"""First-order optimizers and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grad import LossSpec, backward
from .model import ModelConfig, TnnParams

__all__ = [
    "OptimizerConfig",
    "TrainTrace",
    "AdamState",
    "NonFiniteLossError",
    "gd_step",
    "adam_step",
    "fit",
]

log = logging.getLogger(__name__)

METHODS = ("gd", "adam")


class NonFiniteLossError(FloatingPointError):
    """The objective became NaN or infinite during training."""

    def __init__(self, iteration: int, value: float):
        super().__init__(f"non-finite loss {value!r} at iteration {iteration}")
        self.iteration = iteration
        self.value = value


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    learning_rate: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_iters: int = 15000
    stop_threshold: float = 0.0
    record_every: int = 50

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown optimizer {self.method!r}; expected one of {METHODS}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.stop_threshold >= 0:
            raise ValueError("stop_threshold must be >= 0")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise ValueError("adam requires 0 <= beta1, beta2 < 1 and eps > 0")


@dataclass
class TrainTrace:
    iterations: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    n_iters: int = 0
    stop_reason: str = ""
    initial_loss: float = float("nan")

    def record(self, k: int, value: float) -> None:
        self.iterations.append(k)
        self.losses.append(value)

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else self.initial_loss

    def __len__(self) -> int:
        return len(self.iterations)


def gd_step(params: TnnParams, grads: TnnParams, lr: float) -> TnnParams:
    """Plain gradient step ``theta - lr * grad`` (returns new params)."""
    return TnnParams.from_arrays([p - lr * g for p, g in zip(params, grads)])


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: TnnParams) -> "AdamState":
        return cls([np.zeros_like(a) for a in params], [np.zeros_like(a) for a in params])


def adam_step(
    state: AdamState,
    params: TnnParams,
    grads: TnnParams,
    lr: float,
    t: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """One bias-corrected Adam update at step ``t`` (1-based).

    Returns ``(state, params)``; the inputs are not modified.
    """
    if t < 1:
        raise ValueError("adam step index t must be >= 1")
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    new_m, new_v, new_p = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        new_p.append(p - lr * (m / bc1) / (np.sqrt(v / bc2) + eps))
        new_m.append(m)
        new_v.append(v)
    return AdamState(new_m, new_v, t), TnnParams.from_arrays(new_p)


def _adam_inplace(state: AdamState, params: list, grads: list, opt: OptimizerConfig) -> None:
    # Same recurrence as adam_step, without reallocating every array.
    state.t += 1
    b1, b2 = opt.beta1, opt.beta2
    step = opt.learning_rate / (1.0 - b1**state.t)
    inv_bc2 = 1.0 / (1.0 - b2**state.t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= step * m / (np.sqrt(v * inv_bc2) + opt.eps)


def fit(
    params0: TnnParams,
    config: ModelConfig,
    y,
    o,
    loss_spec: LossSpec,
    opt: OptimizerConfig = OptimizerConfig(),
    on_record=None,
):
    """Minimize the masked objective from ``params0``.

    Runs until ``max_iters`` updates have been made, or, when
    ``stop_threshold > 0``, until one update changes the loss by at most
    that amount. A threshold of 0 always runs the full budget.

    ``on_record(k, params)`` is called whenever the trace records a point.

    Returns
    -------
    (TnnParams, TrainTrace)
    """
    params = params0.copy()
    arrays = params.arrays()
    y = np.asarray(y, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    state = AdamState.zeros(params) if opt.method == "adam" else None

    trace = TrainTrace()
    value, grads = backward(params, config, y, o, loss_spec)
    if not np.isfinite(value):
        raise NonFiniteLossError(0, value)
    trace.initial_loss = value

    k = 0
    stop = "max_iters"
    while k < opt.max_iters:
        if state is not None:
            _adam_inplace(state, arrays, grads.arrays(), opt)
        else:
            for p, g in zip(arrays, grads.arrays()):
                p -= opt.learning_rate * g
        k += 1
        new_value, grads = backward(params, config, y, o, loss_spec)
        if not np.isfinite(new_value):
            raise NonFiniteLossError(k, new_value)
        change = new_value - value
        value = new_value
        converged = opt.stop_threshold > 0 and abs(change) <= opt.stop_threshold
        if k % opt.record_every == 0 or converged or k == opt.max_iters:
            trace.record(k, value)
            if on_record is not None:
                on_record(k, params)
        if converged:
            stop = "threshold"
            break

    trace.n_iters = k
    trace.stop_reason = stop
    log.debug("fit stopped after %d iterations (%s), loss %.6g", k, stop, value)
    return params, trace
