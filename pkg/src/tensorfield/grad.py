"""Masked reconstruction loss and its reverse-mode gradient through a TNN.

The objective is ``||O * (Y - X)||_F^2 + lam * TV(X)`` where ``X`` is the
network output. Gradients are propagated layer by layer using unfoldings:
for ``Z = X_in x1 W1 x2 W2 x3 W3`` and upstream adjoint ``D = dL/dZ``,

    dL/dWk   = D_(k) @ (X_in x_{i != k} W_i)_(k).T
    dL/dX_in = D x1 W1.T x2 W2.T x3 W3.T
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelConfig, TnnParams, forward_with_cache
from .tensor import ShapeError, _ttm

__all__ = [
    "LossSpec",
    "GradientSet",
    "tv",
    "tv_subgradient",
    "objective",
    "loss",
    "backward",
]

REGULARIZERS = ("none", "tv")

# Gradients share the parameter container layout.
GradientSet = TnnParams


@dataclass(frozen=True)
class LossSpec:
    lam: float = 0.0
    regularizer: str = "none"

    def __post_init__(self):
        if self.regularizer not in REGULARIZERS:
            raise ValueError(
                f"unknown regularizer {self.regularizer!r}; expected one of {REGULARIZERS}"
            )
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")

    @property
    def active(self) -> bool:
        return self.regularizer != "none" and self.lam > 0


def tv(x) -> float:
    """Anisotropic total variation: sum of |forward differences| along each mode.

    Differences that would index past the last slice are omitted.
    """
    x = np.asarray(x, dtype=np.float64)
    return float(sum(np.abs(np.diff(x, axis=a)).sum() for a in range(3)))


def tv_subgradient(x) -> np.ndarray:
    """Subgradient of :func:`tv` using ``sign(0) = 0``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    n = x.shape
    for a in range(3):
        s = np.sign(np.diff(x, axis=a))
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[a] = slice(0, n[a] - 1)
        hi[a] = slice(1, n[a])
        g[tuple(lo)] -= s
        g[tuple(hi)] += s
    return g


def _check_data(x_shape, y, o):
    y = np.asarray(y, dtype=np.float64)
    o = np.asarray(o, dtype=np.float64)
    if y.shape != tuple(x_shape) or o.shape != tuple(x_shape):
        raise ShapeError(
            f"observation shapes {y.shape} / mask {o.shape} do not match model output {tuple(x_shape)}"
        )
    return y, o


def objective(x, y, o, spec: LossSpec) -> float:
    """Loss value for a given network output ``x``.

    Only observed entries enter the data term, so ``y`` may hold anything
    where ``o`` is 0.
    """
    resid = o * (y - x)
    value = float(np.dot(resid.ravel(), resid.ravel()))
    if spec.active:
        value += spec.lam * tv(x)
    return value


def loss(params: TnnParams, config: ModelConfig, y, o, spec: LossSpec) -> float:
    _, _, outs = forward_with_cache(params, config)
    x = outs[-1]
    y, o = _check_data(x.shape, y, o)
    return objective(x, y, o, spec)


def backward(params: TnnParams, config: ModelConfig, y, o, spec: LossSpec):
    """Loss and its gradient with respect to every parameter.

    Returns
    -------
    (float, GradientSet)
    """
    inputs, pre, outs = forward_with_cache(params, config)
    x = outs[-1]
    y, o = _check_data(x.shape, y, o)
    value = objective(x, y, o, spec)

    adj = -2.0 * o * (o * (y - x))
    if spec.active:
        adj = adj + spec.lam * tv_subgradient(x)

    grads = [None] * config.n_layers
    for l in reversed(range(config.n_layers)):
        w1, w2, w3 = params.factors[l]
        act = config.layers[l].activation
        delta = adj * act.derivative(pre[l], outs[l])
        xin = inputs[l]
        a1 = _ttm(xin, w1, 0)
        p1 = _ttm(_ttm(xin, w2, 1), w3, 2)
        p2 = _ttm(a1, w3, 2)
        p3 = _ttm(a1, w2, 1)
        n1, n2, n3 = delta.shape
        g1 = delta.reshape(n1, -1) @ p1.reshape(p1.shape[0], -1).T
        g2 = np.matmul(delta, p2.transpose(0, 2, 1)).sum(axis=0)
        g3 = delta.reshape(-1, n3).T @ p3.reshape(-1, p3.shape[2])
        grads[l] = (g1, g2, g3)
        adj = _ttm(_ttm(_ttm(delta, w1.T, 0), w2.T, 1), w3.T, 2)

    return value, TnnParams(adj, grads)
