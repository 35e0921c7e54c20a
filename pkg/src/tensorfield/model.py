"""Tensor neural network: stacked tensor contraction layers on a learned core."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .tensor import ShapeError, _ttm, as_tensor3, tucker_compose

__all__ = [
    "Activation",
    "LayerSpec",
    "ModelConfig",
    "TnnParams",
    "default_config",
    "tucker_config",
    "tcl_forward",
    "tnn_forward",
    "forward_with_cache",
    "collapse_linear_tnn",
    "param_count",
    "init_params",
]

ACTIVATION_KINDS = ("relu", "tanh", "linear")


@dataclass(frozen=True)
class Activation:
    """Elementwise activation: ``relu``, ``tanh`` or ``linear`` (``x -> scale * x``)."""

    kind: str = "linear"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ValueError(
                f"unknown activation {self.kind!r}; expected one of {ACTIVATION_KINDS}"
            )
        if not np.isfinite(self.scale):
            raise ValueError("linear activation scale must be finite")

    @classmethod
    def parse(cls, text: str) -> "Activation":
        """Parse ``relu``, ``tanh``, ``linear`` or ``linear:<scale>``."""
        text = text.strip().lower()
        if text.startswith("linear"):
            _, _, scale = text.partition(":")
            return cls("linear", float(scale) if scale else 1.0)
        return cls(text)

    def __str__(self) -> str:
        if self.kind == "linear" and self.scale != 1.0:
            return f"linear:{self.scale!r}"
        return self.kind

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.kind == "relu":
            return np.maximum(z, 0.0)
        if self.kind == "tanh":
            return np.tanh(z)
        return self.scale * z

    def derivative(self, z: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Elementwise derivative at ``z``; ``out`` is ``self(z)`` if already known.

        The ReLU derivative at exactly zero is taken as 0.
        """
        if self.kind == "relu":
            return (z > 0.0).astype(np.float64)
        if self.kind == "tanh":
            t = np.tanh(z) if out is None else out
            return 1.0 - t * t
        return np.full_like(z, self.scale)


@dataclass(frozen=True)
class LayerSpec:
    out_dims: tuple[int, int, int]
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.out_dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"layer out_dims must be 3 positive ints, got {self.out_dims}")
        object.__setattr__(self, "out_dims", dims)


@dataclass(frozen=True)
class ModelConfig:
    """Core dimensions plus an ordered list of tensor contraction layers.

    The last layer's ``out_dims`` is the reconstructed field shape.
    """

    core_dims: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.core_dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ValueError(f"core_dims must be 3 positive ints, got {self.core_dims}")
        object.__setattr__(self, "core_dims", dims)
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("a model needs at least one layer")

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.layers[-1].out_dims

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def dims_chain(self) -> list[tuple[int, int, int]]:
        """Tensor shapes from the core up to the output, length ``n_layers + 1``."""
        return [self.core_dims] + [layer.out_dims for layer in self.layers]

    def factor_shapes(self) -> list[tuple[tuple[int, int], ...]]:
        chain = self.dims_chain()
        return [
            tuple((chain[l + 1][i], chain[l][i]) for i in range(3))
            for l in range(self.n_layers)
        ]

    def with_output_shape(self, shape: Sequence[int]) -> "ModelConfig":
        """Copy of this config whose final layer emits ``shape``."""
        last = self.layers[-1]
        layers = self.layers[:-1] + (LayerSpec(tuple(shape), last.activation),)
        return ModelConfig(self.core_dims, layers)

    def all_linear(self) -> bool:
        return all(layer.activation.kind == "linear" for layer in self.layers)


def default_config(shape: Sequence[int] = (20, 20, 20)) -> ModelConfig:
    """Core (5,5,5) -> (10,10,10) ReLU -> field shape tanh (875 parameters at 20^3)."""
    return ModelConfig(
        (5, 5, 5),
        (
            LayerSpec((10, 10, 10), Activation("relu")),
            LayerSpec(tuple(shape), Activation("tanh")),
        ),
    )


def tucker_config(core_dims: Sequence[int], shape: Sequence[int]) -> ModelConfig:
    """Single linear layer, i.e. a plain Tucker model."""
    return ModelConfig(tuple(core_dims), (LayerSpec(tuple(shape), Activation("linear")),))


@dataclass
class TnnParams:
    """Core tensor and per-layer factor-matrix triples.

    ``factors[l][i]`` has shape ``(R_i^{l+1}, R_i^l)``. The same container is
    used for gradients, which share the parameter layout.
    """

    core: np.ndarray
    factors: list[tuple[np.ndarray, np.ndarray, np.ndarray]]

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[core, W1_1, W2_1, W3_1, W1_2, ...]`` (views, not copies)."""
        out = [self.core]
        for triple in self.factors:
            out.extend(triple)
        return out

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.arrays())

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "TnnParams":
        arrays = list(arrays)
        if (len(arrays) - 1) % 3:
            raise ValueError("expected 1 + 3L arrays")
        factors = [tuple(arrays[1 + 3 * l : 4 + 3 * l]) for l in range((len(arrays) - 1) // 3)]
        return cls(arrays[0], factors)

    def copy(self) -> "TnnParams":
        return TnnParams.from_arrays([a.copy() for a in self.arrays()])

    def zeros_like(self) -> "TnnParams":
        return TnnParams.from_arrays([np.zeros_like(a) for a in self.arrays()])

    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def check(self, config: ModelConfig) -> None:
        """Raise ``ShapeError`` unless these params fit ``config``."""
        if self.core.shape != config.core_dims:
            raise ShapeError(f"core has shape {self.core.shape}, config wants {config.core_dims}")
        if len(self.factors) != config.n_layers:
            raise ShapeError(
                f"params have {len(self.factors)} layers, config has {config.n_layers}"
            )
        for l, (triple, shapes) in enumerate(zip(self.factors, config.factor_shapes()), 1):
            for i, (w, want) in enumerate(zip(triple, shapes), 1):
                if w.shape != want:
                    raise ShapeError(f"layer {l} factor {i} has shape {w.shape}, expected {want}")


def tcl_forward(x, w1, w2, w3, act: Activation) -> np.ndarray:
    """One tensor contraction layer: ``act(x x1 w1 x2 w2 x3 w3)``."""
    return act(tucker_compose(x, w1, w2, w3))


def forward_with_cache(params: TnnParams, config: ModelConfig):
    """Forward pass that keeps what backprop needs.

    Returns ``(inputs, pre, outs)`` where ``inputs[l]`` enters layer ``l``,
    ``pre[l]`` is its pre-activation and ``outs[l]`` its output.
    """
    params.check(config)
    x = as_tensor3(params.core, "core")
    inputs, pre, outs = [], [], []
    for (w1, w2, w3), layer in zip(params.factors, config.layers):
        inputs.append(x)
        z = _ttm(_ttm(_ttm(x, w1, 0), w2, 1), w3, 2)
        x = layer.activation(z)
        pre.append(z)
        outs.append(x)
    return inputs, pre, outs


def tnn_forward(params: TnnParams, config: ModelConfig) -> np.ndarray:
    params.check(config)
    x = params.core
    for (w1, w2, w3), layer in zip(params.factors, config.layers):
        x = tcl_forward(x, w1, w2, w3, layer.activation)
    return x


class UnsupportedActivation(ValueError):
    pass


def collapse_linear_tnn(params: TnnParams, config: ModelConfig):
    """Collapse an all-linear TNN into an equivalent Tucker model.

    With every activation ``x -> a_l x`` the network equals
    ``(prod_l a_l) G x1 (W1_L...W1_1) x2 (W2_L...W2_1) x3 (W3_L...W3_1)``.

    Returns
    -------
    (core, u1, u2, u3)
    """
    if not config.all_linear():
        bad = [str(layer.activation) for layer in config.layers if layer.activation.kind != "linear"]
        raise UnsupportedActivation(f"cannot collapse non-linear activations: {bad}")
    params.check(config)
    gain = 1.0
    bars = [np.eye(d) for d in config.core_dims]
    for triple, layer in zip(params.factors, config.layers):
        gain *= layer.activation.scale
        bars = [w @ b for w, b in zip(triple, bars)]
    return (gain * params.core, *bars)


def param_count(config: ModelConfig) -> int:
    count = int(np.prod(config.core_dims))
    for shapes in config.factor_shapes():
        count += sum(r * c for r, c in shapes)
    return count


INIT_SCHEMES = ("glorot", "normal")
CORE_STD = 0.1


def init_params(config: ModelConfig, seed: int = 0, scheme: str = "glorot") -> TnnParams:
    """Random parameters, deterministic in ``seed``.

    ``glorot``: factors uniform on ``[-s, s]`` with ``s = sqrt(6 / (fan_in + fan_out))``.
    ``normal``: factors normal with std ``CORE_STD``. The core is always
    normal with std ``CORE_STD``.
    """
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    rng = np.random.default_rng([int(seed), 2])
    core = rng.normal(0.0, CORE_STD, size=config.core_dims)
    factors = []
    for shapes in config.factor_shapes():
        triple = []
        for fan_out, fan_in in shapes:
            if scheme == "glorot":
                s = np.sqrt(6.0 / (fan_in + fan_out))
                triple.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
            else:
                triple.append(rng.normal(0.0, CORE_STD, size=(fan_out, fan_in)))
        factors.append(tuple(triple))
    return TnnParams(core, factors)
