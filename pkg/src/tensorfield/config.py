"""Run configuration files.

Grammar: one ``key = value`` per line; ``#`` starts a comment; blank lines
are ignored. Keys are dotted (``section.name``). List values are separated
by whitespace (or commas for ``model.layers``). Unknown or repeated keys
are errors. See the README for the list of keys and defaults.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

from .baselines import GREEN_FUNCTIONS, TuckerAlsConfig
from .grad import LossSpec
from .model import Activation, LayerSpec, ModelConfig
from .optim import OptimizerConfig

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config", "DEFAULTS", "METHODS"]

METHODS = ("tnn", "tnn_tv", "tucker_als", "spline")
FIELD_DIMS = "field"


class ConfigError(ValueError):
    pass


def _ints(n: Optional[int] = None) -> Callable[[str], tuple]:
    def parse(text: str) -> tuple:
        vals = tuple(int(v) for v in text.replace(",", " ").split())
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} integers")
        return vals

    return parse


def _floats(text: str) -> tuple:
    vals = tuple(float(v) for v in text.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _words(text: str) -> tuple:
    vals = tuple(text.replace(",", " ").split())
    if not vals:
        raise ValueError("expected at least one name")
    return vals


def _ridge(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _layers(text: str) -> tuple:
    """``10x10x10 relu, field tanh`` -> ((dims or 'field', Activation), ...)."""
    out = []
    for chunk in text.split(","):
        parts = chunk.split()
        if len(parts) != 2:
            raise ValueError(f"layer {chunk.strip()!r} must be '<dims> <activation>'")
        dims_txt, act_txt = parts
        if dims_txt == FIELD_DIMS:
            dims = FIELD_DIMS
        else:
            dims = tuple(int(d) for d in dims_txt.lower().split("x"))
            if len(dims) != 3:
                raise ValueError(f"layer dims {dims_txt!r} must look like 10x10x10")
        out.append((dims, Activation.parse(act_txt)))
    if not out:
        raise ValueError("at least one layer is required")
    return tuple(out)


# key -> (parser, default as text)
SCHEMA: dict[str, tuple[Callable[[str], Any], str]] = {
    "model.core_dims": (_ints(3), "5 5 5"),
    "model.layers": (_layers, "10x10x10 relu, field tanh"),
    "model.init_seed": (int, "0"),
    "model.init_scheme": (str, "glorot"),
    "optim.method": (str, "adam"),
    "optim.learning_rate": (float, "0.005"),
    "optim.beta1": (float, "0.9"),
    "optim.beta2": (float, "0.999"),
    "optim.eps": (float, "1e-8"),
    "optim.max_iters": (int, "15000"),
    "optim.stop_threshold": (float, "0"),
    "optim.record_every": (int, "50"),
    "loss.regularizer": (str, "none"),
    "loss.lambda": (float, "0"),
    "loss.tv_lambda": (float, "3e-4"),
    "sampling.rho": (float, "0.2"),
    "sampling.seed": (int, "0"),
    "noise.sigma": (float, "0.1"),
    "noise.seed": (int, "0"),
    "tucker_als.core_dims": (_ints(3), "7 8 8"),
    "tucker_als.max_sweeps": (int, "100"),
    "tucker_als.tol": (float, "1e-10"),
    "tucker_als.seed": (int, "0"),
    "spline.green": (str, "biharmonic3d"),
    "spline.ridge": (_ridge, "auto"),
    "synth.seed": (int, "0"),
    "synth.shape": (_ints(3), "20 20 20"),
    "sweep.methods": (_words, "tnn tucker_als"),
    "sweep.rhos": (_floats, "0.1 0.2 0.4"),
    "sweep.sigmas": (_floats, "0.1"),
    "sweep.seeds": (_ints(), "0 1 2"),
    "report.timing": (_bool, "true"),
}

DEFAULTS = {key: default for key, (_, default) in SCHEMA.items()}


@dataclass
class RunConfig:
    """Parsed configuration with every section resolved to its typed object."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str):
        return self.values[key]

    def model(self, shape: Sequence[int]) -> ModelConfig:
        """Model config whose ``field`` layer dims resolve to ``shape``."""
        layers = []
        for dims, act in self["model.layers"]:
            layers.append(LayerSpec(tuple(shape) if dims == FIELD_DIMS else dims, act))
        model = ModelConfig(self["model.core_dims"], tuple(layers))
        if model.output_shape != tuple(shape):
            raise ConfigError(
                f"model output {model.output_shape} does not match field shape {tuple(shape)}"
            )
        return model

    @property
    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig(
            method=self["optim.method"],
            learning_rate=self["optim.learning_rate"],
            beta1=self["optim.beta1"],
            beta2=self["optim.beta2"],
            eps=self["optim.eps"],
            max_iters=self["optim.max_iters"],
            stop_threshold=self["optim.stop_threshold"],
            record_every=self["optim.record_every"],
        )

    @property
    def loss(self) -> LossSpec:
        return LossSpec(self["loss.lambda"], self["loss.regularizer"])

    @property
    def tv_loss(self) -> LossSpec:
        return LossSpec(self["loss.tv_lambda"], "tv")

    def loss_for(self, method: str) -> LossSpec:
        return self.tv_loss if method == "tnn_tv" else self.loss

    def tucker_als(self, seed: Optional[int] = None) -> TuckerAlsConfig:
        return TuckerAlsConfig(
            core_dims=self["tucker_als.core_dims"],
            max_sweeps=self["tucker_als.max_sweeps"],
            tol=self["tucker_als.tol"],
            seed=self["tucker_als.seed"] if seed is None else seed,
        )


def _validate(values: dict) -> None:
    # build the typed objects once so bad values fail at load time
    cfg = RunConfig(values)
    cfg.optimizer
    cfg.loss
    cfg.tv_loss
    cfg.tucker_als()
    if values["model.init_scheme"] not in ("glorot", "normal"):
        raise ConfigError(f"model.init_scheme: unknown scheme {values['model.init_scheme']!r}")
    if values["spline.green"] not in GREEN_FUNCTIONS:
        raise ConfigError(f"spline.green: unknown Green function {values['spline.green']!r}")
    for m in values["sweep.methods"]:
        if m not in METHODS:
            raise ConfigError(f"sweep.methods: unknown method {m!r}; expected one of {METHODS}")
    for rho in values["sweep.rhos"]:
        if not 0 < rho <= 1:
            raise ConfigError(f"sweep.rhos: {rho} outside (0, 1]")
    for sigma in values["sweep.sigmas"]:
        if sigma < 0:
            raise ConfigError(f"sweep.sigmas: {sigma} is negative")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value.strip()

    values = {}
    for key, (parser, default) in SCHEMA.items():
        text_value = raw.get(key, default)
        try:
            values[key] = parser(text_value)
        except ValueError as exc:
            raise ConfigError(f"{source}: {key} = {text_value!r}: {exc}") from None
    try:
        _validate(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return RunConfig(values)


def load_config(path: Optional[os.PathLike | str]) -> RunConfig:
    """Read a config file; ``None`` yields all defaults."""
    if path is None:
        return parse_config("", "<defaults>")
    with open(path) as fh:
        return parse_config(fh.read(), str(path))
