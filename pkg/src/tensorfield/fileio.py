"""Text grid and mask files.

Layout::

    ssfgrid v1 I J K
    <I*J*K values, mode-1 index fastest, then mode 2, then mode 3>

Values are written with 17 significant digits, one mode-1 fiber per line,
so every finite double survives a write/read cycle unchanged. Mask files
use the tag ``ssfmask`` and hold only 0 and 1.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np

from .tensor import as_tensor3

__all__ = ["FormatError", "write_grid", "read_grid", "write_mask", "read_mask", "format_grid", "parse_grid"]

GRID_TAG = "ssfgrid"
MASK_TAG = "ssfmask"
VERSION = "v1"

PathLike = Union[str, os.PathLike]


class FormatError(ValueError):
    pass


def format_grid(t, tag: str = GRID_TAG) -> str:
    t = as_tensor3(t)
    if not np.all(np.isfinite(t)):
        raise FormatError("grid contains non-finite values")
    i_n, j_n, k_n = t.shape
    lines = [f"{tag} {VERSION} {i_n} {j_n} {k_n}"]
    if tag == MASK_TAG:
        fmt = lambda v: "1" if v else "0"  # noqa: E731
    else:
        fmt = lambda v: format(v, ".17g")  # noqa: E731
    for k in range(k_n):
        for j in range(j_n):
            lines.append(" ".join(fmt(v) for v in t[:, j, k].tolist()))
    return "\n".join(lines) + "\n"


def parse_grid(text: str, tag: str = GRID_TAG, source: str = "<string>") -> np.ndarray:
    tokens = text.split()
    if len(tokens) < 5:
        raise FormatError(f"{source}: truncated header")
    if tokens[0] != tag or tokens[1] != VERSION:
        raise FormatError(f"{source}: expected header '{tag} {VERSION} I J K', got {' '.join(tokens[:2])!r}")
    try:
        shape = tuple(int(v) for v in tokens[2:5])
    except ValueError:
        raise FormatError(f"{source}: non-integer shape in header") from None
    if min(shape) < 1:
        raise FormatError(f"{source}: invalid shape {shape}")
    body = tokens[5:]
    expected = shape[0] * shape[1] * shape[2]
    if len(body) != expected:
        raise FormatError(f"{source}: header announces {expected} values, found {len(body)}")
    try:
        values = np.array([float(v) for v in body])
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise FormatError(f"{source}: non-finite value")
    if tag == MASK_TAG and not np.all((values == 0) | (values == 1)):
        raise FormatError(f"{source}: mask values must be 0 or 1")
    return values.reshape(shape, order="F")


def write_grid(path: PathLike, t) -> None:
    with open(path, "w") as fh:
        fh.write(format_grid(t, GRID_TAG))


def read_grid(path: PathLike) -> np.ndarray:
    with open(path) as fh:
        return parse_grid(fh.read(), GRID_TAG, str(path))


def write_mask(path: PathLike, mask) -> None:
    mask = as_tensor3(mask, "mask")
    if not np.all((mask == 0) | (mask == 1)):
        raise FormatError("mask values must be 0 or 1")
    with open(path, "w") as fh:
        fh.write(format_grid(mask, MASK_TAG))


def read_mask(path: PathLike) -> np.ndarray:
    with open(path) as fh:
        return parse_grid(fh.read(), MASK_TAG, str(path))
