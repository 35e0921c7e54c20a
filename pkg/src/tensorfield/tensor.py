"""Dense rank-3 tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of ``ndim == 3`` and dtype
float64. Modes are numbered 1, 2, 3 in the public API. Vectorization and
unfolding use the column-major convention (mode-1 index fastest), so that

    vec(G x1 A x2 B x3 C) == kron(C, kron(B, A)) @ vec(G)

holds without any index shuffling.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "as_tensor3",
    "mode_n_product",
    "mode_n_unfold",
    "mode_n_fold",
    "tucker_compose",
    "inner_product",
    "frobenius_norm_sq",
    "hadamard",
    "kronecker",
    "vectorize",
    "unvectorize",
]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def _check_mode(n: int) -> int:
    if n not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {n!r}")
    return n - 1


def as_tensor3(t, name: str = "tensor") -> np.ndarray:
    """Return ``t`` as a float64 array of rank 3, validating its shape."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must have 3 modes, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has an empty mode: shape {arr.shape}")
    return arr


def _as_matrix(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    return arr


def mode_n_product(t, m, n: int) -> np.ndarray:
    """Mode-``n`` product ``t x_n m``.

    ``out[.., j, ..] = sum_i t[.., i, ..] * m[j, i]`` with the summed index
    sitting in mode ``n``.

    Parameters
    ----------
    t : array_like, shape (I1, I2, I3)
    m : array_like, shape (J, In)
    n : int
        Mode index in {1, 2, 3}.

    Returns
    -------
    numpy.ndarray
        Tensor whose mode ``n`` has size ``J``.
    """
    axis = _check_mode(n)
    t = as_tensor3(t)
    m = _as_matrix(m)
    if m.shape[1] != t.shape[axis]:
        raise ShapeError(
            f"mode-{n} product: matrix has {m.shape[1]} columns but tensor "
            f"mode {n} has size {t.shape[axis]}"
        )
    return _ttm(t, m, axis)


def _ttm(t: np.ndarray, m: np.ndarray, axis: int) -> np.ndarray:
    # Unchecked mode product on C-ordered storage; hot path of training.
    a, b, c = t.shape
    if axis == 0:
        return (m @ t.reshape(a, b * c)).reshape(m.shape[0], b, c)
    if axis == 1:
        return np.matmul(m, t)
    return (t.reshape(a * b, c) @ m.T).reshape(a, b, m.shape[0])


def mode_n_unfold(t, n: int) -> np.ndarray:
    """Mode-``n`` unfolding, rows indexed by mode ``n``.

    The remaining modes are laid out in increasing order with the lowest
    one varying fastest.
    """
    axis = _check_mode(n)
    t = as_tensor3(t)
    return np.reshape(np.moveaxis(t, axis, 0), (t.shape[axis], -1), order="F")


def mode_n_fold(m, n: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`mode_n_unfold`."""
    axis = _check_mode(n)
    m = _as_matrix(m)
    shape = tuple(int(s) for s in shape)
    if len(shape) != 3 or min(shape) < 1:
        raise ShapeError(f"target shape must be 3 positive sizes, got {shape}")
    rest = [s for i, s in enumerate(shape) if i != axis]
    expected = (shape[axis], rest[0] * rest[1])
    if m.shape != expected:
        raise ShapeError(
            f"cannot fold matrix of shape {m.shape} along mode {n} into {shape}; "
            f"expected {expected}"
        )
    moved = np.reshape(m, (shape[axis], rest[0], rest[1]), order="F")
    return np.moveaxis(moved, 0, axis)


def tucker_compose(core, u1, u2, u3) -> np.ndarray:
    """``core x1 u1 x2 u2 x3 u3``."""
    out = mode_n_product(core, u1, 1)
    out = mode_n_product(out, u2, 2)
    return mode_n_product(out, u3, 3)


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def inner_product(a, b) -> float:
    a = as_tensor3(a, "a")
    b = as_tensor3(b, "b")
    _check_same_shape(a, b, "inner product")
    return float(np.dot(a.ravel(order="F"), b.ravel(order="F")))


def frobenius_norm_sq(a) -> float:
    a = as_tensor3(a)
    flat = a.ravel()
    return float(np.dot(flat, flat))


def hadamard(a, b) -> np.ndarray:
    a = as_tensor3(a, "a")
    b = as_tensor3(b, "b")
    _check_same_shape(a, b, "hadamard product")
    return a * b


def kronecker(m1, m2) -> np.ndarray:
    return np.kron(_as_matrix(m1, "m1"), _as_matrix(m2, "m2"))


def vectorize(a) -> np.ndarray:
    """Column-major vectorization (mode-1 index fastest)."""
    return as_tensor3(a).ravel(order="F")


def unvectorize(v, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    shape = tuple(int(s) for s in shape)
    if v.ndim != 1 or v.size != int(np.prod(shape)):
        raise ShapeError(f"vector of size {v.size} does not fit shape {shape}")
    return np.reshape(v, shape, order="F")
