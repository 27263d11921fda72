"""Dense order-3 tensors and the multilinear algebra used throughout pcreg.

Tensors are plain ``numpy.ndarray`` objects of shape ``(I1, I2, I3)``.  Modes
are numbered 1, 2, 3 to match the usual mathematical notation.

Layout conventions (fixed, relied on by every estimator and by the T3F file
format):

* ``vec(t)`` stacks entries with the mode-1 index varying fastest, i.e.
  ``t.reshape(-1, order="F")``.
* ``unfold(t, k)`` is an ``I_k x prod(other dims)`` matrix whose columns are
  the mode-k fibers, ordered lexicographically over the remaining modes with
  the lower mode index varying fastest.  With these two choices

      vec(S x1 U1 x2 U2 x3 U3) == kron(U3, kron(U2, U1)) @ vec(S)

  and ``vec(t) == unfold(t, 3).T.reshape(-1)`` hold exactly.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DimensionError",
    "as_tensor3",
    "as_matrix",
    "mode_product",
    "multi_mode_product",
    "unfold",
    "fold",
    "kron",
    "vec",
    "unvec",
    "frobenius_norm",
]


class DimensionError(ValueError):
    """Raised when array shapes are inconsistent with an operation."""


def _check_mode(mode):
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode!r}")


def as_tensor3(t, name="tensor"):
    """Validate and return ``t`` as a float64 array with three modes."""
    arr = np.asarray(t, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"{name} must have 3 modes, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise DimensionError(f"{name} has an empty mode: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(m, name="matrix"):
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def mode_product(t, m, mode):
    """Mode-k product ``t x_k m``.

    ``result[.., j, ..] = sum_i t[.., i, ..] * m[j, i]`` along axis ``mode``.

    Parameters
    ----------
    t : array_like, shape (I1, I2, I3)
    m : array_like, shape (J, I_mode)
    mode : {1, 2, 3}

    Returns
    -------
    numpy.ndarray
        Tensor with ``I_mode`` replaced by ``J``.
    """
    _check_mode(mode)
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"mode-{mode} product needs a 2-D matrix, got {m.shape}")
    axis = mode - 1
    if m.shape[1] != t.shape[axis]:
        raise DimensionError(
            f"mode-{mode} product: matrix has {m.shape[1]} columns but tensor "
            f"mode {mode} has size {t.shape[axis]}"
        )
    out = np.tensordot(m, t, axes=(1, axis))
    return np.moveaxis(out, 0, axis)


def multi_mode_product(t, matrices):
    """Apply ``{mode: matrix}`` products in mode order; ``None`` entries are skipped."""
    for mode in sorted(matrices):
        m = matrices[mode]
        if m is not None:
            t = mode_product(t, m, mode)
    return t


def unfold(t, mode):
    """Mode-k matricization, shape ``(I_k, prod(other dims))``."""
    _check_mode(mode)
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise DimensionError(f"unfold expects a 3-mode tensor, got {t.shape}")
    axis = mode - 1
    return np.reshape(np.moveaxis(t, axis, 0), (t.shape[axis], -1), order="F")


def fold(m, mode, dims):
    """Inverse of :func:`unfold`."""
    _check_mode(mode)
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise DimensionError(f"dims must have three entries, got {dims}")
    axis = mode - 1
    rest = [d for i, d in enumerate(dims) if i != axis]
    if m.shape != (dims[axis], rest[0] * rest[1]):
        raise DimensionError(
            f"cannot fold matrix of shape {m.shape} along mode {mode} into {dims}"
        )
    full = np.reshape(m, (dims[axis], rest[0], rest[1]), order="F")
    return np.moveaxis(full, 0, axis)


def kron(a, b):
    """Kronecker product ``a (x) b`` with the block layout ``[a_ij * b]``."""
    return np.kron(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def vec(t):
    """Vectorize with the mode-1 index varying fastest."""
    return np.asarray(t, dtype=np.float64).reshape(-1, order="F")


def unvec(v, dims):
    v = np.asarray(v, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    if v.size != int(np.prod(dims)):
        raise DimensionError(f"vector of length {v.size} does not fit dims {dims}")
    return v.reshape(dims, order="F")


def frobenius_norm(t):
    return float(np.sqrt(np.sum(np.square(np.asarray(t, dtype=np.float64)))))
