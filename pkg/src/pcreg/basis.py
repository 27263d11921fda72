"""Per-mode basis matrices and roughness penalties."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BSpline

from .tensor import DimensionError

__all__ = [
    "BasisSet",
    "bspline_basis",
    "second_difference_penalty",
    "sine_basis",
    "spline_basis_set",
]


def bspline_basis(n_points, n_knots, degree=3, periodic=False, period=1.0, x=None):
    """Evaluate a B-spline basis on a uniform grid.

    Parameters
    ----------
    n_points : int
        Number of evaluation points.  The grid is ``period * i / n_points``,
        ``i = 1..n_points`` unless ``x`` is given.
    n_knots : int
        Clamped basis: number of equally spaced knot locations on
        ``[0, period]``, endpoints included, giving ``n_knots + degree - 1``
        columns.  Periodic basis: number of distinct knots on ``[0, period)``,
        giving ``n_knots`` columns.
    degree : int
    periodic : bool
        Wrap the basis so functions are ``period``-periodic.
    x : array_like, optional
        Explicit evaluation points.

    Returns
    -------
    numpy.ndarray, shape (n_points, P)
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if n_knots < max(2, degree + 1):
        raise ValueError(f"need at least {max(2, degree + 1)} knots for degree {degree}, got {n_knots}")
    if x is None:
        x = period * np.arange(1, n_points + 1) / n_points
    x = np.asarray(x, dtype=np.float64)

    if periodic:
        n_int = n_knots
        h = period / n_int
        t = h * np.arange(-degree, n_int + degree + 1)
        xw = np.mod(x, period)
        dm = BSpline.design_matrix(xw, t, degree).toarray()
        # fold the `degree` overhanging functions back onto the first columns
        out = dm[:, :n_int].copy()
        out[:, :degree] += dm[:, n_int : n_int + degree]
        return out

    inner = np.linspace(0.0, period, n_knots)
    t = np.r_[np.full(degree, inner[0]), inner, np.full(degree, inner[-1])]
    if np.any((x < inner[0]) | (x > inner[-1])):
        raise ValueError("evaluation points must lie in [0, period]")
    return BSpline.design_matrix(x, t, degree).toarray()


def second_difference_penalty(size, periodic=False):
    """``D^T D`` with ``D`` the second-difference operator on ``size`` coefficients."""
    if size < 3:
        raise ValueError(f"second-difference penalty needs size >= 3, got {size}")
    if periodic:
        d = np.zeros((size, size))
        for i in range(size):
            d[i, i] = 1.0
            d[i, (i + 1) % size] = -2.0
            d[i, (i + 2) % size] = 1.0
    else:
        d = np.diff(np.eye(size), n=2, axis=0)
    return d.T @ d


def sine_basis(n, alphas):
    """Columns ``sin(i * pi * alpha / n)`` for ``i = 1..n``."""
    alphas = np.atleast_1d(np.asarray(alphas, dtype=np.float64))
    if n < 1 or alphas.size == 0:
        raise ValueError("need n >= 1 and at least one alpha")
    i = np.arange(1, n + 1, dtype=np.float64)[:, None]
    return np.sin(i * np.pi * alphas[None, :] / n)


@dataclass(frozen=True)
class BasisSet:
    U1: np.ndarray
    U2: np.ndarray
    P1: np.ndarray | None = None
    P2: np.ndarray | None = None
    kind1: str = "bspline"
    kind2: str = "bspline"

    def __post_init__(self):
        for k, (u, p) in enumerate(((self.U1, self.P1), (self.U2, self.P2)), start=1):
            if u.ndim != 2:
                raise DimensionError(f"U{k} must be 2-D")
            if p is not None and p.shape != (u.shape[1], u.shape[1]):
                raise DimensionError(f"penalty P{k} shape {p.shape} does not match U{k} columns {u.shape[1]}")

    @property
    def has_penalty(self):
        return self.P1 is not None and self.P2 is not None

    @property
    def ranks(self):
        return self.U1.shape[1], self.U2.shape[1]

    def U(self, mode):
        return {1: self.U1, 2: self.U2}[mode]

    def P(self, mode):
        return {1: self.P1, 2: self.P2}[mode]


def spline_basis_set(i1, i2, n_knots=20, degree=3, periodic1=False, periodic2=False):
    """B-spline bases on both modes with matching second-difference penalties.

    A periodic mode uses period ``2*pi`` on the angular grid ``2*pi*i/I``.
    """
    mats = []
    for n, periodic in ((i1, periodic1), (i2, periodic2)):
        period = 2.0 * np.pi if periodic else 1.0
        u = bspline_basis(n, n_knots, degree, periodic=periodic, period=period)
        mats.append((u, second_difference_penalty(u.shape[1], periodic=periodic)))
    (u1, p1), (u2, p2) = mats
    return BasisSet(
        u1, u2, p1, p2,
        kind1="periodic_bspline" if periodic1 else "bspline",
        kind2="periodic_bspline" if periodic2 else "bspline",
    )
