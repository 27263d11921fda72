"""Kronecker-separable noise covariance ``Sigma3 (x) Sigma2 (x) Sigma1``.

Sigma1 and Sigma2 are spatial correlation matrices along the two grid modes,
built from a squared-exponential kernel.  Sigma3 is diagonal (independent
samples, possibly with per-sample variances).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, mode_product

JITTER_TRIGGER = 1e-12
JITTER_SCALE = 1e-10


class FactorizationError(np.linalg.LinAlgError):
    """Covariance matrix is not positive definite even after jitter."""


def uniform_grid(n):
    """Coordinates ``i / n`` for ``i = 1..n``."""
    return np.arange(1, n + 1, dtype=np.float64) / n


def angular_grid(n):
    """Points ``2*pi*i/n`` embedded on a circle of circumference one.

    Returned as an ``(n, 2)`` coordinate array, so Euclidean distances are
    chordal distances and the kernel built from them is periodic.  The
    circumference is one so that neighbour spacing matches :func:`uniform_grid`.
    """
    phi = 2.0 * np.pi * np.arange(1, n + 1) / n
    radius = 1.0 / (2.0 * np.pi)
    return radius * np.column_stack([np.cos(phi), np.sin(phi)])


def build_gaussian_cov(grid, theta):
    """Squared-exponential correlation ``exp(-theta * ||r_i - r_j||^2)``.

    Parameters
    ----------
    grid : array_like
        Coordinates, either shape ``(n,)`` or ``(n, d)``.
    theta : float
        Positive bandwidth.  ``numpy.inf`` gives the identity.
    """
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    r = np.asarray(grid, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    if r.shape[0] == 0:
        raise ValueError("grid must be nonempty")
    if np.isinf(theta):
        return np.eye(r.shape[0])
    d2 = np.sum((r[:, None, :] - r[None, :, :]) ** 2, axis=-1)
    cov = np.exp(-theta * d2)
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class Factors:
    inverse: np.ndarray
    sqrt: np.ndarray
    inv_sqrt: np.ndarray
    eigenvalues: np.ndarray
    jittered: bool = False


def factorize(cov):
    """Inverse and symmetric square roots of an SPD matrix via ``eigh``.

    A diagonal jitter of ``1e-10 * trace / n`` is added when the spectrum is
    numerically rank deficient (smallest eigenvalue below ``1e-12`` times the
    largest); dense Gaussian-kernel grids hit this routinely.
    """
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise DimensionError(f"covariance must be square, got {cov.shape}")
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    jittered = False
    if w[0] < JITTER_TRIGGER * w[-1]:
        n = cov.shape[0]
        cov = cov + JITTER_SCALE * np.trace(cov) / n * np.eye(n)
        w, v = np.linalg.eigh(cov)
        jittered = True
    if w[0] <= 0:
        raise FactorizationError(
            f"covariance is not positive definite: smallest eigenvalue {w[0]:.3e}"
        )

    def _sym(f):
        m = (v * f) @ v.T
        return 0.5 * (m + m.T)

    return Factors(
        inverse=_sym(1.0 / w),
        sqrt=_sym(np.sqrt(w)),
        inv_sqrt=_sym(1.0 / np.sqrt(w)),
        eigenvalues=w,
        jittered=jittered,
    )


@dataclass(frozen=True)
class CovModel:
    """Separable covariance with eagerly cached factorizations.

    ``sigma3`` holds the diagonal of Sigma3 (sample variances).
    """

    sigma1: np.ndarray
    sigma2: np.ndarray
    sigma3: np.ndarray
    theta: float | None = None
    f1: Factors = field(init=False, repr=False)
    f2: Factors = field(init=False, repr=False)

    def __post_init__(self):
        s3 = np.asarray(self.sigma3, dtype=np.float64).ravel()
        if s3.size == 0 or not np.all(s3 > 0) or not np.all(np.isfinite(s3)):
            raise ValueError("sigma3 entries must be finite and strictly positive")
        object.__setattr__(self, "sigma3", s3)
        object.__setattr__(self, "f1", factorize(self.sigma1))
        object.__setattr__(self, "f2", factorize(self.sigma2))

    @classmethod
    def identity(cls, i1, i2, n, variance=1.0):
        return cls(np.eye(i1), np.eye(i2), np.full(n, float(variance)), theta=np.inf)

    @classmethod
    def gaussian(cls, grid1, grid2, theta, sigma3=1.0, n=None):
        """Gaussian-kernel spatial covariance.

        ``sigma3`` is a scalar variance (requires ``n``) or a length-N vector.
        """
        s3 = np.asarray(sigma3, dtype=np.float64)
        if s3.ndim == 0:
            if n is None:
                raise ValueError("n is required when sigma3 is a scalar")
            s3 = np.full(int(n), float(s3))
        return cls(build_gaussian_cov(grid1, theta), build_gaussian_cov(grid2, theta), s3, theta=theta)

    @property
    def dims(self):
        return self.sigma1.shape[0], self.sigma2.shape[0], self.sigma3.size

    @property
    def sigma3_inv(self):
        return 1.0 / self.sigma3

    def factors(self, mode):
        return {1: self.f1, 2: self.f2}[mode]

    def with_sigma3(self, sigma3):
        return CovModel(self.sigma1, self.sigma2, sigma3, theta=self.theta)

    def check_dims(self, shape):
        if tuple(shape) != self.dims:
            raise DimensionError(f"covariance dims {self.dims} do not match data {tuple(shape)}")

    def whiten(self, t):
        """Apply ``Sigma^{-1}`` (all three modes) to a residual tensor."""
        t = mode_product(t, self.f1.inverse, 1)
        t = mode_product(t, self.f2.inverse, 2)
        return t * self.sigma3_inv[None, None, :]

    def quad_form(self, r):
        """``vec(r)^T (Sigma3 (x) Sigma2 (x) Sigma1)^{-1} vec(r)``."""
        return float(np.sum(r * self.whiten(r)))


def sample_tensor_normal(cov, rng=None):
    """Draw ``Z x1 Sigma1^{1/2} x2 Sigma2^{1/2} x3 Sigma3^{1/2}`` with iid normal Z."""
    rng = np.random.default_rng(rng)
    z = rng.standard_normal(cov.dims)
    z = mode_product(z, cov.f1.sqrt, 1)
    z = mode_product(z, cov.f2.sqrt, 2)
    return z * np.sqrt(cov.sigma3)[None, None, :]
