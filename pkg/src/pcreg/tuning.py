"""Tuning-parameter selection: GCV for the roughness penalty, BIC for OTDR."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovModel
from .regress import fit_otdr, fit_rtr, predict, spd_solve
from .tensor import as_tensor3

__all__ = [
    "TuningGrid",
    "GCVTerms",
    "gcv_terms",
    "gcv_score",
    "select_lambda",
    "bic_score",
    "select_otdr_params",
    "OTDRSelection",
]

BIC_FLOOR = 1e-300


@dataclass(frozen=True)
class TuningGrid:
    lambdas: tuple = tuple(10.0 ** np.arange(-4, 5))
    thetas: tuple = (1.0, 5.0, 10.0, 20.0, 50.0)
    sigmas: tuple = (0.05, 0.1, 0.5, 1.0)
    ranks: tuple = tuple(itertools.product(range(1, 6), repeat=2))

    def __post_init__(self):
        for name in ("lambdas", "thetas", "sigmas"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            if any(v <= 0 for v in vals):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, tuple(sorted(vals)))
        ranks = tuple(sorted((int(a), int(b)) for a, b in self.ranks))
        if not ranks:
            raise ValueError("ranks must be nonempty")
        object.__setattr__(self, "ranks", ranks)


@dataclass(frozen=True)
class GCVTerms:
    numerator: float
    traces: tuple
    base: float

    @property
    def score(self):
        if self.base <= 0:
            return np.inf
        return self.numerator / self.base**2


def hat_trace(U, penalty, lam):
    """``tr(U (U^T U + lam P)^-1 U^T)``."""
    g = U.T @ U
    if lam:
        g = g + lam * penalty
    return float(np.trace(spd_solve(g, U.T @ U)))


GCV_FORMS = ("sample", "entrywise")


def gcv_terms(Y, X, basis, lam, cov=None, form="sample"):
    """Numerator, hat-matrix traces and the unsquared denominator base.

    The numerator is the mean (over samples) squared residual of the
    penalized fit.  The denominator base is ``1 - tr(H1) tr(H2) tr(H3) / m``
    with unweighted smoother matrices.  ``form="sample"`` takes ``m = N``;
    ``form="entrywise"`` counts every tensor entry, ``m = I1 I2 N``.  With
    N samples the sample form is infinite whenever the smoother has more
    than N effective parameters, which for rich spline bases pushes the
    selection to the largest lambda.
    """
    if form not in GCV_FORMS:
        raise ValueError(f"unknown GCV form {form!r}; expected one of {GCV_FORMS}")
    Y = as_tensor3(Y, "Y")
    fit = fit_rtr(Y, X, basis, lam, cov)
    i1, i2, n = Y.shape
    num = float(np.sum((Y - predict(fit, X)) ** 2)) / n
    X = np.asarray(X, dtype=np.float64)
    t3 = float(np.trace(spd_solve(X.T @ X, X.T @ X)))
    t1 = hat_trace(basis.U1, basis.P1, lam)
    t2 = hat_trace(basis.U2, basis.P2, lam)
    m = n if form == "sample" else i1 * i2 * n
    return GCVTerms(num, (t1, t2, t3), 1.0 - t1 * t2 * t3 / m)


def gcv_score(Y, X, basis, lam, cov=None, form="sample"):
    """Generalized cross-validation score; ``inf`` if the model is too complex."""
    return gcv_terms(Y, X, basis, lam, cov, form).score


def select_lambda(Y, X, basis, lambdas, cov=None, form="sample"):
    """Grid argmin of GCV.  Ties go to the smallest lambda.

    Returns ``(best_lambda, scores)`` with scores aligned to the sorted grid.
    """
    lambdas = np.sort(np.asarray(lambdas, dtype=np.float64))
    scores = np.array([gcv_score(Y, X, basis, lam, cov, form) for lam in lambdas])
    return float(lambdas[int(np.argmin(scores))]), scores


BIC_FORMS = ("sample", "entrywise")


def bic_score(Y, X, fit, cov=None, form="sample"):
    """BIC of a basis fit.

    ``form="sample"``: ``N ln(r^T Sigma^-1 r / N) + (P1 + P2) p ln N``.

    ``form="entrywise"`` counts every tensor entry as an observation,
    ``n = I1 I2 N``, and charges the free parameters of the fit,
    ``k = P1 I1 + P2 I2 + P1 P2 p``: ``n ln(q / n) + k ln n``.  The sample
    form weights the fit term by N only and tends to pick too few components
    when N is small relative to I1 I2.
    """
    if form not in BIC_FORMS:
        raise ValueError(f"unknown BIC form {form!r}; expected one of {BIC_FORMS}")
    Y = as_tensor3(Y, "Y")
    i1, i2, n = Y.shape
    r = Y - predict(fit, X)
    q = float(np.sum(r * r)) if cov is None else cov.quad_form(r)
    P1, P2 = fit.basis.ranks
    if form == "entrywise":
        m = i1 * i2 * n
        k = P1 * i1 + P2 * i2 + P1 * P2 * fit.p
        return m * np.log(max(q / m, BIC_FLOOR)) + k * np.log(m)
    return n * np.log(max(q / n, BIC_FLOOR)) + (P1 + P2) * fit.p * np.log(n)


@dataclass
class OTDRSelection:
    theta: float
    sigma: float
    P1: int
    P2: int
    score: float
    fit: object = field(repr=False, default=None)
    table: list = field(repr=False, default_factory=list)


def select_otdr_params(Y, X, grid, grid1, grid2, max_iter=100, tol=1e-8, form="sample"):
    """Exhaustive BIC search over ``(theta, sigma, P1, P2)``.

    ``grid1``/``grid2`` are the mode coordinates fed to the Gaussian kernel;
    a ``theta`` of ``inf`` means identity spatial covariance.  Sigma3 is
    ``sigma^2 I``.  Exact ties resolve to smaller ranks, then smaller theta,
    then smaller sigma.

    ``table`` holds one dict per grid point with its score; ``form`` is
    passed to :func:`bic_score`.
    """
    Y = as_tensor3(Y, "Y")
    n = Y.shape[2]
    rows = []
    best = None
    for theta in grid.thetas:
        spatial = CovModel.gaussian(grid1, grid2, theta, 1.0, n=n)
        for sigma in grid.sigmas:
            cov = spatial.with_sigma3(np.full(n, sigma**2))
            for P1, P2 in grid.ranks:
                fit = fit_otdr(Y, X, P1, P2, cov, max_iter=max_iter, tol=tol)
                score = bic_score(Y, X, fit, cov, form)
                rows.append({"theta": theta, "sigma": sigma, "P1": P1, "P2": P2, "bic": score})
                key = (score, P1, P2, theta, sigma)
                if best is None or key < best[0]:
                    best = (key, fit)
    (score, P1, P2, theta, sigma), fit = best
    return OTDRSelection(theta, sigma, P1, P2, score, fit, rows)
