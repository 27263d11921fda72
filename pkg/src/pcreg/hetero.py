"""Heteroscedastic residual variance: ``log sigma_i^2 = x_i' gamma + gamma0``.

The mean model and the variance model are fit by alternating maximization of
the Gaussian likelihood: a weighted tensor regression for fixed variances,
then a gamma GLM (log link) of the per-sample residual mean squares.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .regress import FitResult, fit_gls, predict, spd_solve
from .tensor import as_matrix, as_tensor3

__all__ = [
    "VarianceModel",
    "IRLSDivergence",
    "gamma_regression_log_link",
    "gamma_deviance",
    "fit_hetero",
    "neg_log_likelihood",
]


class IRLSDivergence(RuntimeError):
    pass


@dataclass
class VarianceModel:
    """Log-linear variance model.

    ``coef`` is aligned with the design columns; when the design has an
    intercept column first, ``gamma0 == coef[0]`` and ``gamma == coef[1:]``.
    """

    coef: np.ndarray
    stderr: np.ndarray
    dispersion: float
    deviance_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged: bool = True
    iterations: int = 0

    @property
    def gamma0(self):
        return float(self.coef[0])

    @property
    def gamma(self):
        return self.coef[1:]

    def variance(self, X):
        return np.exp(as_matrix(X) @ self.coef)

    def to_dict(self):
        return {
            "gamma0": self.gamma0,
            "gamma": self.gamma.tolist(),
            "stderr": self.stderr.tolist(),
            "dispersion": self.dispersion,
            "converged": self.converged,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        coef = np.r_[d["gamma0"], d["gamma"]]
        stderr = np.asarray(d.get("stderr", np.full(coef.size, np.nan)), dtype=np.float64)
        return cls(coef, stderr, float(d.get("dispersion", np.nan)),
                   converged=d.get("converged", True), iterations=d.get("iterations", 0))


def gamma_deviance(y, mu):
    return 2.0 * float(np.sum(-np.log(y / mu) + (y - mu) / mu))


def gamma_regression_log_link(y, X, max_iter=100, tol=1e-10):
    """Gamma GLM with log link by iteratively reweighted least squares.

    With the log link the IRLS weights are constant, so each step is an OLS
    fit of the working response ``eta + (y - mu) / mu``.  Steps are halved
    whenever the deviance would increase.  Standard errors use the Pearson
    dispersion estimate.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    X = as_matrix(X, "X")
    if y.size != X.shape[0]:
        raise ValueError(f"{y.size} responses but {X.shape[0]} design rows")
    if not np.all(y > 0):
        raise ValueError("gamma regression needs strictly positive responses")
    n, p = X.shape
    xtx = X.T @ X

    beta = spd_solve(xtx, X.T @ np.full(n, np.log(y.mean())), "X^T X")
    dev = gamma_deviance(y, np.exp(X @ beta))
    trace = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        eta = X @ beta
        mu = np.exp(eta)
        target = spd_solve(xtx, X.T @ (eta + (y - mu) / mu))
        step = target - beta
        for _ in range(50):
            new_dev = gamma_deviance(y, np.exp(X @ (beta + step)))
            if new_dev <= dev:
                break
            step *= 0.5
        else:
            raise IRLSDivergence("gamma IRLS could not decrease the deviance")
        beta = beta + step
        change = abs(dev - new_dev) / max(abs(dev), 1e-300)
        dev = new_dev
        trace.append(dev)
        if change < tol:
            converged = True
            break
    if not converged:
        raise IRLSDivergence(f"gamma IRLS did not converge in {max_iter} iterations")

    mu = np.exp(X @ beta)
    dispersion = float(np.sum(((y - mu) / mu) ** 2) / max(n - p, 1))
    cov = dispersion * np.linalg.inv(xtx)
    return VarianceModel(beta, np.sqrt(np.diag(cov)), dispersion, np.asarray(trace), converged, it)


def neg_log_likelihood(resid, sigma2):
    """``(sum_i I1 I2 log sigma_i^2 + sum_i ||E_i||^2 / sigma_i^2) / 2``."""
    m = resid.shape[0] * resid.shape[1]
    rss = np.sum(resid**2, axis=(0, 1))
    return 0.5 * float(np.sum(m * np.log(sigma2) + rss / sigma2))


def _gls_estimator(Y, X):
    return FitResult("gls", fit_gls(Y, X))


def fit_hetero(Y, X, estimator=None, max_outer=50, tol=1e-6):
    """Alternate the tensor mean fit and the gamma variance regression.

    Parameters
    ----------
    Y : ndarray (I1, I2, N)
    X : ndarray (N, p)
        Design matrix with the intercept in the first column; used for both the
        mean and the variance model.
    estimator : callable, optional
        ``estimator(Y0, X0) -> FitResult`` applied to the rescaled data.
        Defaults to entrywise least squares.
    max_outer : int
    tol : float
        Stop when no variance coefficient moves by more than ``tol``.

    Returns
    -------
    (FitResult, VarianceModel)
        The fit's ``offset`` is the raw sample mean surface, so ``predict``
        returns full surfaces.  The likelihood trace is in
        ``fit.diagnostics["nll_trace"]``.
    """
    Y = as_tensor3(Y, "Y")
    X = as_matrix(X, "X")
    estimator = estimator or _gls_estimator
    n = Y.shape[2]
    m = Y.shape[0] * Y.shape[1]
    ybar = Y.mean(axis=2)
    Yc = Y - ybar[:, :, None]

    sigma = np.ones(n)
    vm = None
    nll = []
    fit = None
    converged = False
    for outer in range(1, max_outer + 1):
        fit = estimator(Yc / sigma[None, None, :], X / sigma[:, None])
        resid = Yc - predict(fit.coef, X)
        rmse = np.sum(resid**2, axis=(0, 1)) / m
        new_vm = gamma_regression_log_link(rmse, X)
        sigma2 = new_vm.variance(X)
        nll.append(neg_log_likelihood(resid, sigma2))
        if len(nll) > 1 and nll[-1] > nll[-2] + 1e-8 * abs(nll[-2]):
            warnings.warn("hetero likelihood increased between outer iterations", RuntimeWarning)
        done = vm is not None and np.max(np.abs(new_vm.coef - vm.coef)) < tol
        vm = new_vm
        sigma = np.sqrt(sigma2)
        if done:
            converged = True
            break

    fit.offset = ybar
    fit.diagnostics["nll_trace"] = np.asarray(nll)
    fit.diagnostics["outer_iterations"] = outer
    vm.converged = converged
    vm.iterations = outer
    return fit, vm
