"""Process-setting optimization as a small convex QP.

Choose process variables ``x`` (normalized units, no intercept) to bring the
predicted mean surface ``ybar + A x`` as close as possible to a uniform
target radius, subject to a ceiling on the predicted residual variance
``exp(gamma0 + gamma' x) <= sigma0^2`` and box bounds ``l <= x <= u``.
The variance ceiling is the linear constraint ``gamma' x <= ln sigma0^2 - gamma0``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import null_space

from .tensor import unfold, vec

__all__ = ["OptProblem", "QPResult", "problem_from_fit", "solve_qp", "sweep_sigma0"]

FEAS_TOL = 1e-10


@dataclass(frozen=True)
class OptProblem:
    """``A`` is ``(I1*I2, q)``; ``ybar`` is the vectorized baseline surface."""

    A: np.ndarray
    ybar: np.ndarray
    r_target: float
    gamma0: float
    gamma: np.ndarray
    sigma0: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        q = A.shape[1]
        for name in ("gamma", "lower", "upper"):
            v = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if v.size != q:
                raise ValueError(f"{name} has length {v.size}, expected {q}")
            object.__setattr__(self, name, v)
        ybar = np.asarray(self.ybar, dtype=np.float64).ravel()
        if ybar.size != A.shape[0]:
            raise ValueError(f"ybar has length {ybar.size}, expected {A.shape[0]}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bounds exceed upper bounds")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "ybar", ybar)

    @property
    def n_vars(self):
        return self.A.shape[1]

    @property
    def variance_bound(self):
        return 2.0 * np.log(self.sigma0) - self.gamma0

    def constraints(self):
        """Rows ``(G, h)`` of ``G x <= h``: variance, then upper, then lower bounds."""
        q = self.n_vars
        eye = np.eye(q)
        G = np.vstack([self.gamma[None, :], eye, -eye])
        h = np.r_[self.variance_bound, self.upper, -self.lower]
        return G, h

    def objective(self, x):
        """``||ybar + A x - r_target||^2``."""
        r = self.ybar - self.r_target + self.A @ np.asarray(x, dtype=np.float64)
        return float(r @ r)

    def min_variance(self):
        """Smallest predicted variance attainable inside the box."""
        xmin = np.where(self.gamma > 0, self.lower, self.upper)
        return float(np.exp(self.gamma0 + self.gamma @ xmin)), xmin


@dataclass
class QPResult:
    feasible: bool
    x: np.ndarray | None
    objective: float
    active: tuple
    multipliers: np.ndarray | None
    kkt_residual: float
    iterations: int
    min_variance: float


def problem_from_fit(coef, var_model, r_target, sigma0, lower, upper, ybar=None, intercept=True):
    """Build an :class:`OptProblem` from a fitted coefficient tensor.

    With ``intercept`` the first slice of ``coef`` is folded into the baseline
    surface.  ``ybar`` (an ``I1 x I2`` surface) is added to the baseline.
    """
    a3 = unfold(coef, 3)  # (p, I1*I2)
    base = np.zeros(a3.shape[1]) if ybar is None else vec(ybar)
    if intercept:
        base = base + a3[0]
        a3 = a3[1:]
    return OptProblem(a3.T, base, float(r_target), var_model.gamma0, var_model.gamma,
                      float(sigma0), lower, upper)


def solve_qp(problem, max_iter=200):
    """Primal active-set solution of the process QP.

    The problem is ``min x'Hx + 2x'g`` with ``H = A'A`` and
    ``g = A'(ybar - r_target)``.  Starting from the box corner of least
    predicted variance (feasible whenever the problem is), each iteration
    minimizes over the current working set; flat directions of a
    semidefinite ``H`` are followed until a constraint blocks.
    """
    min_var, x = problem.min_variance()
    G, h = problem.constraints()
    n_con = G.shape[0]
    if problem.gamma @ x > problem.variance_bound + FEAS_TOL * max(1.0, abs(problem.variance_bound)):
        return QPResult(False, None, np.inf, (), None, np.nan, 0, min_var)

    A = problem.A
    H = A.T @ A
    g = A.T @ (problem.ybar - problem.r_target)
    scale = max(1.0, np.max(np.abs(H)), np.max(np.abs(g)))
    x = x.copy()
    work = []
    lam = np.zeros(0)

    def grad(x):
        return 2.0 * (H @ x + g)

    it = 0
    for it in range(1, max_iter + 1):
        gx = grad(x)
        p = _eqp_step(H, gx, G[work])
        if np.linalg.norm(p) <= 1e-12 * max(1.0, np.linalg.norm(x)):
            # stationary on the working set: check multipliers
            if work:
                lam = np.linalg.lstsq(G[work].T, -gx, rcond=None)[0]
            else:
                lam = np.zeros(0)
            if lam.size == 0 or lam.min() >= -1e-10 * scale:
                break
            work.pop(int(np.argmin(lam)))
            continue
        # largest feasible step along p, capped at 1
        alpha, block = 1.0, None
        for i in range(n_con):
            if i in work:
                continue
            gp = G[i] @ p
            if gp > 1e-14 * max(1.0, np.linalg.norm(p)):
                a = (h[i] - G[i] @ x) / gp
                if a < alpha:
                    alpha, block = max(a, 0.0), i
        x = x + alpha * p
        if block is not None:
            work.append(block)

    x = _clip_to_box(x, problem)
    gx = grad(x)
    full_lam = np.zeros(n_con)
    if work:
        full_lam[work] = np.maximum(lam, 0.0) if lam.size == len(work) else 0.0
    kkt = float(np.linalg.norm(gx + G.T @ full_lam)) / scale
    return QPResult(
        True, x, problem.objective(x), tuple(sorted(work)), full_lam, kkt, it, min_var
    )


def _eqp_step(H, gx, Gw):
    """Step ``p`` minimizing ``p'Hp + gx'p`` subject to ``Gw p = 0``.

    If the reduced Hessian is singular and the reduced gradient has a
    component in its null space, returns a long descent direction along that
    flat direction so that a constraint blocks the move.
    """
    n = H.shape[0]
    Z = np.eye(n) if Gw.shape[0] == 0 else null_space(Gw)
    if Z.shape[1] == 0:
        return np.zeros(n)
    Hr = Z.T @ H @ Z
    gr = Z.T @ gx
    w, V = np.linalg.eigh(0.5 * (Hr + Hr.T))
    tol = 1e-12 * max(1.0, np.abs(w).max())
    flat = w <= tol
    gflat = V[:, flat].T @ gr
    if flat.any() and np.linalg.norm(gflat) > 1e-12 * max(1.0, np.linalg.norm(gr)):
        d = -V[:, flat] @ gflat
        return Z @ (d / np.linalg.norm(d)) * 1e6
    coeff = V[:, ~flat].T @ gr / (2.0 * w[~flat])
    return -Z @ (V[:, ~flat] @ coeff)


def _clip_to_box(x, problem):
    # removes round-off drift past the bounds only
    return np.minimum(np.maximum(x, problem.lower), problem.upper)


def sweep_sigma0(problem, sigma0_values):
    """Solve the QP for each variance ceiling; returns a list of row dicts."""
    rows = []
    for s0 in sigma0_values:
        res = solve_qp(replace(problem, sigma0=float(s0)))
        row = {"sigma0": float(s0), "feasible": res.feasible, "objective": res.objective}
        for j in range(problem.n_vars):
            row[f"x{j + 1}"] = float(res.x[j]) if res.feasible else np.nan
        rows.append(row)
    return rows
