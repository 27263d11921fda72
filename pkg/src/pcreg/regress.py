"""Tensor-response regression estimators.

Every estimator models ``Y = A x3 X + noise`` where ``Y`` is ``(I1, I2, N)``,
``X`` is the ``(N, p)`` design matrix and ``A`` the ``(I1, I2, p)`` coefficient
tensor.  The structured estimators write ``A = B x1 U1 x2 U2`` with a small
core ``B`` of shape ``(P1, P2, p)``.

Noise covariance is ``Sigma3 (x) Sigma2 (x) Sigma1`` (a :class:`CovModel`);
``cov=None`` means identity everywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSet
from .covariance import CovModel
from .tensor import DimensionError, as_matrix, as_tensor3, mode_product, unfold

__all__ = [
    "FitResult",
    "SingularMatrixError",
    "design_matrix",
    "fit_gls",
    "fit_lr",
    "fit_projected",
    "fit_rtr",
    "fit_otdr",
    "fit_tdr",
    "fit_vpcr",
    "predict",
    "residual_quad_form",
    "sign_fix",
]

RANK_TOL = 1e-14
EIG_FLOOR = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclass
class FitResult:
    """Outcome of a tensor regression fit.

    ``coef`` is the full coefficient tensor ``A``; ``core``/``basis`` are set
    for the basis-expansion estimators.  ``offset`` (an ``I1 x I2`` surface)
    is added to every prediction when present.
    """

    method: str
    coef: np.ndarray
    core: np.ndarray | None = None
    basis: BasisSet | None = None
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    tuning: dict = field(default_factory=dict)
    converged: bool = True
    n_iter: int = 0
    offset: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def p(self):
        return self.coef.shape[2]


def design_matrix(x, intercept=True):
    """Stack an intercept column in front of the process variables."""
    x = as_matrix(x, "x")
    if intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
    return x


def _check_design(X, n):
    X = as_matrix(X, "X")
    if X.shape[0] != n:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {n} samples")
    if X.shape[0] < X.shape[1]:
        raise DimensionError(f"need N >= p, got N={X.shape[0]}, p={X.shape[1]}")
    return X


def _prepare(Y, X, cov):
    Y = as_tensor3(Y, "Y")
    X = _check_design(X, Y.shape[2])
    if cov is None:
        cov = CovModel.identity(*Y.shape)
    else:
        cov.check_dims(Y.shape)
    return Y, X, cov


def _sym_eig(g, what):
    g = 0.5 * (g + g.T)
    w, v = np.linalg.eigh(g)
    if w[-1] <= 0 or w[0] < RANK_TOL * w[-1]:
        raise SingularMatrixError(
            f"{what} is singular (eigenvalues {w[0]:.3e} .. {w[-1]:.3e})"
        )
    return np.maximum(w, EIG_FLOOR * w[-1]), v


def spd_solve(g, b, what="Gram matrix"):
    """Solve ``g z = b`` for symmetric positive definite ``g`` via ``eigh``."""
    w, v = _sym_eig(g, what)
    b = np.asarray(b, dtype=np.float64)
    scale = w if b.ndim == 1 else w[:, None]
    return v @ ((v.T @ b) / scale)


def inv_sqrt_spd(g, what="Gram matrix"):
    w, v = _sym_eig(g, what)
    return (v / np.sqrt(w)) @ v.T


def x_projector(X, cov):
    """``(X^T S3^-1 X)^-1 X^T S3^-1``, shape ``(p, N)``."""
    xs = X.T * cov.sigma3_inv[None, :]
    return spd_solve(xs @ X, xs, "X^T Sigma3^-1 X")


def basis_projector(U, sigma_inv, penalty=None, lam=0.0):
    """``(U^T S^-1 U + lam P)^-1 U^T S^-1``, shape ``(P_k, I_k)``."""
    us = U.T @ sigma_inv
    g = us @ U
    if penalty is not None and lam:
        g = g + lam * penalty
    return spd_solve(g, us, "projected Gram matrix")


def sign_fix(u):
    """Flip columns so each one's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(u), axis=0)
    s = np.sign(u[idx, np.arange(u.shape[1])])
    s[s == 0] = 1.0
    return u * s


def _leading_left(m, k):
    if k > min(m.shape):
        u, _, _ = np.linalg.svd(m, full_matrices=True)
    else:
        u, _, _ = np.linalg.svd(m, full_matrices=False)
    return sign_fix(u[:, :k])


def predict(fit, Xnew):
    coef = fit.coef if isinstance(fit, FitResult) else as_tensor3(fit, "coef")
    Xnew = as_matrix(Xnew, "Xnew")
    if Xnew.shape[1] != coef.shape[2]:
        raise DimensionError(f"Xnew has {Xnew.shape[1]} columns, model expects {coef.shape[2]}")
    out = mode_product(coef, Xnew, 3)
    if isinstance(fit, FitResult) and fit.offset is not None:
        out = out + fit.offset[:, :, None]
    return out


def residual_quad_form(Y, X, fit, cov=None):
    """Generalized residual sum of squares ``r^T Sigma^-1 r``."""
    r = as_tensor3(Y) - predict(fit, X)
    if cov is None:
        return float(np.sum(r * r))
    return cov.quad_form(r)


def fit_gls(Y, X, cov=None):
    """Entrywise generalized least squares, ``A = Y x3 (X^T S3^-1 X)^-1 X^T S3^-1``.

    Sigma1 and Sigma2 cancel out of the unrestricted estimator.
    """
    Y, X, cov = _prepare(Y, X, cov)
    return mode_product(Y, x_projector(X, cov), 3)


def fit_lr(Y, X):
    """Separate ordinary least squares for every entry of the response."""
    return fit_gls(Y, X, None)


def _core_fit(method, Y, X, basis, cov, lam=0.0, **extra):
    pen = lam > 0
    pr1 = basis_projector(basis.U1, cov.f1.inverse, basis.P1 if pen else None, lam)
    pr2 = basis_projector(basis.U2, cov.f2.inverse, basis.P2 if pen else None, lam)
    core = mode_product(Y, pr1, 1)
    core = mode_product(core, pr2, 2)
    core = mode_product(core, x_projector(X, cov), 3)
    coef = mode_product(mode_product(core, basis.U1, 1), basis.U2, 2)
    return FitResult(method, coef, core=core, basis=basis, **extra)


def fit_projected(Y, X, basis, cov=None):
    """Closed-form GLS fit of the core for fixed bases ``U1``, ``U2``."""
    Y, X, cov = _prepare(Y, X, cov)
    _check_basis(basis, Y.shape)
    return _core_fit("projected", Y, X, basis, cov)


def fit_rtr(Y, X, basis, lam, cov=None):
    """Roughness-penalized regression on fixed (spline) bases.

    Solves each mode separately with ``(U^T S^-1 U + lam P)^-1 U^T S^-1``;
    ``lam == 0`` is :func:`fit_projected`.
    """
    if lam < 0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if not basis.has_penalty:
        raise ValueError("fit_rtr needs a basis with penalty matrices")
    Y, X, cov = _prepare(Y, X, cov)
    _check_basis(basis, Y.shape)
    return _core_fit("rtr", Y, X, basis, cov, lam=float(lam), tuning={"lambda": float(lam)})


def _check_basis(basis, shape):
    for k in (1, 2):
        u = basis.U(k)
        if u.shape[0] != shape[k - 1]:
            raise DimensionError(f"U{k} has {u.shape[0]} rows, Y mode {k} has {shape[k - 1]}")


def _check_ranks(shape, P1, P2):
    if not (1 <= P1 <= shape[0] and 1 <= P2 <= shape[1]):
        raise ValueError(f"ranks ({P1}, {P2}) must lie in [1, I_k] for dims {shape[:2]}")


def _whitened_design(X, cov):
    """``X3`` with ``X3 X3^T = S3^-1 X (X^T S3^-1 X)^-1 X^T S3^-1``."""
    xs = X * cov.sigma3_inv[:, None]
    return xs @ inv_sqrt_spd(X.T @ xs, "X^T Sigma3^-1 X")


def fit_otdr(Y, X, P1, P2, cov=None, max_iter=100, tol=1e-8, init=None, callback=None):
    """One-step tensor decomposition regression by alternating least squares.

    Bases are learned jointly with the core under ``U_k^T S_k^-1 U_k = I``.
    Each half-step keeps the other basis fixed and sets
    ``U_k = S_k^{1/2} * (leading P_k left singular vectors of S_k^{-1/2} W_k)``,
    where ``W_k`` is the mode-k unfolding of
    ``Y x_{3-k} U_{3-k}^T S_{3-k}^-1 x3 X3^T``.  That choice maximizes the
    projected score norm, which is the same as minimizing the generalized
    residual sum of squares.

    Parameters
    ----------
    Y : ndarray (I1, I2, N)
    X : ndarray (N, p)
    P1, P2 : int
        Number of basis vectors per mode.
    cov : CovModel, optional
    max_iter : int
    tol : float
        Stop when the relative change of the residual criterion drops below it.
    init : (U1, U2), optional
        Starting bases; rescaled to satisfy the constraint.
    callback : callable, optional
        ``callback(iteration, U1, U2, objective)`` after every sweep.

    Returns
    -------
    FitResult
        ``objective_trace`` holds the generalized residual sum of squares after
        each sweep.  ``converged`` is False if ``max_iter`` was reached; the
        best iterate is returned in that case.
    """
    Y, X, cov = _prepare(Y, X, cov)
    _check_ranks(Y.shape, P1, P2)
    ranks = {1: int(P1), 2: int(P2)}
    f = {1: cov.f1, 2: cov.f2}

    X3 = _whitened_design(X, cov)
    # everything downstream only touches Y through this (I1, I2, p) reduction
    Yx = mode_product(Y, X3.T, 3)
    total = cov.quad_form(Y)

    U = {}
    # default start: truncated HOSVD of the whitened, X-reduced response, which
    # lands in the global optimum's basin more often than the HOSVD of Y
    W0 = mode_product(mode_product(Yx, f[1].inv_sqrt, 1), f[2].inv_sqrt, 2)
    for k in (1, 2):
        if init is not None:
            u0 = np.asarray(init[k - 1], dtype=np.float64)
            ut = np.linalg.qr(f[k].inv_sqrt @ u0)[0]
        else:
            ut = _leading_left(unfold(W0, k), ranks[k])
        U[k] = f[k].sqrt @ ut

    def criterion(U):
        proj = mode_product(Yx, U[1].T @ f[1].inverse, 1)
        proj = mode_product(proj, U[2].T @ f[2].inverse, 2)
        return total - float(np.sum(proj * proj))

    trace, ctrace = [], []
    best = (np.inf, dict(U))
    prev = criterion(U)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for k in (1, 2):
            o = 3 - k
            Wk = mode_product(Yx, U[o].T @ f[o].inverse, o)
            ut = _leading_left(f[k].inv_sqrt @ unfold(Wk, k), ranks[k])
            U[k] = f[k].sqrt @ ut
        obj = criterion(U)
        trace.append(obj)
        ctrace.append(max(_constraint_violation(U[k], f[k].inverse) for k in (1, 2)))
        if obj < best[0]:
            best = (obj, dict(U))
        if callback is not None:
            callback(it, U[1], U[2], obj)
        if abs(prev - obj) <= tol * max(abs(prev), 1e-14 * total, 1e-300):
            converged = True
            break
        prev = obj

    U = best[1]
    basis = BasisSet(U[1], U[2], kind1="learned", kind2="learned")
    fit = _core_fit(
        "otdr", Y, X, basis, cov,
        objective_trace=np.asarray(trace),
        tuning={"P1": ranks[1], "P2": ranks[2], "theta": cov.theta},
        converged=converged,
        n_iter=it,
        diagnostics={"constraint_trace": np.asarray(ctrace)},
    )
    if not converged:
        warnings.warn(f"OTDR stopped after {max_iter} iterations without converging", RuntimeWarning)
    return fit


def _constraint_violation(u, sigma_inv):
    g = u.T @ sigma_inv @ u
    return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def tucker_bases(Y, P1, P2, max_iter=100, tol=1e-8):
    """Orthonormal mode-1/mode-2 bases maximizing ``||Y x1 U1^T x2 U2^T||``.

    Higher-order orthogonal iteration restricted to the two spatial modes,
    started from the truncated HOSVD.  Returns ``(U1, U2, trace, converged)``
    where ``trace`` is the reconstruction error ``||Y - S x1 U1 x2 U2||^2``.
    """
    Y = as_tensor3(Y, "Y")
    _check_ranks(Y.shape, P1, P2)
    U1 = _leading_left(unfold(Y, 1), P1)
    U2 = _leading_left(unfold(Y, 2), P2)
    total = float(np.sum(Y * Y))
    trace = []
    prev = np.inf
    converged = False
    for _ in range(max_iter):
        U1 = _leading_left(unfold(mode_product(Y, U2.T, 2), 1), P1)
        proj = mode_product(Y, U1.T, 1)
        U2 = _leading_left(unfold(proj, 2), P2)
        core = mode_product(proj, U2.T, 2)
        err = total - float(np.sum(core * core))
        trace.append(err)
        if np.isfinite(prev) and abs(prev - err) <= tol * max(abs(prev), 1e-14 * total, 1e-300):
            converged = True
            break
        prev = err
    return U1, U2, np.asarray(trace), converged


def fit_tdr(Y, X, P1, P2, cov=None, max_iter=100, tol=1e-8):
    """Two-step baseline: Tucker bases from ``Y`` alone, then the GLS core."""
    Y, X, cov = _prepare(Y, X, cov)
    U1, U2, trace, converged = tucker_bases(Y, P1, P2, max_iter, tol)
    basis = BasisSet(U1, U2, kind1="learned", kind2="learned")
    return _core_fit(
        "tdr", Y, X, basis, cov,
        objective_trace=trace,
        tuning={"P1": int(P1), "P2": int(P2)},
        converged=converged,
        n_iter=len(trace),
    )


def fit_vpcr(Y, X, n_components):
    """PCA on the sample-mode unfolding, then OLS of the scores on ``X``.

    The sample mean surface is folded into the intercept slice when the first
    column of ``X`` is constant, otherwise it is kept as ``offset``.
    """
    Y = as_tensor3(Y, "Y")
    X = _check_design(X, Y.shape[2])
    i1, i2, n = Y.shape
    if not 1 <= n_components <= min(n, i1 * i2):
        raise ValueError(f"n_components must lie in [1, {min(n, i1 * i2)}]")
    Y3 = unfold(Y, 3)  # (N, I1*I2), columns follow vec order
    mean = Y3.mean(axis=0)
    Yc = Y3 - mean
    _, s, vt = np.linalg.svd(Yc, full_matrices=False)
    if n_components > np.sum(s > s[0] * 1e-12):
        raise SingularMatrixError("n_components exceeds the rank of the centered data")
    V = sign_fix(vt[:n_components].T)  # (I1*I2, k)
    scores = Yc @ V
    gamma = spd_solve(X.T @ X, X.T @ scores, "X^T X")  # (p, k)
    a3 = gamma @ V.T  # (p, I1*I2)
    offset = mean.reshape(i1, i2, order="F")
    if np.allclose(X[:, 0], 1.0):
        a3[0] += mean
        offset = None
    coef = a3.T.reshape(i1, i2, -1, order="F")
    return FitResult(
        "vpcr", coef,
        core=gamma.T[:, None, :],
        tuning={"n_components": int(n_components)},
        offset=offset,
        diagnostics={"loadings": V, "scores": scores},
    )
