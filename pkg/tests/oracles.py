"""Brute-force references built from explicit Kronecker products."""

import numpy as np

from pcreg.tensor import unvec, vec

from conftest import dense_cov


def _solve_gls(Z, S, y, pen=None):
    Si = np.linalg.inv(S)
    M = Z.T @ Si @ Z
    if pen is not None:
        M = M + pen
    return np.linalg.solve(M, Z.T @ Si @ y)


def dense_gls(Y, X, cov):
    i1, i2, n = Y.shape
    Z = np.kron(X, np.eye(i1 * i2))
    beta = _solve_gls(Z, dense_cov(cov), vec(Y))
    return unvec(beta, (i1, i2, X.shape[1]))


def dense_basis_fit(Y, X, U1, U2, cov, lam=0.0, P1=None, P2=None):
    """Penalized GLS over ``X (x) U2 (x) U1`` with the separable smoothness penalty."""
    i1, i2, n = Y.shape
    p = X.shape[1]
    Z = np.kron(X, np.kron(U2, U1))
    pen = None
    if lam:
        g1 = U1.T @ np.linalg.inv(cov.sigma1) @ U1
        g2 = U2.T @ np.linalg.inv(cov.sigma2) @ U2
        gx = X.T @ np.diag(1.0 / cov.sigma3) @ X
        pen = np.kron(gx, lam * np.kron(P2, g1) + lam * np.kron(g2, P1) + lam**2 * np.kron(P2, P1))
    beta = _solve_gls(Z, dense_cov(cov), vec(Y), pen)
    coef = np.kron(np.eye(p), np.kron(U2, U1)) @ beta
    return unvec(coef, (i1, i2, p)), unvec(beta, (U1.shape[1], U2.shape[1], p))
