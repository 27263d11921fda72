import numpy as np
import pytest

from pcreg.covariance import CovModel, uniform_grid

# lines reported by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), n))
    return q @ np.diag(w) @ q.T


def random_cov(rng, i1, i2, n, kind="spd"):
    """Covariance model: ``"iid"``, ``"theta10"`` (Gaussian kernel) or a random SPD one."""
    if kind == "iid":
        return CovModel.identity(i1, i2, n)
    if kind == "theta10":
        return CovModel.gaussian(uniform_grid(i1), uniform_grid(i2), 10.0, rng.uniform(0.5, 2.0, n))
    return CovModel(random_spd(rng, i1), random_spd(rng, i2), rng.uniform(0.5, 2.0, n))


def dense_cov(cov):
    return np.kron(np.diag(cov.sigma3), np.kron(cov.sigma2, cov.sigma1))


def rel_err(a, b):
    return float(np.linalg.norm(np.ravel(a) - np.ravel(b)) / max(np.linalg.norm(np.ravel(b)), 1e-300))
