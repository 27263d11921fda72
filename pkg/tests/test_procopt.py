import numpy as np
import pytest
from dataclasses import replace

from pcreg.hetero import VarianceModel
from pcreg.procopt import OptProblem, problem_from_fit, solve_qp, sweep_sigma0
from pcreg.tensor import vec

from synth import grid_oracle, random_qp, resolution_bound


@pytest.mark.parametrize("seed", range(12))
def test_qp_matches_grid_oracle(seed):
    pr = random_qp(seed, semidefinite=seed % 4 == 0)
    res = solve_qp(pr)
    best, _, pts = grid_oracle(pr)
    if not np.isfinite(best):
        assert not res.feasible or res.objective >= 0
        return
    assert res.feasible
    assert res.objective <= best + 1e-9
    assert best - res.objective <= resolution_bound(pr, res.x, pts) + 1e-9
    assert np.all(res.x >= pr.lower - 1e-12) and np.all(res.x <= pr.upper + 1e-12)
    assert pr.gamma @ res.x <= pr.variance_bound + 1e-10
    assert res.kkt_residual <= 1e-8


def test_qp_unconstrained_interior_solution():
    # target reachable inside the box: objective zero at the least-squares point
    A = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    x0 = np.array([0.2, -0.1])
    pr = OptProblem(A, -A @ x0, 0.0, -10.0, np.array([1.0, 1.0]), 1.0, [-1, -1], [1, 1])
    res = solve_qp(pr)
    assert np.allclose(res.x, x0)
    assert res.objective < 1e-20 and res.active == ()


def test_qp_box_active():
    A = np.eye(2)
    pr = OptProblem(A, np.array([-5.0, 0.3]), 0.0, -10.0, np.zeros(2) + 1e-3, 1.0, [-1, -1], [1, 1])
    res = solve_qp(pr)
    assert np.allclose(res.x, [1.0, -0.3])
    assert res.multipliers[1] > 0  # upper bound of x1 binds


def test_qp_infeasible_reports_min_variance():
    pr = random_qp(3)
    min_var, _ = pr.min_variance()
    res = solve_qp(replace(pr, sigma0=0.5 * np.sqrt(min_var)))
    assert not res.feasible and res.x is None
    assert np.isclose(res.min_variance, min_var)
    assert solve_qp(replace(pr, sigma0=1.01 * np.sqrt(min_var))).feasible


def test_sweep_monotone_nonincreasing():
    pr = random_qp(7)
    s_min = np.sqrt(pr.min_variance()[0])
    rows = sweep_sigma0(pr, np.linspace(0.5 * s_min, 5 * s_min, 25))
    feas = [r for r in rows if r["feasible"]]
    obj = [r["objective"] for r in feas]
    assert len(rows) == 25 and len(feas) < 25
    assert np.all(np.diff(obj) <= 1e-10 * max(obj))
    assert all(np.isnan(r["x1"]) for r in rows if not r["feasible"])


def test_problem_validation():
    with pytest.raises(ValueError):
        OptProblem(np.ones((3, 2)), np.ones(3), 0.0, 0.0, np.ones(3), 1.0, [0, 0], [1, 1])
    with pytest.raises(ValueError):
        OptProblem(np.ones((3, 2)), np.ones(3), 0.0, 0.0, np.ones(2), 1.0, [0, 2], [1, 1])
    with pytest.raises(ValueError):
        OptProblem(np.ones((3, 2)), np.ones(3), 0.0, 0.0, np.ones(2), 0.0, [0, 0], [1, 1])


def test_problem_from_fit():
    rng = np.random.default_rng(0)
    coef = rng.standard_normal((3, 4, 3))
    ybar = rng.standard_normal((3, 4))
    vm = VarianceModel(np.array([-2.0, 0.5, -0.3]), np.zeros(3), 1.0)
    pr = problem_from_fit(coef, vm, 1.5, 0.4, [-1, -1], [1, 1], ybar=ybar)
    x = np.array([0.3, -0.2])
    surface = ybar + coef[:, :, 0] + coef[:, :, 1] * x[0] + coef[:, :, 2] * x[1]
    assert np.isclose(pr.objective(x), np.sum((surface - 1.5) ** 2))
    assert np.isclose(pr.variance_bound, 2 * np.log(0.4) + 2.0)
    assert np.allclose(pr.ybar, vec(ybar + coef[:, :, 0]))
