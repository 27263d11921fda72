"""Monte-Carlo comparison of the estimators on the synthetic cases."""

from __future__ import annotations

import csv
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import spline_basis_set
from .covariance import CovModel, angular_grid, uniform_grid
from .regress import fit_lr, fit_rtr, fit_tdr, fit_vpcr, predict
from .simulate import Case1Spec, Case2Spec, gen_case1, gen_case2, relative_sse
from .tuning import TuningGrid, select_lambda, select_otdr_params

log = logging.getLogger(__name__)

ESTIMATORS = ("rtr", "tdr", "vpcr", "lr", "otdr")
CSV_COLUMNS = ("case", "noise", "delta", "estimator", "mean_sse_pct", "std_sse_pct", "n_reps", "seconds_per_fit")

DESK_SCALE = {1: {"I1": 60, "I2": 60, "N": 50, "n_test": 50}, 2: {"I1": 60, "I2": 60, "n_test": 200}}
FULL_SCALE = {1: {"I1": 200, "I2": 200, "N": 100, "n_test": 100}, 2: {"I1": 200, "I2": 200, "n_test": 1000}}


@dataclass
class BenchmarkConfig:
    case: int = 1
    estimators: tuple = ESTIMATORS
    settings: tuple = (("iid", 0.1), ("iid", 1.0), (10.0, 0.1), (10.0, 1.0))
    n_reps: int = 10
    seed: int = 1
    scale: str = "desk"
    rank_grid: tuple = tuple(itertools.product(range(1, 6), repeat=2))
    n_knots: int = 20
    lambdas: tuple = tuple(10.0 ** np.arange(-4, 5))
    bic_form: str = "entrywise"
    gcv_form: str = "entrywise"
    n_jobs: int = 1
    dims: dict | None = None  # overrides the scale presets, e.g. {"I1": 20, "I2": 20}


@dataclass
class BenchmarkResult:
    rows: list
    records: list = field(default_factory=list)

    def sse(self, estimator, noise, delta):
        """Per-replication relative SSE (NaN for failed fits), ordered by replication."""
        recs = [r for r in self.records
                if r["estimator"] == estimator and r["noise"] == noise and r["delta"] == delta]
        return np.array([r["sse_pct"] for r in sorted(recs, key=lambda r: r["rep"])])


def make_data(case, noise, delta, seed, scale="desk", dims=None):
    if case not in (1, 2):
        raise ValueError(f"unknown case {case}")
    if scale not in ("desk", "full"):
        raise ValueError(f"unknown scale {scale!r}")
    dims = {**(DESK_SCALE if scale == "desk" else FULL_SCALE)[case], **(dims or {})}
    if case == 1:
        return gen_case1(Case1Spec(delta=delta, noise=noise, seed=seed, **dims))
    return gen_case2(Case2Spec(delta=delta, noise=noise, seed=seed, **dims))


def _grids(case, i1, i2):
    return (angular_grid(i1) if case == 2 else uniform_grid(i1)), uniform_grid(i2)


def _model_cov(case, noise, shape):
    if noise == "iid":
        return None
    g1, g2 = _grids(case, shape[0], shape[1])
    return CovModel.gaussian(g1, g2, float(noise), 1.0, n=shape[2])


def fit_estimators(case, data, noise, cfg):
    """Fit every requested estimator on one replication.

    Returns ``{name: (sse_pct, seconds, info)}``; failures give NaN.
    """
    Y, X = data.Y, data.X
    out = {}
    cov = _model_cov(case, noise, Y.shape)
    ranks = None

    def run(name, fn):
        t0 = time.perf_counter()
        try:
            fit, info = fn()
            sse = relative_sse(data.Ytest, predict(fit, data.Xtest))
        except Exception as exc:  # recorded, not fatal
            log.warning("%s failed: %s", name, exc)
            sse, info = np.nan, {"error": str(exc)}
        out[name] = (sse, time.perf_counter() - t0, info)

    def otdr():
        nonlocal ranks
        theta = np.inf if noise == "iid" else float(noise)
        g1, g2 = _grids(case, Y.shape[0], Y.shape[1])
        grid = TuningGrid(thetas=(theta,), sigmas=(1.0,), ranks=cfg.rank_grid)
        sel = select_otdr_params(Y, X, grid, g1, g2, form=cfg.bic_form)
        ranks = (sel.P1, sel.P2)
        return sel.fit, {"P1": sel.P1, "P2": sel.P2}

    def tdr():
        P1, P2 = ranks if ranks is not None else (3, 3)
        return fit_tdr(Y, X, P1, P2, cov), {"P1": P1, "P2": P2}

    def rtr():
        basis = spline_basis_set(Y.shape[0], Y.shape[1], cfg.n_knots, periodic1=(case == 2))
        lam, _ = select_lambda(Y, X, basis, cfg.lambdas, cov, cfg.gcv_form)
        return fit_rtr(Y, X, basis, lam, cov), {"lambda": lam}

    def vpcr():
        k = X.shape[1] - 1
        return fit_vpcr(Y, X, k), {"n_components": k}

    def lr():
        return fit_lr(Y, X), {}

    jobs = {"otdr": otdr, "tdr": tdr, "rtr": rtr, "vpcr": vpcr, "lr": lr}
    # OTDR first so TDR can reuse its BIC-selected ranks
    for name in sorted(cfg.estimators, key=lambda e: e != "otdr"):
        run(name, jobs[name])
    return out


def _replication(args):
    cfg, noise, delta, rep = args
    seed = cfg.seed + rep
    data = make_data(cfg.case, noise, delta, seed, cfg.scale, cfg.dims)
    res = fit_estimators(cfg.case, data, noise, cfg)
    return [
        {"case": cfg.case, "noise": noise, "delta": delta, "rep": rep, "seed": seed,
         "estimator": name, "sse_pct": sse, "seconds": secs, **info}
        for name, (sse, secs, info) in res.items()
    ]


def run_benchmark(cfg):
    """Run ``cfg.n_reps`` replications per noise setting.

    Replication ``r`` uses seed ``cfg.seed + r``.  Results are reduced in
    replication order, so the output does not depend on ``n_jobs``.
    """
    if cfg.n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    tasks = [(cfg, noise, delta, rep) for noise, delta in cfg.settings for rep in range(cfg.n_reps)]
    if cfg.n_jobs > 1:
        with ProcessPoolExecutor(cfg.n_jobs) as ex:
            chunks = list(ex.map(_replication, tasks))
    else:
        chunks = [_replication(t) for t in tasks]
    records = [r for chunk in chunks for r in chunk]

    rows = []
    for noise, delta in cfg.settings:
        for est in cfg.estimators:
            recs = [r for r in records if r["noise"] == noise and r["delta"] == delta and r["estimator"] == est]
            sse = np.array([r["sse_pct"] for r in recs])
            ok = sse[np.isfinite(sse)]
            rows.append({
                "case": cfg.case,
                "noise": noise,
                "delta": delta,
                "estimator": est,
                "mean_sse_pct": float(ok.mean()) if ok.size else np.nan,
                "std_sse_pct": float(ok.std(ddof=1)) if ok.size > 1 else 0.0,
                "n_reps": int(ok.size),
                "seconds_per_fit": float(np.mean([r["seconds"] for r in recs])),
            })
    return BenchmarkResult(rows, records)


def write_csv(path, rows, columns=CSV_COLUMNS):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.10g}" if isinstance(v, float) else v) for k, v in row.items()})
