"""Command-line front end: ``pcreg simulate|fit|tune|benchmark|optimize``.

Each run takes one JSON config (``--config``).  Command-line flags override
keys of the config file, which override the built-in defaults.  Unknown keys
are rejected.

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 infeasible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from . import __version__
from .basis import spline_basis_set
from .benchmark import BenchmarkConfig, run_benchmark, write_csv
from .covariance import CovModel, angular_grid, uniform_grid
from .hetero import IRLSDivergence, fit_hetero
from .io import FormatError, _jsonable, load_fit, read_matrix, read_t3f, save_fit, write_matrix_csv, write_t3f
from .procopt import problem_from_fit, solve_qp, sweep_sigma0
from .regress import FitResult, fit_gls, fit_otdr, fit_projected, fit_rtr, fit_tdr, fit_vpcr
from .simulate import Case1Spec, Case2Spec, gen_case1, gen_case2
from .tensor import DimensionError
from .tuning import TuningGrid, select_lambda, select_otdr_params

log = logging.getLogger("pcreg")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_INFEASIBLE = 0, 1, 2, 3

Noise = Union[Literal["iid"], float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SimulateConfig(_Strict):
    case: Literal[1, 2] = 1
    seed: int = 0
    out: str = "."
    delta: float | None = None
    noise: Noise = "iid"
    I1: int = Field(60, ge=2)
    I2: int = Field(60, ge=2)
    N: int = Field(50, ge=1)
    n_test: int | None = Field(None, ge=1)


class NoiseModel(_Strict):
    """Covariance assumed by the estimators: ``theta`` null means i.i.d."""

    theta: float | None = Field(None, gt=0)
    grid1: Literal["uniform", "angular"] = "uniform"
    variance: float = Field(1.0, gt=0)


class FitConfig(_Strict):
    Y: str
    X: str
    out: str = "fit"
    seed: int = 0
    estimator: Literal["gls", "lr", "projected", "rtr", "otdr", "tdr", "vpcr"] = "otdr"
    P1: int | Literal["bic"] = 3
    P2: int | Literal["bic"] = 3
    lam: float | Literal["gcv"] = "gcv"
    n_knots: int = Field(20, ge=4)
    periodic1: bool = False
    periodic2: bool = False
    n_components: int | None = Field(None, ge=1)
    noise: NoiseModel = NoiseModel()
    hetero: bool = False
    max_iter: int = Field(100, ge=1)
    tol: float = Field(1e-8, gt=0)
    grid: dict = Field(default_factory=dict)
    bic_form: Literal["sample", "entrywise"] = "sample"
    gcv_form: Literal["sample", "entrywise"] = "sample"


class TuneConfig(_Strict):
    Y: str
    X: str
    out: str = "tune"
    seed: int = 0
    method: Literal["gcv", "bic"] = "gcv"
    lambdas: list[float] | None = None
    thetas: list[float] | None = None
    sigmas: list[float] | None = None
    ranks: list[tuple[int, int]] | None = None
    n_knots: int = Field(20, ge=4)
    periodic1: bool = False
    periodic2: bool = False
    noise: NoiseModel = NoiseModel()
    bic_form: Literal["sample", "entrywise"] = "sample"
    gcv_form: Literal["sample", "entrywise"] = "sample"


class BenchConfig(_Strict):
    case: Literal[1, 2] = 1
    seed: int = 1
    out: str = "benchmark.csv"
    estimators: list[Literal["rtr", "tdr", "vpcr", "lr", "otdr"]] = ["rtr", "tdr", "vpcr", "lr", "otdr"]
    settings: list[tuple[Noise, float]] = [("iid", 0.1), ("iid", 1.0), (10.0, 0.1), (10.0, 1.0)]
    reps: int = Field(10, ge=1)
    scale: Literal["desk", "full"] = "desk"
    bic_form: Literal["sample", "entrywise"] = "entrywise"
    gcv_form: Literal["sample", "entrywise"] = "entrywise"
    jobs: int = Field(1, ge=1)


class OptimizeConfig(_Strict):
    fit: str
    target: float
    sigma0: float | str
    out: str = "optimize"
    seed: int = 0
    lower: list[float] | None = None
    upper: list[float] | None = None
    bounds: str | None = None

    @field_validator("sigma0")
    @classmethod
    def _check_sigma0(cls, v):
        if isinstance(v, str):
            parse_sweep(v)
        elif not v > 0:
            raise ValueError("sigma0 must be positive")
        return v


def parse_sweep(text):
    """``"sweep:a:b:n"`` -> ``n`` evenly spaced values from ``a`` to ``b``."""
    parts = text.split(":")
    if len(parts) != 4 or parts[0] != "sweep":
        raise ValueError(f"expected sweep:a:b:n, got {text!r}")
    a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
    if n < 1 or a <= 0 or b <= 0:
        raise ValueError("sweep needs n >= 1 and positive endpoints")
    return np.linspace(a, b, n)


def _canonical(obj):
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def _sha256(data):
    return hashlib.sha256(data if isinstance(data, bytes) else data.encode()).hexdigest()


def write_manifest(out_dir, command, cfg, files, spec=None):
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.model_dump(mode="json"),
        "config_hash": _sha256(_canonical(cfg.model_dump(mode="json"))),
        "outputs": {Path(f).name: _sha256(Path(f).read_bytes()) for f in files},
    }
    if spec is not None:
        manifest["spec"] = _jsonable(spec)
        manifest["spec_hash"] = _sha256(_canonical(spec))
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# -- commands ---------------------------------------------------------------

def cmd_simulate(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    common = {"noise": cfg.noise, "seed": cfg.seed, "I1": cfg.I1, "I2": cfg.I2}
    if cfg.delta is not None:
        common["delta"] = cfg.delta
    if cfg.n_test is not None:
        common["n_test"] = cfg.n_test
    if cfg.case == 1:
        spec = Case1Spec(N=cfg.N, **common)
        data = gen_case1(spec)
    else:
        spec = Case2Spec(**common)
        data = gen_case2(spec)
    files = []
    for name, t in (("Y", data.Y), ("truth", data.truth), ("Ytest", data.Ytest)):
        files.append(out / f"{name}.t3f")
        write_t3f(files[-1], t)
    for name, m in (("X", data.X), ("Xtest", data.Xtest)):
        files.append(out / f"{name}.csv")
        write_matrix_csv(files[-1], m)
    write_manifest(out, "simulate", cfg, files, spec={"case": cfg.case, **spec.as_dict()})
    print(f"wrote {cfg.case=} data {data.Y.shape} to {out}")
    return EXIT_OK


def _load_xy(cfg):
    Y = read_t3f(cfg.Y)
    X = read_matrix(cfg.X)
    if X.shape[0] != Y.shape[2]:
        raise DimensionError(f"X has {X.shape[0]} rows but Y has {Y.shape[2]} samples")
    return Y, X


def _mode_grids(noise, i1, i2):
    return (angular_grid(i1) if noise.grid1 == "angular" else uniform_grid(i1)), uniform_grid(i2)


def _cov(noise, shape):
    if noise.theta is None:
        if noise.variance == 1.0:
            return None
        return CovModel.identity(*shape, variance=noise.variance)
    g1, g2 = _mode_grids(noise, shape[0], shape[1])
    return CovModel.gaussian(g1, g2, noise.theta, noise.variance, n=shape[2])


def _tuning_grid(cfg):
    kw = {k: tuple(v) for k, v in (("lambdas", cfg.lambdas), ("thetas", cfg.thetas),
                                   ("sigmas", cfg.sigmas), ("ranks", cfg.ranks)) if v}
    return TuningGrid(**kw)


def _make_estimator(cfg, shape, p):
    """Returns ``(estimator(Y, X) -> FitResult, info)``; hyperparameters resolved on the full data."""
    i1, i2, _ = shape
    info = {}

    def basis():
        return spline_basis_set(i1, i2, cfg.n_knots, periodic1=cfg.periodic1, periodic2=cfg.periodic2)

    if cfg.estimator in ("gls", "lr"):
        use_cov = cfg.estimator == "gls"
        return (lambda Y, X: FitResult(cfg.estimator, fit_gls(Y, X, _cov(cfg.noise, Y.shape) if use_cov else None))), info
    if cfg.estimator == "projected":
        b = basis()
        return (lambda Y, X: fit_projected(Y, X, b, _cov(cfg.noise, Y.shape))), info
    if cfg.estimator == "rtr":
        b = basis()

        def rtr(Y, X):
            lam = cfg.lam
            if lam == "gcv":
                lam, _ = select_lambda(Y, X, b, _tuning_grid_from(cfg).lambdas, _cov(cfg.noise, Y.shape), cfg.gcv_form)
                info["lambda"] = lam
            return fit_rtr(Y, X, b, lam, _cov(cfg.noise, Y.shape))
        return rtr, info
    if cfg.estimator in ("otdr", "tdr"):
        def lowrank(Y, X):
            P1, P2 = cfg.P1, cfg.P2
            if "bic" in (P1, P2):
                g1, g2 = _mode_grids(cfg.noise, Y.shape[0], Y.shape[1])
                theta = np.inf if cfg.noise.theta is None else cfg.noise.theta
                grid = _tuning_grid_from(cfg, thetas=(theta,), sigmas=(np.sqrt(cfg.noise.variance),))
                sel = select_otdr_params(Y, X, grid, g1, g2, cfg.max_iter, cfg.tol, form=cfg.bic_form)
                P1, P2 = sel.P1, sel.P2
                info.update(P1=P1, P2=P2)
            if cfg.estimator == "otdr":
                return fit_otdr(Y, X, P1, P2, _cov(cfg.noise, Y.shape), cfg.max_iter, cfg.tol)
            return fit_tdr(Y, X, P1, P2, _cov(cfg.noise, Y.shape), cfg.max_iter, cfg.tol)
        return lowrank, info
    k = cfg.n_components or p - 1 or 1
    return (lambda Y, X: fit_vpcr(Y, X, k)), info


def _tuning_grid_from(cfg, **override):
    kw = {k: tuple(v) for k, v in cfg.grid.items()}
    kw.update(override)
    return TuningGrid(**kw)


def cmd_fit(cfg):
    Y, X = _load_xy(cfg)
    if cfg.hetero and cfg.estimator == "vpcr":
        raise ValueError("hetero fitting needs an estimator without a free offset; vpcr is not supported")
    estimator, info = _make_estimator(cfg, Y.shape, X.shape[1])
    vm = None
    if cfg.hetero:
        fit, vm = fit_hetero(Y, X, estimator=estimator)
    else:
        fit = estimator(Y, X)
    fit.tuning = {**fit.tuning, **info}
    intercept = bool(np.allclose(X[:, 0], 1.0))
    files = save_fit(cfg.out, fit, vm, extra={"intercept": intercept})
    write_manifest(cfg.out, "fit", cfg, files)
    converged = fit.converged and (vm is None or vm.converged)
    print(f"{fit.method}: converged={converged} n_iter={fit.n_iter} -> {cfg.out}")
    return EXIT_OK if converged else EXIT_NONCONVERGED


def cmd_tune(cfg):
    Y, X = _load_xy(cfg)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = _tuning_grid(cfg)
    cov = _cov(cfg.noise, Y.shape)
    if cfg.method == "gcv":
        basis = spline_basis_set(Y.shape[0], Y.shape[1], cfg.n_knots, periodic1=cfg.periodic1, periodic2=cfg.periodic2)
        lam, scores = select_lambda(Y, X, basis, grid.lambdas, cov, cfg.gcv_form)
        result = {"method": "gcv", "lambda": lam}
        table = [{"lambda": l, "gcv": s} for l, s in zip(grid.lambdas, scores)]
    else:
        g1, g2 = _mode_grids(cfg.noise, Y.shape[0], Y.shape[1])
        sel = select_otdr_params(Y, X, grid, g1, g2, form=cfg.bic_form)
        result = {"method": "bic", "theta": sel.theta, "sigma": sel.sigma, "P1": sel.P1, "P2": sel.P2, "bic": sel.score}
        table = sel.table
    files = [out / "tune.json", out / "tune.csv"]
    files[0].write_text(json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n")
    write_csv(files[1], table, columns=list(table[0]))
    write_manifest(out, "tune", cfg, files)
    print(json.dumps(_jsonable(result), sort_keys=True))
    return EXIT_OK


def cmd_benchmark(cfg):
    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bc = BenchmarkConfig(
        case=cfg.case, estimators=tuple(cfg.estimators), settings=tuple(tuple(s) for s in cfg.settings),
        n_reps=cfg.reps, seed=cfg.seed, scale=cfg.scale, bic_form=cfg.bic_form, gcv_form=cfg.gcv_form,
        n_jobs=cfg.jobs,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = run_benchmark(bc)
    write_csv(out, res.rows)
    write_manifest(out.parent, "benchmark", cfg, [out])
    for row in res.rows:
        print(f"case {row['case']} {row['noise']!s:>4} delta={row['delta']:<4} {row['estimator']:>5} "
              f"{row['mean_sse_pct']:10.5g} % +- {row['std_sse_pct']:.3g}  ({row['seconds_per_fit']:.2f} s)")
    return EXIT_OK


def _bounds(cfg, q):
    if cfg.bounds is not None:
        b = read_matrix(cfg.bounds)
        if b.shape != (2, q):
            raise DimensionError(f"bounds file must be 2 x {q} (lower row, upper row), got {b.shape}")
        return b[0], b[1]
    if cfg.lower is None or cfg.upper is None:
        raise ValueError("give either bounds or both lower and upper")
    return np.asarray(cfg.lower), np.asarray(cfg.upper)


def cmd_optimize(cfg):
    fit, vm, meta = load_fit(cfg.fit)
    if vm is None:
        raise ValueError(f"{cfg.fit} has no variance model; fit it with hetero enabled")
    intercept = meta.get("intercept", True)
    q = fit.p - int(intercept)
    lower, upper = _bounds(cfg, q)
    problem = problem_from_fit(fit.coef, vm, cfg.target, 1.0, lower, upper, ybar=fit.offset, intercept=intercept)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if isinstance(cfg.sigma0, str):
        rows = sweep_sigma0(problem, parse_sweep(cfg.sigma0))
        files.append(out / "sweep.csv")
        write_csv(files[-1], rows, columns=list(rows[0]))
        feasible = any(r["feasible"] for r in rows)
        result = {"sweep": rows, "min_variance": problem.min_variance()[0]}
    else:
        res = solve_qp(replace(problem, sigma0=cfg.sigma0))
        feasible = res.feasible
        result = {
            "feasible": res.feasible, "x": res.x, "objective": res.objective, "active": list(res.active),
            "kkt_residual": res.kkt_residual, "iterations": res.iterations, "min_variance": res.min_variance,
        }
    files.append(out / "result.json")
    files[-1].write_text(json.dumps(_jsonable(result), indent=2, sort_keys=True) + "\n")
    write_manifest(out, "optimize", cfg, files)
    if not feasible:
        print(f"infeasible: smallest attainable variance is {problem.min_variance()[0]:.6g}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"wrote {out / 'result.json'}")
    return EXIT_OK


# -- argument handling ------------------------------------------------------

COMMANDS = {
    "simulate": (SimulateConfig, cmd_simulate),
    "fit": (FitConfig, cmd_fit),
    "tune": (TuneConfig, cmd_tune),
    "benchmark": (BenchConfig, cmd_benchmark),
    "optimize": (OptimizeConfig, cmd_optimize),
}


def _noise_arg(text):
    return "iid" if text == "iid" else float(text)


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors; argparse's own status 2 means non-convergence here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="pcreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config; flags override its keys")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        return p

    p = add("simulate", "generate a synthetic case")
    p.add_argument("--case", type=int, choices=(1, 2))
    p.add_argument("--delta", type=float)
    p.add_argument("--noise", type=_noise_arg, help="'iid' or a kernel bandwidth theta")
    for k in ("I1", "I2", "N", "n_test"):
        p.add_argument(f"--{k}", type=int, dest=k)

    for name, help_ in (("fit", "fit a tensor regression"), ("tune", "select tuning parameters")):
        p = add(name, help_)
        p.add_argument("--Y", dest="Y", help="response tensor (.t3f)")
        p.add_argument("--X", dest="X", help="design matrix (.csv or .t3f)")
        p.add_argument("--n-knots", type=int, dest="n_knots")
        p.add_argument("--periodic1", action="store_true")
        p.add_argument("--bic-form", choices=("sample", "entrywise"), dest="bic_form")
        p.add_argument("--gcv-form", choices=("sample", "entrywise"), dest="gcv_form")
        if name == "fit":
            p.add_argument("--estimator", choices=("gls", "lr", "projected", "rtr", "otdr", "tdr", "vpcr"))
            p.add_argument("--ranks", nargs=2, metavar=("P1", "P2"), help="integers or 'bic'")
            p.add_argument("--lam", help="penalty weight or 'gcv'")
            p.add_argument("--components", type=int, dest="n_components")
            p.add_argument("--hetero", action="store_true")
            p.add_argument("--max-iter", type=int, dest="max_iter")
        else:
            p.add_argument("--method", choices=("gcv", "bic"))

    p = add("benchmark", "Monte-Carlo comparison of estimators")
    p.add_argument("--case", type=int, choices=(1, 2))
    p.add_argument("--reps", type=int)
    p.add_argument("--estimators", nargs="+")
    p.add_argument("--scale", choices=("desk", "full"))
    p.add_argument("--bic-form", choices=("sample", "entrywise"), dest="bic_form")
    p.add_argument("--gcv-form", choices=("sample", "entrywise"), dest="gcv_form")
    p.add_argument("--jobs", type=int)

    p = add("optimize", "choose process settings by quadratic programming")
    p.add_argument("--fit", help="directory written by 'pcreg fit --hetero'")
    p.add_argument("--target", type=float)
    p.add_argument("--sigma0", help="variance ceiling (std. dev.) or sweep:a:b:n")
    p.add_argument("--bounds", help="CSV with a lower row and an upper row")
    p.add_argument("--lower", type=float, nargs="+")
    p.add_argument("--upper", type=float, nargs="+")
    return parser


def _flags_to_config(command, flags):
    flags = dict(flags)
    if "ranks" in flags:
        P1, P2 = (r if r == "bic" else int(r) for r in flags.pop("ranks"))
        flags.update(P1=P1, P2=P2)
    if "lam" in flags and flags["lam"] != "gcv":
        flags["lam"] = float(flags["lam"])
    if "sigma0" in flags and not flags["sigma0"].startswith("sweep"):
        flags["sigma0"] = float(flags["sigma0"])
    if command == "benchmark" and "estimators" in flags:
        flags["estimators"] = [e for item in flags["estimators"] for e in item.split(",")]
    return flags


def load_config(command, args):
    """Merge the JSON config file with the flags and validate the result."""
    model, _ = COMMANDS[command]
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        if not isinstance(data, dict):
            raise ValueError("config must be a JSON object")
    data.update(_flags_to_config(command, flags))
    return model.model_validate(data)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _, run = COMMANDS[args.command]
    try:
        cfg = load_config(args.command, args)
        return run(cfg)
    except ValidationError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
    except IRLSDivergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DimensionError, FormatError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except np.linalg.LinAlgError as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
