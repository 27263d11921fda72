"""Synthetic structured point clouds: wave surfaces and truncated cones."""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import sine_basis
from .covariance import CovModel, angular_grid, sample_tensor_normal, uniform_grid
from .regress import design_matrix
from .tensor import DimensionError, multi_mode_product

__all__ = [
    "CASE1_CORE",
    "Case1Spec",
    "Case2Spec",
    "gen_case1",
    "gen_case2",
    "cone_radius",
    "relative_sse",
]

# mode-3 slices B1, B2 of the 3x3x2 wave-surface core
CASE1_CORE = np.stack(
    [
        np.array([[4.0, 1.0, 0.0], [1.0, 0.1, 0.0], [1.0, 0.0, 1.0]]),
        np.array([[1.0, 2.0, 0.0], [1.0, 3.0, 0.0], [1.0, 0.0, 0.2]]),
    ],
    axis=2,
)


def _noise_cov(noise, grid1, grid2, n):
    """``noise`` is ``"iid"`` or a positive kernel bandwidth theta."""
    if noise == "iid":
        return None
    return CovModel.gaussian(grid1, grid2, float(noise), 1.0, n=n)


def _draw_noise(cov, dims, rng):
    if cov is None:
        return rng.standard_normal(dims)
    return sample_tensor_normal(cov, rng)


@dataclass(frozen=True)
class Case1Spec:
    I1: int = 60
    I2: int = 60
    N: int = 50
    delta: float = 1.0
    noise: str | float = "iid"
    n_test: int = 50
    seed: int = 0
    core: np.ndarray = field(default_factory=lambda: CASE1_CORE.copy(), compare=False)

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if not np.all(np.isfinite(self.core)):
            raise ValueError("core entries must be finite")

    def as_dict(self):
        d = asdict(self)
        d["core"] = np.asarray(self.core).tolist()
        return d


@dataclass
class SimData:
    Y: np.ndarray
    X: np.ndarray
    truth: np.ndarray
    Ytest: np.ndarray | None = None
    Xtest: np.ndarray | None = None
    cov: CovModel | None = None


def case1_truth(x, i1, i2, core=CASE1_CORE):
    """Noise-free wave surfaces ``B x1 U1 x2 U2 x3 x`` for raw inputs ``x``."""
    u1 = sine_basis(i1, [1, 2, 3])
    u2 = sine_basis(i2, [1, 2, 3])
    return multi_mode_product(core, {1: u1, 2: u2, 3: np.asarray(x)})


def gen_case1(spec=Case1Spec()):
    """Wave-shape surfaces on the unit square.

    Returns a :class:`SimData` whose ``X`` carries an intercept column in front
    of the two standard-normal inputs.  ``truth`` is the noise-free training
    response; ``Ytest``/``Xtest`` are noise-free responses at fresh inputs.
    """
    rng = np.random.default_rng(spec.seed)
    train_rng, test_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(2))
    q = spec.core.shape[2]
    x = train_rng.standard_normal((spec.N, q))
    truth = case1_truth(x, spec.I1, spec.I2, spec.core)
    cov = _noise_cov(spec.noise, uniform_grid(spec.I1), uniform_grid(spec.I2), spec.N)
    Y = truth + spec.delta * _draw_noise(cov, truth.shape, train_rng)
    xt = test_rng.standard_normal((spec.n_test, q))
    return SimData(
        Y=Y,
        X=design_matrix(x),
        truth=truth,
        Ytest=case1_truth(xt, spec.I1, spec.I2, spec.core),
        Xtest=design_matrix(xt),
        cov=cov,
    )


@dataclass(frozen=True)
class Case2Spec:
    I1: int = 60
    I2: int = 60
    theta0: float = np.pi / 8
    r0: float = 1.3
    e0: float = 0.3
    c0: float = 0.5
    levels: tuple = (0.9, 1.0, 1.1)
    delta: float = 0.1
    noise: str | float = "iid"
    n_test: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.r0 * min(self.levels) <= 0:
            raise ValueError("radius must stay positive")
        if self.e0 * max(self.levels) >= 1:
            raise ValueError("eccentricity must stay below one")

    @property
    def nominal(self):
        return np.array([self.theta0, self.r0, self.e0, self.c0])

    def as_dict(self):
        d = asdict(self)
        d["levels"] = list(self.levels)
        return d


def cone_radius(phi, z, theta, r, e, c):
    """Radius of the perturbed truncated cone at angle ``phi`` and height ``z``."""
    return (r + z * np.tan(theta)) / np.sqrt(1.0 - e**2 * np.cos(phi) ** 2) + c * (z**2 - z)


def cone_inputs(params):
    """Map ``(theta, r, e, c)`` rows to the linearizing inputs ``(tan theta, r, e^2, c)``."""
    params = np.atleast_2d(params)
    return np.column_stack([np.tan(params[:, 0]), params[:, 1], params[:, 2] ** 2, params[:, 3]])


def cone_surfaces(params, i1, i2):
    """Stack of radius maps, shape ``(i1, i2, len(params))``."""
    params = np.atleast_2d(params)
    phi = 2.0 * np.pi * np.arange(1, i1 + 1) / i1
    z = np.arange(1, i2 + 1) / i2
    P, Z = np.meshgrid(phi, z, indexing="ij")
    out = np.empty((i1, i2, params.shape[0]))
    for n, (th, r, e, c) in enumerate(params):
        out[:, :, n] = cone_radius(P, Z, th, r, e, c)
    return out


def case2_design(spec):
    """Full factorial over the level multipliers, one row per setting."""
    grid = np.array(list(itertools.product(spec.levels, repeat=4)))
    return grid * spec.nominal[None, :]


def gen_case2(spec=Case2Spec()):
    """Truncated cones over a full factorial design plus a uniform test set."""
    rng = np.random.default_rng(spec.seed)
    train_rng, test_rng = (np.random.default_rng(s) for s in rng.bit_generator.seed_seq.spawn(2))
    params = case2_design(spec)
    truth = cone_surfaces(params, spec.I1, spec.I2)
    cov = _noise_cov(spec.noise, angular_grid(spec.I1), uniform_grid(spec.I2), params.shape[0])
    Y = truth + spec.delta * _draw_noise(cov, truth.shape, train_rng)

    lo = spec.nominal * min(spec.levels)
    hi = spec.nominal * max(spec.levels)
    test_params = test_rng.uniform(lo, hi, size=(spec.n_test, 4))
    return SimData(
        Y=Y,
        X=design_matrix(cone_inputs(params)),
        truth=truth,
        Ytest=cone_surfaces(test_params, spec.I1, spec.I2),
        Xtest=design_matrix(cone_inputs(test_params)),
        cov=cov,
    )


def relative_sse(Ytest, Yhat):
    """Relative test error in percent.

    ``100 * ||Ytest - Yhat||^2 / ||Yhat - mean(Yhat)||^2`` where the mean is
    taken over test samples (mode 3).
    """
    Ytest = np.asarray(Ytest, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if Ytest.shape != Yhat.shape:
        raise DimensionError(f"shape mismatch {Ytest.shape} vs {Yhat.shape}")
    denom = float(np.sum((Yhat - Yhat.mean(axis=2, keepdims=True)) ** 2))
    if denom <= 0:
        raise ValueError("predictions do not vary across samples; relative SSE undefined")
    return 100.0 * float(np.sum((Ytest - Yhat) ** 2)) / denom
