"""Structural properties that should hold regardless of tolerances elsewhere."""

import dataclasses
from pathlib import Path

import numpy as np
import pytest

import alphastable
from alphastable.config import ExperimentConfig
from alphastable.experiments import build_experiment, generate_dataset, run_experiment
from alphastable.forward import EllipticProblem, build_conv_1d, build_conv_2d, halton_points, solve_pde
from alphastable.bounds import tail_relative_error
from alphastable.oracles import fourier_pdf, nolan_pdf, tail_log_series
from alphastable.optim import OptimizerConfig, lbfgs_minimize, projected_gradient
from alphastable.priors import (
    IMPROPER,
    DifferencePrior1D,
    FieldPrior2D,
    InitialDist,
    cauchy_increment_logprior,
    grad_logprior_1d,
    grad_logprior_2d,
    logprior_1d,
    logprior_2d,
)
from alphastable.splines import GridSpec, load_or_precompute, precompute_grid
from alphastable.validation import desk_budget, monotonicity_violations, oracle_errors

from fd import fd_gradient, rel_error

CONFIG_DIR = Path(alphastable.__file__).parent / "configs"
DESK_CONFIGS = [p for p in sorted(CONFIG_DIR.glob("*.yaml")) if ExperimentConfig.load(p).desk_scale]


@pytest.mark.parametrize("alpha", [0.6, 0.8, 1.3, 1.5, 1.8])
def test_nolan_and_fourier_agree(alpha):
    r = np.linspace(0.1, 20.0, 50)
    a = np.array([nolan_pdf(float(x), alpha) for x in r])
    b = np.array([fourier_pdf(float(x), alpha) for x in r])
    assert np.max(np.abs(a - b) / b) < 1e-10


def test_grid_independent_of_worker_count():
    spec = GridSpec(0.0, 3.0, 0.9, 1.3, h_r=0.5, h_alpha=0.1)
    a = precompute_grid(spec, 1, parallelism=1)
    b = precompute_grid(spec, 1, parallelism=2)
    assert np.array_equal(a.values, b.values)


def test_spline_reproduces_grid_nodes(desk_dir, model1, model2):
    for m in (model1, model2):
        spec = m.s2.spec
        grid = load_or_precompute(desk_dir, "main", m.d, desk=True).restrict(spec.r_min, spec.r_max)
        R, A = np.meshgrid(spec.r_nodes, spec.alpha_nodes)
        fitted = m.s2(R.ravel(), A.ravel()).reshape(R.shape)
        assert np.max(np.abs(fitted - grid.values)) <= 1e-12


def test_exact_seam_slopes(model1, model2):
    a = np.linspace(0.5, 1.9, 57)
    for m in (model1, model2):
        r1 = np.full_like(a, m.r_inner)
        r2 = np.full_like(a, m.r_transition)
        assert np.max(np.abs(m.s1.partial(r1, a, 1, 0) - m.s2.partial(r1, a, 1, 0))) < 1e-8
        assert np.max(np.abs(m.s2.partial(r2, a, 1, 0) - m.s3.partial(r2, a, 1, 0))) < 1e-8
        tail = np.array([tail_log_series(m.r_tail, float(x), m.tail_order, m.d)[1] for x in a])
        r3 = np.full_like(a, m.r_tail)
        assert np.max(np.abs(m.s3.partial(r3, a, 1, 0) - tail)) < 1e-8


def test_monotone_in_radius(model1, model2):
    assert monotonicity_violations(model1) == []
    assert monotonicity_violations(model2) == []


@pytest.mark.parametrize("d", [1, 2])
def test_tail_bound_decreases_with_order(d):
    for alpha in (0.7, 1.0, 1.5, 1.9):
        e = [tail_relative_error(alpha, d, n) for n in (1, 2, 3, 4)]
        assert all(b <= a for a, b in zip(e, e[1:])), (alpha, e)


@pytest.mark.parametrize("d", [1, 2])
def test_desk_budget_covers_observed_error(d, model1, model2):
    m = model1 if d == 1 else model2
    budget = desk_budget(d, m.h_r, m.h_alpha)
    rng = np.random.default_rng(d)
    r, a = rng.uniform(0.0, 30.0, 10_000), rng.uniform(0.5, 1.9, 10_000)
    assert oracle_errors(m, r, a).max() <= budget.spline_error


def test_prior_sign_flip(model1, model2):
    rng = np.random.default_rng(3)
    p1 = DifferencePrior1D(30, 1.3, 0.05, InitialDist("stable", 1.0))
    u = np.cumsum(0.05 * rng.standard_normal(30))
    assert logprior_1d(p1, model1, -u) == logprior_1d(p1, model1, u)
    p2 = FieldPrior2D(6, 6, 1.3, 0.05, InitialDist("stable", 1.0))
    f = 0.05 * rng.standard_normal((6, 6))
    assert logprior_2d(p2, model2, -f, model1) == logprior_2d(p2, model2, f, model1)


@pytest.mark.parametrize("n", [5, 20, 120])
def test_prior_gradient_1d_sizes(model1, n):
    rng = np.random.default_rng(n)
    u = np.cumsum(0.05 * rng.standard_normal(n))
    prior = DifferencePrior1D(n, 0.8, 0.05, InitialDist("stable", 1.0))
    fd = fd_gradient(lambda z: logprior_1d(prior, model1, z), u)
    assert rel_error(grad_logprior_1d(prior, model1, u), fd) < 1e-5


@pytest.mark.parametrize("n", [4, 16])
def test_prior_gradient_2d_sizes(model1, model2, n):
    rng = np.random.default_rng(n)
    u = 0.05 * rng.standard_normal((n, n))
    prior = FieldPrior2D(n, n, 1.6, 0.05, InitialDist("stable", 1.0))
    fd = fd_gradient(lambda z: logprior_2d(prior, model2, z.reshape(n, n), model1), u.ravel())
    assert rel_error(grad_logprior_2d(prior, model2, u, model1).ravel(), fd) < 1e-5


def test_alpha_one_prior_is_cauchy(model1):
    n = 200
    u = np.cumsum(0.05 * np.random.default_rng(0).standard_cauchy(n))
    prior = DifferencePrior1D(n, 1.0, 0.05, IMPROPER)
    diff = logprior_1d(prior, model1, u) - cauchy_increment_logprior(u, 0.05)
    assert abs(diff) <= 0.00038 * (n - 1)


def test_pde_maximum_principle():
    n = 20
    prob = EllipticProblem.on_unit_square(n, lambda x, y: np.exp(-20 * ((x - 0.3) ** 2 + (y - 0.6) ** 2)))
    rng = np.random.default_rng(0)
    u = solve_pde(prob, 0.1 + 10 * rng.random((n, n)))
    assert u.min() >= 0.0


def test_operators_are_rebuilt_identically():
    a, b = build_conv_1d(80, 17), build_conv_1d(80, 17)
    assert np.array_equal(a.matrix, b.matrix)
    pts = halton_points(40)
    c, d = build_conv_2d((10, 10), pts), build_conv_2d((10, 10), pts)
    assert (c.matrix != d.matrix).nnz == 0
    prob = EllipticProblem.on_unit_square(9)
    k = np.linspace(0.5, 2.0, 81).reshape(9, 9)
    assert (prob.system_matrix(k) != prob.system_matrix(k)).nnz == 0


@pytest.mark.parametrize("path", DESK_CONFIGS, ids=[p.stem for p in DESK_CONFIGS])
def test_posterior_directional_derivatives(desk_models, path):
    p = build_experiment(ExperimentConfig.load(path), desk_models).posterior
    rng = np.random.default_rng(11)
    bounds = p.bounds()
    for _ in range(10):
        x = p.default_start() + 0.05 * rng.standard_normal(p.dimension)
        if bounds is not None:
            x = np.clip(x, bounds[0] + 0.01, bounds[1] - 0.01)
        v = rng.standard_normal(p.dimension)
        v /= np.linalg.norm(v)
        h = 1e-6
        fd = (p.value_and_gradient(x + h * v)[0] - p.value_and_gradient(x - h * v)[0]) / (2 * h)
        g = p.value_and_gradient(x)[1] @ v
        assert abs(g - fd) <= 1e-4 * max(abs(fd), 1e-3)


def test_iterates_stay_feasible_and_certify():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((15, 15))
    A = A @ A.T + np.eye(15)
    b = 3 * rng.standard_normal(15)
    seen = []

    def fun(x):
        seen.append(x.copy())
        return 0.5 * x @ A @ x - b @ x, A @ x - b

    cfg = OptimizerConfig(lower=-0.3, upper=0.4, gtol=1e-9)
    res = lbfgs_minimize(fun, np.zeros(15), cfg)
    assert all(np.all(x >= -0.3) and np.all(x <= 0.4) for x in seen)
    assert res.converged
    lo, hi = cfg.bounds_for(15)
    assert np.max(np.abs(projected_gradient(res.x, res.grad, lo, hi))) <= cfg.gtol


def test_map_solve_iterates_feasible(desk_models):
    cfg = ExperimentConfig.load(CONFIG_DIR / "pde.yaml")
    cfg = dataclasses.replace(cfg, forward=dataclasses.replace(cfg.forward, truth_size=11, recon_size=7, n_obs=15))
    p = build_experiment(cfg, desk_models).posterior
    lo, hi = p.bounds()
    seen = []
    original = p.value_and_gradient

    def recording(x):
        seen.append(x.copy())
        return original(x)

    lbfgs_minimize(recording, p.default_start(), OptimizerConfig(lower=lo, upper=hi, max_iter=30))
    assert all(np.all(x >= lo) and np.all(x <= hi) for x in seen)


def test_rerun_is_identical(desk_models, tmp_path):
    cfg = ExperimentConfig.default("deconv1d")
    cfg = dataclasses.replace(cfg, forward=dataclasses.replace(cfg.forward, truth_size=100, recon_size=30, n_obs=12))
    run_experiment(cfg, desk_models, tmp_path / "a", plots=False)
    run_experiment(cfg, desk_models, tmp_path / "b", plots=False)
    for name in ("reconstruction.csv", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert np.array_equal(generate_dataset(cfg).data, generate_dataset(cfg).data)
