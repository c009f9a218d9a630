"""Acceptance checks, one printed PASS/FAIL line per check.

Desk-scale variants run on the coarse grids (h_r=0.1, h_alpha=0.01) and
compare against error budgets recomputed for that spacing.  Full-resolution
variants need ``ALPHASTABLE_FULL_GRID_DIR`` pointing at grids built with
``alphastable precompute`` (no ``--desk-scale``) and are skipped otherwise.
"""

import dataclasses
import math
from pathlib import Path

import numpy as np
import pytest

import alphastable
from alphastable.bounds import tail_relative_error, tail_relative_error_sup
from alphastable.cli import measure_latency
from alphastable.config import ExperimentConfig
from alphastable.experiments import build_experiment, run_experiment
from alphastable.forward import (
    K_MAX,
    K_MIN,
    EllipticProblem,
    PDELikelihood,
    default_conductivity,
    halton_grid_indices,
    solve_pde,
)
from alphastable.optim import F_ROUNDOFF, OptimizerConfig, lbfgs_minimize
from alphastable.oracles import contour_pdf, tail_series
from alphastable.posterior import plain_hierarchy
from alphastable.priors import (
    DifferencePrior1D,
    FieldPrior2D,
    HierarchicalSpec,
    HierarchyMode,
    InitialDist,
    grad_logprior_1d,
    grad_logprior_2d,
    grad_logprior_hier,
    logprior_1d,
    logprior_2d,
    logprior_hier,
)
from alphastable.validation import (
    SEAM_SLOPE_TOL,
    SEAM_VALUE_TOL,
    derivative_errors,
    desk_budget,
    oracle_errors,
    quasi_random_points,
    seam_jumps,
)

from fd import fd_gradient, rel_error

CONFIG_DIR = Path(alphastable.__file__).parent / "configs"
N_POINTS = 5000


@pytest.fixture
def verdict(capsys):
    def emit(criterion, label, value, threshold, passed=None, informational=False):
        ok = value <= threshold if passed is None else passed
        status = ("PASS" if ok else "FAIL") if not informational else ("PASS" if ok else "MISS")
        tag = " (informational)" if informational else ""
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {status} {label}: {value:.4g} vs {threshold:.4g}{tag}")
        return ok
    return emit


@pytest.fixture(scope="module")
def sample_points():
    return quasi_random_points(N_POINTS, seed=0)


@pytest.fixture(scope="module")
def desk_errors(model1, model2, sample_points):
    r, a = sample_points
    return {1: oracle_errors(model1, r, a), 2: oracle_errors(model2, r, a)}


# ---------------------------------------------------------------- 1 and 2

def test_c1_univariate_accuracy_desk(model1, desk_errors, verdict):
    budget = desk_budget(1, model1.h_r, model1.h_alpha)
    assert verdict(1, "desk univariate sup |log error| <= recomputed budget",
                   float(desk_errors[1].max()), budget.spline_error)


def test_c1_univariate_accuracy_full(full_models, sample_points, verdict):
    r, a = sample_points
    err = oracle_errors(full_models[1], r, a)
    assert verdict(1, "full univariate sup |log error|", float(err.max()), 0.0004)


def test_c2_bivariate_accuracy_desk(model2, desk_errors, sample_points, verdict):
    _, a = sample_points
    overall = desk_budget(2, model2.h_r, model2.h_alpha)
    upper = desk_budget(2, model2.h_r, model2.h_alpha, alpha_min=0.7)
    ok1 = verdict(2, "desk bivariate sup |log error| <= recomputed budget",
                  float(desk_errors[2].max()), overall.spline_error)
    ok2 = verdict(2, "desk bivariate sup |log error|, alpha >= 0.7, <= recomputed budget",
                  float(desk_errors[2][a >= 0.7].max()), upper.spline_error)
    assert ok1 and ok2


def test_c2_bivariate_accuracy_full(full_models, sample_points, verdict):
    r, a = sample_points
    err = oracle_errors(full_models[2], r, a)
    ok1 = verdict(2, "full bivariate sup |log error|", float(err.max()), 0.22)
    ok2 = verdict(2, "full bivariate sup |log error|, alpha >= 0.7", float(err[a >= 0.7].max()), 0.015)
    assert ok1 and ok2


# ---------------------------------------------------------------- 3

@pytest.mark.parametrize("d, target", [(1, 0.00097), (2, 0.0017)])
def test_c3_tail_relative_error(d, target, verdict):
    bound, _ = tail_relative_error_sup(d)
    ok1 = verdict(3, f"certified tail relative error d={d}", bound, target)
    rng = np.random.default_rng(d)
    r = 30.0 + 120.0 * (1.0 - rng.random(500))
    a = rng.uniform(0.5, 1.9, 500)
    emp = np.array([abs(1.0 - contour_pdf(x, y, d) / float(tail_series(x, y, 3, d))) for x, y in zip(r, a)])
    local = np.array([tail_relative_error(y, d) for y in a])
    ok2 = verdict(3, f"empirical / certified tail error, worst of 500 points d={d}",
                  float(np.max(emp / local)), 1.0)
    ok3 = verdict(3, f"empirical tail relative error d={d}", float(emp.max()), bound)
    assert ok1 and ok2 and ok3


# ---------------------------------------------------------------- 4

def _cauchy_errors(model):
    r = np.random.default_rng(4).uniform(0.0, 200.0, 1000)
    v = model.evaluate(r, np.ones_like(r))[0]
    if model.d == 1:
        ref = -np.log(np.pi * (1.0 + r * r))
    else:
        ref = math.log(1.0 / (2.0 * math.pi)) - 1.5 * np.log1p(r * r)
    return np.abs(v - ref)


def test_c4_cauchy_desk(model1, model2, verdict):
    ok1 = verdict(4, "desk univariate |log error| vs Cauchy closed form", float(_cauchy_errors(model1).max()), 0.0004)
    budget = desk_budget(2, model2.h_r, model2.h_alpha).spline_error
    ok2 = verdict(4, "desk bivariate |log error| vs Cauchy closed form <= budget",
                  float(_cauchy_errors(model2).max()), budget)
    assert ok1 and ok2


def test_c4_cauchy_full(full_models, verdict):
    ok1 = verdict(4, "full univariate |log error| vs Cauchy closed form",
                  float(_cauchy_errors(full_models[1]).max()), 0.0004)
    ok2 = verdict(4, "full bivariate |log error| vs Cauchy closed form",
                  float(_cauchy_errors(full_models[2]).max()), 0.22)
    assert ok1 and ok2


# ---------------------------------------------------------------- 5

def _seams(models, scale, label, verdict):
    alphas = np.random.default_rng(5).uniform(0.5, 1.9, 200)
    ok = True
    for d, m in models.items():
        for r, (dv, ds) in seam_jumps(m, alphas).items():
            ok &= verdict(5, f"{label} value jump d={d} r={r:g}", dv, SEAM_VALUE_TOL * scale)
            ok &= verdict(5, f"{label} slope jump d={d} r={r:g}", ds, SEAM_SLOPE_TOL * scale)
    return ok


def test_c5_seams_desk(model1, model2, verdict):
    assert _seams({1: model1, 2: model2}, 100.0, "desk (x100)", verdict)


def test_c5_seams_full(full_models, verdict):
    assert _seams(full_models, 1.0, "full", verdict)


# ---------------------------------------------------------------- 6

def test_c6_model_derivatives(model1, model2, verdict):
    ok = True
    for m in (model1, model2):
        er, ea = derivative_errors(m, n=500)
        ok &= verdict(6, f"d_dr vs central differences d={m.d}", float(er.max()), 1e-4)
        ok &= verdict(6, f"d_dalpha vs central differences d={m.d}", float(ea.max()), 1e-4)
    assert ok


def test_c6_prior_gradients(model1, model2, verdict):
    rng = np.random.default_rng(6)
    ok = True
    u = np.cumsum(0.05 * rng.standard_normal(300))
    prior = DifferencePrior1D(300, 1.3, 0.05, InitialDist("stable", 1.0))
    err = rel_error(grad_logprior_1d(prior, model1, u), fd_gradient(lambda x: logprior_1d(prior, model1, x), u))
    ok &= verdict(6, "plain prior gradient (n=300)", err, 1e-4)

    n = 100
    u, c, s = np.cumsum(0.05 * rng.standard_normal(n)), 0.3 * rng.standard_normal(n), 0.3 * rng.standard_normal(n)
    spec = HierarchicalSpec(HierarchyMode.BOTH)
    prior = DifferencePrior1D(n, 1.0, 0.05)
    du, dc, ds = grad_logprior_hier(spec, prior, model1, u, c, s)
    fd = np.concatenate([
        fd_gradient(lambda x: logprior_hier(spec, prior, model1, x, c, s), u),
        fd_gradient(lambda x: logprior_hier(spec, prior, model1, u, x, s), c),
        fd_gradient(lambda x: logprior_hier(spec, prior, model1, u, c, x), s),
    ])
    ok &= verdict(6, "hierarchical prior gradient (3 x 100)", rel_error(np.concatenate([du, dc, ds]), fd), 1e-4)

    field = 0.2 * rng.standard_normal((15, 20))
    fp = FieldPrior2D(15, 20, 1.2, 0.1, InitialDist("stable", 1.0))
    err = rel_error(grad_logprior_2d(fp, model2, field, model1),
                    fd_gradient(lambda x: logprior_2d(fp, model2, x, model1), field))
    ok &= verdict(6, "2D field prior gradient (15 x 20)", err, 1e-4)
    assert ok


def test_c6_pde_adjoint(verdict):
    n = 17
    prob = EllipticProblem.on_unit_square(n, obs_index=halton_grid_indices(n, 60))
    X, Y = prob.nodes
    data = prob.observation_matrix() @ solve_pde(prob, default_conductivity(X, Y)).ravel()
    like = PDELikelihood(prob, data, 1e-3)
    k = 1.0 + 0.3 * np.random.default_rng(6).random((n, n))
    g = like.value_and_gradient(k)[1]
    fd = fd_gradient(lambda p: like.value_and_gradient(p)[0], k, h=1e-6)
    assert verdict(6, "PDE discrete-adjoint gradient (17 x 17)", rel_error(g, fd), 1e-5)


# ---------------------------------------------------------------- 7

def _spd(n, seed):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(np.logspace(0, 3, n)) @ q.T


def test_c7_optimizer_problems(verdict):
    A = _spd(40, 7)
    b = np.random.default_rng(8).standard_normal(40)
    res = lbfgs_minimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b), np.zeros(40),
                         OptimizerConfig(gtol=1e-12, max_iter=5000))
    ok = verdict(7, "convex quadratic max |x - x*|", float(np.max(np.abs(res.x - np.linalg.solve(A, b)))), 1e-8)

    def rosen(x):
        a, c = x[:-1], x[1:]
        g = np.zeros_like(x)
        g[:-1] = -400 * a * (c - a * a) - 2 * (1 - a)
        g[1:] += 200 * (c - a * a)
        return float(np.sum(100 * (c - a * a) ** 2 + (1 - a) ** 2)), g

    res = lbfgs_minimize(rosen, np.full(10, -1.2), OptimizerConfig(gtol=1e-10, max_iter=5000))
    ok &= verdict(7, "Rosenbrock max |x - 1|", float(np.max(np.abs(res.x - 1))), 1e-6)

    d = np.linspace(1.0, 10.0, 25)
    c = np.random.default_rng(9).uniform(-3, 3, 25)
    res = lbfgs_minimize(lambda x: (0.5 * np.sum(d * (x - c) ** 2), d * (x - c)), np.zeros(25),
                         OptimizerConfig(lower=-1.0, upper=1.5, gtol=1e-12))
    ok &= verdict(7, "box-constrained quadratic vs KKT solution",
                  float(np.max(np.abs(res.x - np.clip(c, -1.0, 1.5)))), 1e-8)
    assert ok


DESK_CONFIGS = sorted(p for p in CONFIG_DIR.glob("*.yaml") if ExperimentConfig.load(p).desk_scale)


@pytest.fixture(scope="module")
def shipped_runs(desk_models):
    return {p.stem: run_experiment(ExperimentConfig.load(p), desk_models, None) for p in DESK_CONFIGS}


def test_c7_descent_on_shipped_configs(shipped_runs, verdict):
    ok = True
    for name, (_, res, _) in shipped_runs.items():
        obj = np.array([t.objective for t in res.optimization.trace])
        rise = float(np.max(np.diff(obj) / np.maximum(np.abs(obj[:-1]), 1e-300), initial=-np.inf))
        ok &= verdict(7, f"largest relative objective increase, {name}", rise, F_ROUNDOFF)
    assert ok


# ---------------------------------------------------------------- 8

def test_c8_deconvolution_rmse(shipped_runs, verdict):
    _, _, m = shipped_runs["deconv1d"]
    ok1 = verdict(8, "1D MAP RMSE < zero-field RMSE", m["rmse_map"], m["rmse_zero"], m["rmse_map"] < m["rmse_zero"])
    ok2 = verdict(8, "1D MAP RMSE < backprojection RMSE", m["rmse_map"], m["rmse_backprojection"],
                  m["rmse_map"] < m["rmse_backprojection"])
    assert ok1 and ok2


def test_c8_plain_hierarchy_bit_identical(desk_models, shipped_runs, verdict):
    cfg = ExperimentConfig.load(CONFIG_DIR / "deconv1d.yaml")
    plain_exp, plain_res, _ = shipped_runs["deconv1d"]
    hier_cfg = dataclasses.replace(cfg, prior=dataclasses.replace(cfg.prior, mode="plain"))
    exp = build_experiment(hier_cfg, desk_models)
    assert exp.posterior.hierarchy == plain_hierarchy()
    _, hier_res, _ = shipped_runs["deconv1d_hier_plain"]
    same = np.array_equal(plain_res.estimate["u"], hier_res.estimate["u"])
    diff = float(np.max(np.abs(plain_res.estimate["u"] - hier_res.estimate["u"])))
    assert verdict(8, "hierarchical Plain vs non-hierarchical MAP, max |difference|", diff, 0.0, same)


def test_c8_pde_inversion(shipped_runs, verdict):
    _, res, m = shipped_runs["pde"]
    ok1 = verdict(8, "PDE MAP min k (must be >= 1e-5)", m["k_min"], K_MIN, m["k_min"] >= K_MIN)
    ok2 = verdict(8, "PDE MAP max k <= 1e2", m["k_max"], K_MAX)
    reduction = (m["objective_start"] - m["objective_final"]) / abs(m["objective_start"])
    ok3 = verdict(8, "PDE relative objective reduction from k=1 (must be >= 0.9)", reduction, 0.9, reduction >= 0.9)
    assert ok1 and ok2 and ok3


# ---------------------------------------------------------------- 9

def _manufactured(n):
    src = lambda x, y: 2 * math.pi ** 2 * np.sin(math.pi * x) * np.sin(math.pi * y)
    prob = EllipticProblem.on_unit_square(n, src)
    X, Y = prob.nodes
    return float(np.max(np.abs(solve_pde(prob, np.ones((n, n))) - np.sin(math.pi * X) * np.sin(math.pi * Y))))


def test_c9_manufactured_solution(verdict):
    # interior node counts n with mesh width 1/(n+1): 64 -> 129 -> 259 halves h each time
    errs = [_manufactured(n) for n in (64, 129, 259)]
    ok = verdict(9, "max-norm error at 64 x 64", errs[0], 1e-3)
    for k in range(2):
        ratio = errs[k] / errs[k + 1]
        ok &= verdict(9, f"error ratio per halving #{k + 1} (within [3.5, 4.5])", ratio, 4.5, 3.5 <= ratio <= 4.5)
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_latency_informational(model1, model2, verdict):
    targets = {"spline": 1000.0, "tail": 2000.0}
    for m in (model1, model2):
        for region, batch_ns, single_ns in measure_latency(m, 100_000):
            verdict(10, f"median vectorized latency ns/value d={m.d} {region}", batch_ns, targets[region],
                    informational=True)
            verdict(10, f"median single-call latency ns d={m.d} {region}", single_ns, targets[region],
                    informational=True)
