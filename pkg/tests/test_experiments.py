import dataclasses
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

import alphastable
from alphastable.config import ExperimentConfig
from alphastable.experiments import (
    ModelSet,
    build_experiment,
    generate_dataset,
    run_experiment,
    sweep_configs,
    write_dataset,
)
from alphastable.forward import K_MAX, K_MIN
from alphastable.optim import F_ROUNDOFF
from alphastable.posterior import solve_map

from fd import fd_gradient, rel_error

CONFIG_DIR = Path(alphastable.__file__).parent / "configs"
SHIPPED = sorted(CONFIG_DIR.glob("*.yaml"))


def small(kind, **fwd):
    cfg = ExperimentConfig.default(kind)
    return dataclasses.replace(cfg, forward=dataclasses.replace(cfg.forward, **fwd))


@pytest.mark.parametrize("kind, sizes", [
    ("deconv1d", dict(truth_size=80, recon_size=20, n_obs=10)),
    ("deconv2d", dict(truth_size=12, recon_size=8, n_obs=20)),
    ("pde", dict(truth_size=11, recon_size=7, n_obs=15)),
])
def test_posterior_gradients(desk_models, kind, sizes):
    exp = build_experiment(small(kind, **sizes), desk_models)
    p = exp.posterior
    rng = np.random.default_rng(0)
    x = p.default_start() + 0.05 * rng.standard_normal(p.dimension)
    if kind == "pde":
        x = np.abs(x) + 0.5
    g = p.value_and_gradient(x)[1]
    fd = fd_gradient(lambda z: p.value_and_gradient(z)[0], x, h=1e-6)
    assert rel_error(g, fd) < 1e-4


@pytest.mark.parametrize("mode", ["stability", "scale", "both"])
def test_hierarchical_posterior_gradient(desk_models, mode):
    cfg = small("deconv1d", truth_size=80, recon_size=15, n_obs=8)
    cfg = dataclasses.replace(cfg, prior=dataclasses.replace(cfg.prior, mode=mode))
    p = build_experiment(cfg, desk_models).posterior
    x = 0.1 * np.random.default_rng(1).standard_normal(p.dimension)
    fd = fd_gradient(lambda z: p.value_and_gradient(z)[0], x)
    assert rel_error(p.value_and_gradient(x)[1], fd) < 1e-4


def test_dataset_is_deterministic(tmp_path):
    cfg = small("deconv1d", truth_size=100, recon_size=30, n_obs=12)
    a, b = generate_dataset(cfg), generate_dataset(cfg)
    assert np.array_equal(a.data, b.data)
    write_dataset(a, cfg, tmp_path)
    assert {"observations.csv", "truth.csv", "manifest.yaml"} <= {p.name for p in tmp_path.iterdir()}
    other = generate_dataset(dataclasses.replace(cfg, forward=dataclasses.replace(cfg.forward, seed=9)))
    assert not np.array_equal(a.data, other.data)


def test_run_writes_outputs(desk_models, tmp_path):
    cfg = small("deconv1d", truth_size=100, recon_size=30, n_obs=12)
    _, res, m = run_experiment(cfg, desk_models, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert {"reconstruction.csv", "trace.csv", "reconstruction.png", "manifest.yaml"} <= names
    manifest = yaml.safe_load((tmp_path / "manifest.yaml").read_text())
    assert manifest["metrics"]["rmse_map"] == pytest.approx(m["rmse_map"])
    assert m["objective_final"] < m["objective_start"]


def test_multistart_keeps_the_best(desk_models):
    cfg = small("deconv1d", truth_size=100, recon_size=25, n_obs=12)
    p = build_experiment(cfg, desk_models).posterior
    one = solve_map(p)
    three = solve_map(p, n_starts=3, seed=4)
    assert three.objective <= one.objective + 1e-9


def test_sweep_expansion():
    cfg = ExperimentConfig.load(CONFIG_DIR / "sweep_deconv1d.yaml")
    runs = list(sweep_configs(cfg))
    assert len(runs) == 15
    assert runs[0][0] == "alpha_0.8_sigma_0.01"
    assert {c.prior.alpha for _, c in runs} == {0.8, 1.0, 1.3, 1.6, 1.9}


@pytest.mark.parametrize("path", SHIPPED, ids=[p.stem for p in SHIPPED])
def test_descent_on_shipped_configs(desk_models, path):
    cfg = ExperimentConfig.load(path)
    models = desk_models
    if not cfg.desk_scale:
        full = os.environ.get("ALPHASTABLE_FULL_GRID_DIR")
        if not full:
            pytest.skip("full-resolution configuration")
        models = ModelSet(Path(full), desk=False)
    exp, res, m = run_experiment(cfg, models, None)
    obj = [t.objective for t in res.optimization.trace]
    assert all(b <= a + F_ROUNDOFF * abs(a) for a, b in zip(obj, obj[1:]))
    if cfg.kind == "pde":
        assert K_MIN <= m["k_min"] and m["k_max"] <= K_MAX
