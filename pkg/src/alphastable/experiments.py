"""Assembling and running the deconvolution and conductivity experiments."""

from __future__ import annotations

import csv
import dataclasses
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .config import ExperimentConfig
from .forward import (
    EllipticProblem,
    NoiseModel,
    PDELikelihood,
    build_conv_1d,
    build_conv_2d,
    default_conductivity,
    generate_data,
    halton_grid_indices,
    halton_points,
    interpolate_truth,
    pad_solution,
    padded_axes,
    solve_pde,
    truth_1d,
    truth_2d,
)
from .hybrid import HybridModel
from .optim import OptimizerConfig
from .posterior import (
    ConductivityPosterior,
    Deconvolution1DPosterior,
    Field2DPosterior,
    GaussianLikelihood,
    MapResult,
    Posterior,
    rmse,
    solve_map,
)
from .priors import (
    DifferencePrior1D,
    FieldPrior2D,
    HierarchicalSpec,
    InitialDist,
    scale_transform,
    stability_transform,
)


@dataclass
class Experiment:
    """Posterior plus the reference quantities needed to judge its MAP estimate."""

    config: ExperimentConfig
    posterior: Posterior
    truth: np.ndarray
    data: np.ndarray
    obs_points: np.ndarray
    backprojection: np.ndarray | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class ModelSet:
    """Hybrid models by dimension, loaded on first use."""

    grid_dir: Path
    desk: bool = True
    parallelism: int = 1
    _models: dict = field(default_factory=dict)

    def __getitem__(self, d: int) -> HybridModel:
        if d not in self._models:
            self._models[d] = HybridModel.load(self.grid_dir, d, self.desk, self.parallelism)
        return self._models[d]


def _initial(cfg: ExperimentConfig) -> InitialDist:
    return InitialDist(cfg.prior.initial, cfg.prior.sigma0 if cfg.prior.initial == "stable" else None)


def optimizer_config(cfg: ExperimentConfig) -> OptimizerConfig:
    o = cfg.optimizer
    return OptimizerConfig(memory=o.memory, max_iter=o.max_iter, gtol=o.gtol, lower=o.lower, upper=o.upper)


@dataclass
class Dataset:
    """Synthetic observations and the truth they were generated from.

    ``truth`` lives on the fine generating grid, ``truth_recon`` on the
    reconstruction grid used for error metrics.
    """

    kind: str
    data: np.ndarray
    obs_points: np.ndarray
    truth: np.ndarray
    truth_recon: np.ndarray
    extras: dict = field(default_factory=dict)


def generate_dataset(cfg: ExperimentConfig) -> Dataset:
    f = cfg.forward
    noise = NoiseModel(f.noise_std, f.seed)
    if cfg.kind == "deconv1d":
        fine = build_conv_1d(f.truth_size, f.n_obs)
        op = build_conv_1d(f.recon_size, f.n_obs)
        truth = truth_1d(fine.src_points, f.truth_seed)
        y = generate_data(fine, truth, noise)
        return Dataset(cfg.kind, y, op.obs_points, truth, truth_1d(op.src_points, f.truth_seed),
                       {"op": op, "fine_grid": fine.src_points, "grid": op.src_points})
    if cfg.kind == "deconv2d":
        obs = halton_points(f.n_obs)
        fine = build_conv_2d((f.truth_size, f.truth_size), obs)
        op = build_conv_2d((f.recon_size, f.recon_size), obs)
        truth = truth_2d(fine.src_points).reshape(f.truth_size, f.truth_size)
        y = generate_data(fine, truth, noise)
        recon = truth_2d(op.src_points).reshape(f.recon_size, f.recon_size)
        return Dataset(cfg.kind, y, obs, truth, recon, {"op": op})
    fine = EllipticProblem.on_unit_square(f.truth_size, averaging=f.averaging)
    Xf, Yf = fine.nodes
    k_fine = default_conductivity(Xf, Yf)
    u_fine = solve_pde(fine, k_fine)
    idx = halton_grid_indices(f.recon_size, f.n_obs)
    prob = EllipticProblem.on_unit_square(f.recon_size, obs_index=idx, averaging=f.averaging,
                                          log_parameter=f.log_parameter)
    X, Y = prob.nodes
    pts = np.column_stack([X.ravel()[idx], Y.ravel()[idx]])
    clean = interpolate_truth(pad_solution(u_fine), padded_axes(fine), pts)
    y = clean + noise.sample(len(clean))
    return Dataset(cfg.kind, y, pts, k_fine, default_conductivity(X, Y),
                   {"problem": prob, "state": u_fine, "source": prob.source})


def build_experiment(cfg: ExperimentConfig, models: ModelSet, dataset: Dataset | None = None) -> Experiment:
    ds = generate_dataset(cfg) if dataset is None else dataset
    f, p = cfg.forward, cfg.prior
    init = _initial(cfg)
    if cfg.kind == "deconv1d":
        op = ds.extras["op"]
        prior = DifferencePrior1D(f.recon_size, p.alpha, p.sigma, init)
        hier = None
        if p.mode != "none":
            hier = HierarchicalSpec(p.mode, p.alpha_s, p.sigma_s, p.alpha_c, p.sigma_c)
        post = Deconvolution1DPosterior(GaussianLikelihood(op, ds.data, f.noise_std), prior, models[1], hier)
        return Experiment(cfg, post, ds.truth_recon, ds.data, ds.obs_points, op.backproject(ds.data),
                          {"grid": ds.extras["grid"]})
    prior = FieldPrior2D(f.recon_size, f.recon_size, p.alpha, p.sigma, init)
    boundary = models[1] if init.kind == "stable" else None
    if cfg.kind == "deconv2d":
        op = ds.extras["op"]
        post = Field2DPosterior(GaussianLikelihood(op, ds.data, f.noise_std), prior, models[2], boundary)
        return Experiment(cfg, post, ds.truth_recon, ds.data, ds.obs_points, op.backproject(ds.data))
    post = ConductivityPosterior(PDELikelihood(ds.extras["problem"], ds.data, f.noise_std), prior,
                                 models[2], boundary)
    return Experiment(cfg, post, ds.truth_recon, ds.data, ds.obs_points, None,
                      {"source": ds.extras["source"]})


def write_dataset(ds: Dataset, cfg: ExperimentConfig, out: Path) -> None:
    """Observations, coordinates and truth as CSV plus a provenance manifest."""
    out.mkdir(parents=True, exist_ok=True)
    pts = np.asarray(ds.obs_points)
    if pts.ndim == 1:
        _write_csv(out / "observations.csv", ["x", "y"], zip(pts, ds.data))
        _write_csv(out / "truth.csv", ["x", "truth"], zip(ds.extras["fine_grid"], ds.truth))
    else:
        _write_csv(out / "observations.csv", ["x", "y", "value"],
                   ((p[0], p[1], v) for p, v in zip(pts, ds.data)))
        _write_matrix(out / "truth.csv", ds.truth)
    f = cfg.forward
    manifest = {
        "kind": cfg.kind,
        "forward": dataclasses.asdict(f),
        "noise_generator": "numpy Philox, standard normal",
        "files": ["observations.csv", "truth.csv"],
    }
    if cfg.kind == "deconv1d":
        manifest["kernel"] = {"amplitude": 25.0, "bandwidth": 50.0}
    elif cfg.kind == "deconv2d":
        manifest["kernel"] = {"amplitude": 150.0 / np.pi, "bandwidth": 150.0}
        manifest["observation_sequence"] = "Halton bases 2 and 3, unscrambled"
    else:
        manifest["observation_sequence"] = "Halton bases 2 and 3 snapped to reconstruction nodes"
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))


def estimate_fields(exp: Experiment, res: MapResult) -> dict[str, np.ndarray]:
    """MAP blocks reshaped, with hierarchical layers also in transformed units."""
    cfg = exp.config
    out = {}
    for name, vec in res.estimate.items():
        if cfg.kind == "deconv1d":
            out[name] = vec
        else:
            out[name] = vec.reshape(cfg.forward.recon_size, cfg.forward.recon_size)
    if "s" in out:
        out["alpha"] = stability_transform(out["s"])
    if "c" in out:
        out["sigma"] = scale_transform(out["c"])
    if cfg.kind == "pde" and cfg.forward.log_parameter:
        out["k"] = np.exp(out["k"])
    return out


def metrics(exp: Experiment, res: MapResult) -> dict:
    est = estimate_fields(exp, res)
    main = est["k"] if exp.config.kind == "pde" else est["u"]
    m = {
        "objective_start": float(res.start_objective),
        "objective_final": float(res.objective),
        "termination": res.optimization.termination.value,
        "iterations": res.optimization.n_iter,
        "evaluations": res.optimization.n_evals,
        "rmse_map": rmse(main, exp.truth),
    }
    if exp.config.kind == "pde":
        m["rmse_start"] = rmse(np.ones_like(exp.truth), exp.truth)
        m["k_min"] = float(np.min(main))
        m["k_max"] = float(np.max(main))
    else:
        m["rmse_zero"] = rmse(np.zeros_like(exp.truth), exp.truth)
        m["rmse_backprojection"] = rmse(exp.backprojection, exp.truth)
    return m


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _write_matrix(path: Path, mat):
    np.savetxt(path, np.asarray(mat), delimiter=",", fmt="%.17g")


def write_outputs(exp: Experiment, res: MapResult, out: Path, plots: bool = True) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    cfg = exp.config
    est = estimate_fields(exp, res)
    trace = res.optimization.trace
    _write_csv(out / "trace.csv", ["iteration", "objective", "grad_norm", "step", "evaluations"],
               [(t.iteration, repr(t.objective), repr(t.grad_norm), repr(t.step), t.n_evals) for t in trace])
    if cfg.kind == "deconv1d":
        grid = exp.extras["grid"]
        _write_csv(out / "truth.csv", ["x", "truth"], zip(grid, exp.truth))
        _write_csv(out / "data.csv", ["x", "y"], zip(exp.obs_points, exp.data))
        names = [n for n in ("u", "alpha", "sigma", "s", "c") if n in est]
        _write_csv(out / "reconstruction.csv", ["x"] + names, zip(grid, *(est[n] for n in names)))
    else:
        _write_csv(out / "data.csv", ["x", "y", "value"],
                   ((p[0], p[1], v) for p, v in zip(exp.obs_points, exp.data)))
        _write_matrix(out / "truth.csv", exp.truth)
        _write_matrix(out / "reconstruction.csv", est["k"] if cfg.kind == "pde" else est["u"])
        if cfg.kind == "pde":
            _write_matrix(out / "source.csv", exp.extras["source"])
    m = metrics(exp, res)
    manifest = {"config": cfg.to_dict(), "metrics": m,
                "files": sorted(p.name for p in out.iterdir() if p.suffix == ".csv")}
    if plots:
        from .plotting import plot_experiment

        manifest["figures"] = plot_experiment(exp, est, out, trace)
    (out / "manifest.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False))
    return m


def run_experiment(cfg: ExperimentConfig, models: ModelSet, out: Path | None = None,
                   plots: bool = True) -> tuple[Experiment, MapResult, dict]:
    exp = build_experiment(cfg, models)
    res = solve_map(exp.posterior, cfg=optimizer_config(cfg), n_starts=cfg.optimizer.n_starts,
                    seed=cfg.forward.seed)
    m = metrics(exp, res) if out is None else write_outputs(exp, res, Path(out), plots)
    return exp, res, m


def sweep_configs(cfg: ExperimentConfig):
    """Product of the sweep block over (alpha, sigma); empty lists keep the base value."""
    alphas = cfg.sweep.alpha or [cfg.prior.alpha]
    sigmas = cfg.sweep.sigma or [cfg.prior.sigma]
    for a, s in itertools.product(alphas, sigmas):
        prior = dataclasses.replace(cfg.prior, alpha=float(a), sigma=float(s))
        yield f"alpha_{a:g}_sigma_{s:g}", dataclasses.replace(cfg, prior=prior).validate()
