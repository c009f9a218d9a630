"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 configuration or input
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .bounds import (
    PATTERNS,
    ErrorBudget,
    desk_cells,
    log_error_from_relative,
    make_cells,
    sweep,
    tail_relative_error_sup,
)
from .config import ConfigError, ExperimentConfig
from .forward import PDESolveError
from .hybrid import HybridModel, default_grid_dir, logpdf
from .optim import OptimizationError
from .oracles import OracleError, StableParams
from .splines import (
    GridSpec,
    grid_filename,
    load_or_precompute,
    precompute_grid,
    write_grid,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4


class CLIError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


def _dims(value: str):
    return (1, 2) if value == "all" else (int(value),)


def _grid_dir(args) -> Path:
    return Path(args.grid_dir) if args.grid_dir else default_grid_dir(args.desk_scale)


def _load_models(args, dims):
    grid_dir = _grid_dir(args)
    models = {}
    for d in dims:
        for region in ("inner", "main"):
            if not (grid_dir / grid_filename(region, d)).exists():
                raise CLIError(f"missing grid {grid_dir / grid_filename(region, d)}; run precompute first",
                               EXIT_CONFIG)
        models[d] = HybridModel.load(grid_dir, d, args.desk_scale, args.threads)
    return models


def _out(args, default: str) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise CLIError("--config is required", EXIT_CONFIG)
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, forward=dataclasses.replace(cfg.forward, seed=args.seed))
    return cfg


# --------------------------------------------------------------------------
# verbs

def cmd_precompute(args) -> int:
    grid_dir = _grid_dir(args)
    grid_dir.mkdir(parents=True, exist_ok=True)
    regions = ("inner", "main") if args.region == "all" else (args.region,)
    for d in _dims(args.d):
        for region in regions:
            spec = GridSpec.hybrid(region, args.desk_scale)
            t0 = time.time()
            grid = precompute_grid(spec, d, parallelism=args.threads)
            path = grid_dir / grid_filename(region, d)
            write_grid(path, grid)
            print(f"{path}: {spec.n_r} x {spec.n_alpha} nodes (r x alpha), d={d}, "
                  f"{time.time() - t0:.1f}s")
    return EXIT_OK


def cmd_model_build(args) -> int:
    grid_dir = _grid_dir(args)
    for d in _dims(args.d):
        for region in ("inner", "main"):
            load_or_precompute(grid_dir, region, d, args.desk_scale, parallelism=args.threads)
        m = HybridModel.load(grid_dir, d, args.desk_scale, args.threads)
        size = sum(a.nbytes for s in (m.s1, m.s2, m.s3) for a in (s.f, s.f_r, s.f_alpha, s.f_ralpha))
        print(f"d={d}: h_r={m.h_r:g}, h_alpha={m.h_alpha:g}, spline data {size / 1e6:.1f} MB")
    return EXIT_OK


def cmd_model_check(args) -> int:
    from .plotting import plot_errors
    from .validation import validate_model

    out = _out(args, "model-check")
    models = _load_models(args, _dims(args.d))
    ok = True
    lines = []
    for d, m in models.items():
        report, details = validate_model(m, args.desk_scale, args.samples, args.seed or 0, args.threads)
        ok &= report.passed
        lines.append(report.text())
        bad = details["monotonicity_violations"]
        lines.append(f"INFO  monotonicity in r (d={d}): {len(bad)} violations at 10x node density"
                     + (f", first at r={bad[0][0]:.4g}, alpha={bad[0][1]:.4g}" if bad else ""))
        budget = details["budget"]
        if budget is not None:
            lines.append(f"budget d={d}: S40={budget.s40:.4g} S22={budget.s22:.4g} S04={budget.s04:.4g} "
                         f"-> {budget.spline_error:.4g}")
        np.savetxt(out / f"errors_d{d}.csv", np.column_stack([details["r"], details["alpha"], details["errors"]]),
                   delimiter=",", header="r,alpha,abs_log_error", comments="")
        plot_errors(details["r"], details["alpha"], details["errors"], out / f"errors_d{d}.png",
                    None if budget is None else budget.spline_error)
    text = "\n".join(lines)
    print(text)
    (out / "report.txt").write_text(text + "\n")
    return EXIT_OK if ok else EXIT_VALIDATION


def cmd_bounds(args) -> int:
    out = _out(args, "bounds")
    h_r, h_alpha = (0.1, 0.01) if args.desk_scale else (0.01, 5e-4)
    if args.delta is None:
        cells = desk_cells()
    else:
        cells = make_cells(tuple(args.r_range), tuple(args.alpha_range), args.delta)
    report = {"h_r": h_r, "h_alpha": h_alpha, "cells": len(cells), "dimensions": {}}
    for d in _dims(args.d):
        res = sweep(cells, d, parallelism=args.threads)
        tail, at = tail_relative_error_sup(d)
        budget = ErrorBudget.from_sweep(res, h_r, h_alpha, tail)
        budget_07 = ErrorBudget.from_sweep(
            dataclasses.replace(res, cells=[c for c in res.cells if c.cell.a_lo >= 0.7 - 1e-12]),
            h_r, h_alpha, tail)
        report["dimensions"][d] = {
            "sup_log_derivative": {f"{p[0]}{p[1]}": float(res.log_derivative_sup(p)) for p in PATTERNS},
            "spline_error": float(budget.spline_error),
            "spline_error_alpha_ge_0.7": float(budget_07.spline_error),
            "tail_relative_error": float(tail),
            "tail_relative_error_argmax_alpha": float(at),
            "tail_log_error": float(log_error_from_relative(tail)),
            "partial": res.partial,
            "vacuous_cells": [[c.r_lo, c.r_hi, c.a_lo, c.a_hi] for c in res.vacuous],
            "dominant_families": {f"{p[0]}{p[1]}": res.dominant_families(p) for p in PATTERNS},
        }
    text = yaml.safe_dump(report, sort_keys=False)
    print(text)
    (out / "bounds.yaml").write_text(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    from .experiments import generate_dataset, write_dataset

    cfg = _config(args)
    out = _out(args, cfg.output_dir)
    write_dataset(generate_dataset(cfg), cfg, out)
    print(f"dataset written to {out}")
    return EXIT_OK


def _run_one(job):
    cfg, grid_dir, out, threads = job
    from .experiments import ModelSet, run_experiment

    models = ModelSet(Path(grid_dir), cfg.desk_scale, threads)
    _, res, m = run_experiment(cfg, models, Path(out))
    return m


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.desk_scale:
        cfg = dataclasses.replace(cfg, desk_scale=True)
    out = _out(args, cfg.output_dir)
    grid_dir = Path(args.grid_dir) if args.grid_dir else default_grid_dir(cfg.desk_scale)
    m = _run_one((cfg, grid_dir, out, args.threads))
    print(yaml.safe_dump(m, sort_keys=False))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import sweep_configs

    cfg = _config(args)
    out = _out(args, cfg.output_dir)
    grid_dir = Path(args.grid_dir) if args.grid_dir else default_grid_dir(cfg.desk_scale)
    jobs = [(c, grid_dir, out / name, 1) for name, c in sweep_configs(cfg)]
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    summary = {str(j[2].name): m for j, m in zip(jobs, results)}
    (out / "summary.yaml").write_text(yaml.safe_dump(summary, sort_keys=False))
    print(f"{len(jobs)} runs written under {out}")
    return EXIT_OK


def _median_latency(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return float(np.median(times))


def measure_latency(model: HybridModel, n: int = 100_000, seed: int = 0) -> list[tuple[str, float, float]]:
    """Median latency per region: ``(region, vectorized ns per value, single-call ns)``."""
    rng = np.random.default_rng(seed)
    rows = []
    for label, lo, hi in (("spline", 0.0, 29.6), ("tail", 30.5, 1000.0)):
        r = rng.uniform(lo, hi, n)
        a = rng.uniform(0.5, 1.9, n)
        batch_ns = _median_latency(lambda: model.evaluate(r, a), 7) / n
        params = StableParams(float(a[0]), 1.0, model.d)
        single_ns = _median_latency(lambda: logpdf(model, float(r[0]), params), 200)
        rows.append((label, batch_ns, single_ns))
    return rows


def cmd_benchmark(args) -> int:
    models = _load_models(args, _dims(args.d))
    rows = []
    for d, m in models.items():
        for label, batch_ns, single_ns in measure_latency(m, args.samples, args.seed or 0):
            rows.append((d, label, batch_ns, single_ns))
            print(f"d={d} {label:6s} vectorized {batch_ns:8.1f} ns/eval   single call {single_ns / 1e3:8.2f} us")
    if args.out:
        out = _out(args, "benchmark")
        with open(out / "benchmark.csv", "w") as fh:
            fh.write("d,region,vectorized_ns,single_call_ns\n")
            for d, label, b, s in rows:
                fh.write(f"{d},{label},{b:.1f},{s:.1f}\n")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration (YAML)")
    common.add_argument("--grid-dir", help="directory of precomputed grids")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--desk-scale", action="store_true", help="coarse grids and relaxed tolerances")
    common.add_argument("--d", default="all", choices=["1", "2", "all"], help="dimension")

    p = argparse.ArgumentParser(prog="alphastable", description="Stable log densities, priors and MAP inversion")
    sub = p.add_subparsers(dest="verb", required=True)

    pre = sub.add_parser("precompute", parents=[common], help="compute log-density grids")
    pre.add_argument("--region", default="all", choices=["inner", "main", "all"])
    pre.set_defaults(func=cmd_precompute)

    model = sub.add_parser("model", help="build or check hybrid models")
    msub = model.add_subparsers(dest="action", required=True)
    mb = msub.add_parser("build", parents=[common])
    mb.set_defaults(func=cmd_model_build)
    mc = msub.add_parser("check", parents=[common])
    mc.add_argument("--samples", type=int, default=5000)
    mc.set_defaults(func=cmd_model_check)

    b = sub.add_parser("bounds", parents=[common], help="certified error budget report")
    b.add_argument("--delta", type=float, default=None,
                   help="cell width of a full sweep over the ranges (default: fixed desk subsample)")
    b.add_argument("--r-range", type=float, nargs=2, default=[0.0, 30.0])
    b.add_argument("--alpha-range", type=float, nargs=2, default=[0.5, 1.9])
    b.set_defaults(func=cmd_bounds)

    g = sub.add_parser("generate", parents=[common], help="synthetic dataset")
    g.set_defaults(func=cmd_generate)
    r = sub.add_parser("run", parents=[common], help="MAP experiment")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", parents=[common], help="experiment over the (alpha, sigma) sweep block")
    s.set_defaults(func=cmd_sweep)
    bm = sub.add_parser("benchmark", parents=[common], help="evaluation latency")
    bm.add_argument("--samples", type=int, default=100_000)
    bm.set_defaults(func=cmd_benchmark)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OracleError, OptimizationError, PDESolveError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
