"""Model checks: seams, finite-difference derivatives, oracle accuracy and budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .bounds import ErrorBudget, desk_cells, log_error_from_relative, sweep, tail_relative_error_sup
from .hybrid import HybridModel
from .oracles import DEFAULT_QUAD, QuadratureConfig, contour_pdf, oracle_pdf

SEAMS = (0.9, 29.6, 30.0)
SEAM_VALUE_TOL = 1e-6
SEAM_SLOPE_TOL = 1e-4
DESK_RELAXATION = 100.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.threshold)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status}  {self.name}: {self.value:.3e} <= {self.threshold:.3e}"
        return text + (f"  ({self.detail})" if self.detail else "")


@dataclass
class Report:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def text(self) -> str:
        return "\n".join(c.line() for c in self.checks)


def seam_jumps(model: HybridModel, alphas, eps: float = 1e-7):
    """Largest value and slope jump at each seam over the given alphas."""
    out = {}
    for r in SEAMS:
        lo = model.evaluate(np.full(len(alphas), r - eps), alphas)
        hi = model.evaluate(np.full(len(alphas), r + eps), alphas)
        out[r] = (float(np.max(np.abs(lo[0] - hi[0]))), float(np.max(np.abs(lo[1] - hi[1]))))
    return out


def seam_checks(model: HybridModel, n_alpha: int = 200, seed: int = 0, desk: bool = True,
                eps: float = 1e-7) -> list[CheckResult]:
    alphas = np.random.default_rng(seed).uniform(0.5, 1.9, n_alpha)
    scale = DESK_RELAXATION if desk else 1.0
    out = []
    for r, (dv, ds) in seam_jumps(model, alphas, eps).items():
        out.append(CheckResult(f"seam r={r:g} value (d={model.d})", dv, SEAM_VALUE_TOL * scale))
        out.append(CheckResult(f"seam r={r:g} slope (d={model.d})", ds, SEAM_SLOPE_TOL * scale))
    return out


def monotonicity_violations(model: HybridModel, density: int = 10, r_max: float = 30.0) -> list[tuple[float, float]]:
    """``(r, alpha)`` where the model fails to decrease in r between samples.

    Lines of fixed alpha at every alpha node are sampled ``density`` times
    finer than the r nodes.  This is a soft check: the result is reported,
    not enforced.
    """
    spec = model.s2.spec
    r = np.linspace(0.0, r_max, int(round(r_max / spec.h_r)) * density + 1)
    out = []
    for a in spec.alpha_nodes:
        v = model.evaluate(r, np.full(r.shape, a))[0]
        bad = np.nonzero(np.diff(v) >= 0)[0]
        out.extend((float(r[j + 1]), float(a)) for j in bad)
    return out


def interior_points(n: int, seed: int = 0, r_max: float = 60.0):
    """Random points away from the seams and the alpha edges."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(0.01, r_max, 4 * n)
    a = rng.uniform(0.5 + 1e-4, 1.9 - 1e-4, 4 * n)
    keep = np.ones(len(r), dtype=bool)
    for s in SEAMS:
        keep &= np.abs(r - s) > 1e-3
    return r[keep][:n], a[keep][:n]


def derivative_errors(model: HybridModel, n: int = 500, seed: int = 0,
                      h_r: float = 1e-5, h_alpha: float = 1e-6):
    """Relative errors of ``d/dr`` and ``d/dalpha`` against central differences.

    The denominator is ``max(|fd|, 1e-3)`` so that vanishing derivatives are
    compared in absolute terms.
    """
    r, a = interior_points(n, seed)
    _, vr, va = model.evaluate(r, a)
    fr = (model.evaluate(r + h_r, a)[0] - model.evaluate(r - h_r, a)[0]) / (2 * h_r)
    fa = (model.evaluate(r, a + h_alpha)[0] - model.evaluate(r, a - h_alpha)[0]) / (2 * h_alpha)
    er = np.abs(vr - fr) / np.maximum(np.abs(fr), 1e-3)
    ea = np.abs(va - fa) / np.maximum(np.abs(fa), 1e-3)
    return er, ea


def derivative_checks(model: HybridModel, n: int = 500, seed: int = 0, tol: float = 1e-4):
    er, ea = derivative_errors(model, n, seed)
    return [CheckResult(f"d/dr vs finite differences (d={model.d})", float(er.max()), tol),
            CheckResult(f"d/dalpha vs finite differences (d={model.d})", float(ea.max()), tol)]


def quasi_random_points(n: int, r_range=(0.0, 30.0), a_range=(0.5, 1.9), seed: int = 0):
    pts = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    r = r_range[0] + (r_range[1] - r_range[0]) * pts[:, 0]
    a = a_range[0] + (a_range[1] - a_range[0]) * pts[:, 1]
    return r, a


def oracle_errors(model: HybridModel, r, a, cfg: QuadratureConfig = DEFAULT_QUAD,
                  reference=oracle_pdf) -> np.ndarray:
    """``|log f_model - log f_ref|``; use ``contour_pdf`` as ``reference`` for large r."""
    v, _, _ = model.evaluate(r, a)
    ref = np.array([math.log(reference(float(ri), float(ai), model.d, cfg)) for ri, ai in zip(r, a)])
    return np.abs(v - ref)


def desk_budget(d: int, h_r: float, h_alpha: float, cells=None, parallelism: int = 1,
                alpha_min: float = 0.5) -> ErrorBudget:
    """Interpolation budget from the fixed desk subsample of cells."""
    cells = desk_cells() if cells is None else cells
    cells = [c for c in cells if c.a_lo >= alpha_min - 1e-12]
    return ErrorBudget.from_sweep(sweep(cells, d, parallelism=parallelism), h_r, h_alpha)


def validate_model(model: HybridModel, desk: bool = True, samples: int = 5000, seed: int = 0,
                   parallelism: int = 1, budget: ErrorBudget | None = None) -> tuple[Report, dict]:
    """Seam, derivative, oracle-accuracy and tail checks of one model."""
    report = Report()
    for c in seam_checks(model, seed=seed, desk=desk):
        report.add(c)
    for c in derivative_checks(model, seed=seed):
        report.add(c)
    r, a = quasi_random_points(samples, seed=seed)
    err = oracle_errors(model, r, a)
    if budget is None:
        if desk:
            budget = desk_budget(model.d, model.h_r, model.h_alpha, parallelism=parallelism)
            threshold = budget.spline_error
        else:
            threshold = 0.0004 if model.d == 1 else 0.22
    else:
        threshold = budget.spline_error
    k = int(np.argmax(err))
    report.add(CheckResult(f"oracle accuracy on [0,30] (d={model.d})", float(err.max()), threshold,
                           f"worst at r={r[k]:.4g}, alpha={a[k]:.4g}"))
    tail_bound = tail_relative_error_sup(model.d)[0]
    rt = 30.0 + 170.0 * qmc.Halton(d=1, scramble=True, seed=seed).random(200)[:, 0]
    at = np.random.default_rng(seed).uniform(0.5, 1.9, len(rt))
    tail_err = oracle_errors(model, rt, at, reference=contour_pdf)
    report.add(CheckResult(f"tail accuracy on (30,200] (d={model.d})", float(tail_err.max()),
                           log_error_from_relative(tail_bound)))
    details = {"r": r, "alpha": a, "errors": err, "budget": budget,
               "monotonicity_violations": monotonicity_violations(model)}
    return report, details
