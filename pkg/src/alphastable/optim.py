"""Limited-memory BFGS with optional box constraints.

The bounded variant follows the classical compact-representation scheme:
a generalized Cauchy point along the projected steepest-descent path, a
quasi-Newton step on the free variables, and a strong-Wolfe line search
along the resulting feasible direction.  Without bounds it reduces to
ordinary L-BFGS.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


# relative change in the objective treated as evaluation noise
F_ROUNDOFF = 1e-12


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    LINE_SEARCH_FAILED = "line_search_failed"
    NO_PROGRESS = "no_progress"


class OptimizationError(RuntimeError):
    """Non-finite objective or gradient; ``x`` is the offending point."""

    def __init__(self, msg, x):
        super().__init__(msg)
        self.x = np.array(x, copy=True)


@dataclass(frozen=True)
class OptimizerConfig:
    memory: int = 10
    max_iter: int = 500
    gtol: float = 1e-8
    ftol: float = 0.0
    c1: float = 1e-4
    c2: float = 0.9
    max_ls_evals: int = 40
    lower: np.ndarray | float | None = None
    upper: np.ndarray | float | None = None

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be at least 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")
        if self.lower is not None and self.upper is not None:
            if np.any(np.asarray(self.lower) >= np.asarray(self.upper)):
                raise ValueError("lower bounds must lie below upper bounds")

    @property
    def bounded(self) -> bool:
        return self.lower is not None or self.upper is not None

    def bounds_for(self, n: int):
        lo = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(np.asarray(self.lower, float), (n,)).copy()
        hi = np.full(n, np.inf) if self.upper is None else np.broadcast_to(np.asarray(self.upper, float), (n,)).copy()
        return lo, hi


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    grad_norm: float
    step: float
    n_evals: int


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    termination: Termination
    trace: list[IterationRecord] = field(default_factory=list)
    n_evals: int = 0

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    @property
    def n_iter(self) -> int:
        return len(self.trace) - 1


def projected_gradient(x, g, lo, hi):
    pg = g.copy()
    pg[(x <= lo) & (g > 0)] = 0.0
    pg[(x >= hi) & (g < 0)] = 0.0
    return pg


class _Memory:
    """Correction pairs and the compact form ``B = theta I - W M W^T``."""

    def __init__(self, m):
        self.m = m
        self.S, self.Y = [], []
        self.theta = 1.0
        self.W = None
        self.M = None

    def __len__(self):
        return len(self.S)

    def reset(self):
        self.S, self.Y = [], []
        self.theta = 1.0
        self.W = self.M = None

    def push(self, s, y):
        sy = float(s @ y)
        if sy <= 2.2e-16 * float(y @ y):
            return False
        self.S.append(s)
        self.Y.append(y)
        if len(self.S) > self.m:
            self.S.pop(0)
            self.Y.pop(0)
        self.theta = float(y @ y) / sy
        S = np.column_stack(self.S)
        Y = np.column_stack(self.Y)
        SY = S.T @ Y
        D = np.diag(np.diag(SY))
        L = np.tril(SY, -1)
        K = np.block([[-D, L.T], [L, self.theta * (S.T @ S)]])
        self.W = np.hstack([Y, self.theta * S])
        self.M = np.linalg.inv(K)
        return True


def _cauchy_point(x, g, lo, hi, mem: _Memory):
    """Generalized Cauchy point and ``c = W^T (x_cp - x)``."""
    n = len(x)
    t = np.full(n, np.inf)
    neg, pos = g < 0, g > 0
    t[neg] = (x[neg] - hi[neg]) / g[neg]
    t[pos] = (x[pos] - lo[pos]) / g[pos]
    d = np.where(t > 0, -g, 0.0)
    xcp = x.copy()
    theta = mem.theta
    if mem.W is None:
        W = np.zeros((n, 0))
        M = np.zeros((0, 0))
    else:
        W, M = mem.W, mem.M
    p = W.T @ d
    c = np.zeros(W.shape[1])
    fp = -float(d @ d)
    fpp = -theta * fp - float(p @ M @ p)
    if fp >= 0:
        return xcp, c
    dt_min = -fp / fpp if fpp > 0 else np.inf
    t_old = 0.0
    order = [i for i in np.argsort(t) if t[i] > 0 and np.isfinite(t[i])]
    for b in order:
        dt = t[b] - t_old
        if dt_min < dt:
            break
        xcp[b] = hi[b] if d[b] > 0 else lo[b]
        zb = xcp[b] - x[b]
        c = c + dt * p
        gb = g[b]
        wb = W[b]
        fp = fp + dt * fpp + gb * gb + theta * gb * zb - gb * float(wb @ M @ c)
        fpp = fpp - theta * gb * gb - 2.0 * gb * float(wb @ M @ p) - gb * gb * float(wb @ M @ wb)
        p = p + gb * wb
        d[b] = 0.0
        t_old = t[b]
        if fp >= 0:
            return xcp, c
        dt_min = -fp / fpp if fpp > 0 else np.inf
    if not np.isfinite(dt_min):
        # unbounded model along the path without curvature: take a unit step
        dt_min = 1.0
    dt_min = max(dt_min, 0.0)
    t_old += dt_min
    free = d != 0
    xcp[free] = x[free] + t_old * d[free]
    c = c + dt_min * p
    return np.clip(xcp, lo, hi), c


def _subspace_step(x, g, lo, hi, xcp, c, mem: _Memory):
    """Minimize the model over the variables free at the Cauchy point."""
    free = (xcp > lo) & (xcp < hi)
    if not np.any(free) or mem.W is None:
        return xcp
    theta, W, M = mem.theta, mem.W, mem.M
    Z = np.flatnonzero(free)
    WZ = W[Z]
    r = g[Z] + theta * (xcp[Z] - x[Z]) - WZ @ (M @ c)
    v = M @ (WZ.T @ r)
    N = np.eye(M.shape[0]) - (M @ (WZ.T @ WZ)) / theta
    v = np.linalg.solve(N, v)
    du = -r / theta - (WZ @ v) / theta ** 2
    # truncate to stay feasible
    alpha = 1.0
    for zi, di in zip(Z, du):
        if di > 0 and np.isfinite(hi[zi]):
            alpha = min(alpha, (hi[zi] - xcp[zi]) / di)
        elif di < 0 and np.isfinite(lo[zi]):
            alpha = min(alpha, (lo[zi] - xcp[zi]) / di)
    out = xcp.copy()
    out[Z] = xcp[Z] + max(alpha, 0.0) * du
    return np.clip(out, lo, hi)


def _cubic_min(a, fa, ga, b, fb, gb):
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = math.copysign(math.sqrt(disc), b - a)
    den = gb - ga + 2 * d2
    if den == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / den


def _strong_wolfe(phi, f0, dg0, step, step_max, c1, c2, max_evals):
    """Step satisfying the strong Wolfe conditions, capped at ``step_max``.

    ``phi(a)`` returns ``(f, g_vec, dg)``.  Returns ``(a, f, g_vec, evals)``
    or ``None`` when no acceptable step is found.
    """
    evals = 0
    a_prev, f_prev, dg_prev = 0.0, f0, dg0
    a = min(step, step_max)
    best = None

    def approx_wolfe(f, dg):
        # once f changes at roundoff level only the slope is informative
        return abs(f - f0) <= F_ROUNDOFF * abs(f0) and c2 * dg0 <= dg <= (1 - 2 * c1) * -dg0

    def zoom(lo, f_lo, dg_lo, g_lo, hi, f_hi, dg_hi):
        nonlocal evals
        while evals < max_evals:
            width = hi - lo
            trial = _cubic_min(lo, f_lo, dg_lo, hi, f_hi, dg_hi)
            left, right = min(lo, hi), max(lo, hi)
            if trial is None or not (left + 0.1 * abs(width) <= trial <= right - 0.1 * abs(width)):
                trial = 0.5 * (lo + hi)
            f, g, dg = phi(trial)
            evals += 1
            if approx_wolfe(f, dg):
                return trial, f, g
            if f > f0 + c1 * trial * dg0 or f >= f_lo:
                hi, f_hi, dg_hi = trial, f, dg
            else:
                if abs(dg) <= -c2 * dg0:
                    return trial, f, g
                if dg * (hi - lo) >= 0:
                    hi, f_hi, dg_hi = lo, f_lo, dg_lo
                lo, f_lo, dg_lo, g_lo = trial, f, dg, g
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        # fall back to the best sufficient-decrease point seen
        if lo > 0 and g_lo is not None:
            return lo, f_lo, g_lo
        return None

    g_prev = None
    while evals < max_evals:
        f, g, dg = phi(a)
        evals += 1
        if approx_wolfe(f, dg):
            return a, f, g, evals
        if f > f0 + c1 * a * dg0 or (evals > 1 and f >= f_prev):
            res = zoom(a_prev, f_prev, dg_prev, g_prev, a, f, dg)
            return None if res is None else (*res, evals)
        if abs(dg) <= -c2 * dg0:
            return a, f, g, evals
        if dg >= 0:
            res = zoom(a, f, dg, g, a_prev, f_prev, dg_prev)
            return None if res is None else (*res, evals)
        best = (a, f, g)
        if a >= step_max:
            return a, f, g, evals
        a_prev, f_prev, dg_prev, g_prev = a, f, dg, g
        a = min(2.0 * a, step_max)
    if best is not None:
        return (*best, evals)
    return None


def lbfgs_minimize(fun, x0, cfg: OptimizerConfig = OptimizerConfig(), callback=None) -> OptimizeResult:
    """Minimize ``fun(x) -> (value, gradient)`` from a feasible ``x0``.

    The objective is non-increasing over accepted iterates up to a relative
    ``F_ROUNDOFF``; with bounds every evaluated point lies inside the box.
    """
    x = np.array(x0, dtype=float).ravel()
    n = x.size
    lo, hi = cfg.bounds_for(n)
    if np.any(x < lo) or np.any(x > hi):
        raise ValueError("starting point violates the bounds")

    evals = 0

    def evaluate(z):
        nonlocal evals
        evals += 1
        f, g = fun(z)
        g = np.asarray(g, dtype=float).ravel()
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise OptimizationError("non-finite objective or gradient", z)
        return float(f), g

    f, g = evaluate(x)
    mem = _Memory(cfg.memory)
    pg = projected_gradient(x, g, lo, hi)
    trace = [IterationRecord(0, f, float(np.max(np.abs(pg), initial=0.0)), 0.0, evals)]
    status = Termination.MAX_ITER
    for it in range(1, cfg.max_iter + 1):
        if trace[-1].grad_norm <= cfg.gtol:
            status = Termination.CONVERGED
            break
        xcp, c = _cauchy_point(x, g, lo, hi, mem)
        target = _subspace_step(x, g, lo, hi, xcp, c, mem)
        d = target - x
        dg0 = float(g @ d)
        if dg0 >= 0 or not np.any(d):
            if len(mem) == 0:
                status = Termination.NO_PROGRESS
                break
            mem.reset()
            continue
        # largest feasible multiple of d
        step_max = np.inf
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(d > 0, (hi - x) / d, np.inf)
            dn = np.where(d < 0, (lo - x) / d, np.inf)
        step_max = float(min(np.min(up), np.min(dn), 1e10))
        step0 = 1.0
        if len(mem) == 0 and not cfg.bounded:
            step0 = min(1.0, 1.0 / max(np.linalg.norm(d), 1e-300))

        def phi(a):
            z = np.clip(x + a * d, lo, hi)
            fz, gz = evaluate(z)
            return fz, gz, float(gz @ d)

        ls = _strong_wolfe(phi, f, dg0, step0, max(step_max, 0.0), cfg.c1, cfg.c2, cfg.max_ls_evals)
        if ls is None:
            if len(mem) > 0:
                mem.reset()
                continue
            status = Termination.LINE_SEARCH_FAILED
            break
        a, f_new, g_new, _ = ls
        x_new = np.clip(x + a * d, lo, hi)
        if f_new > f + F_ROUNDOFF * abs(f):
            status = Termination.LINE_SEARCH_FAILED
            break
        mem.push(x_new - x, g_new - g)
        f_old = f
        x, f, g = x_new, f_new, g_new
        pg = projected_gradient(x, g, lo, hi)
        trace.append(IterationRecord(it, f, float(np.max(np.abs(pg), initial=0.0)), a, evals))
        if callback is not None:
            callback(x, f)
        if cfg.ftol > 0 and (f_old - f) <= cfg.ftol * max(abs(f_old), abs(f), 1.0):
            status = Termination.NO_PROGRESS
            break
    else:
        if trace[-1].grad_norm <= cfg.gtol:
            status = Termination.CONVERGED
    return OptimizeResult(x, f, g, status, trace, evals)
