"""Runtime evaluation of stable log densities from the fitted splines and the tail series."""

from __future__ import annotations

import enum
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .oracles import HYBRID_ALPHA_MAX, HYBRID_ALPHA_MIN, SeriesOrder, StableParams, tail_log_series
from .splines import (
    R_INNER,
    R_TAIL,
    R_TRANSITION,
    BicubicSpline,
    build_hybrid_splines,
    load_or_precompute,
)


class Region(enum.Enum):
    SPLINE1 = "spline1"
    SPLINE2 = "spline2"
    TRANSITION = "transition"
    TAIL_SERIES = "tail_series"


@dataclass(frozen=True)
class EvalResult:
    logpdf: float
    d_dr: float
    d_dalpha: float


@dataclass(frozen=True)
class EvalBatch:
    """Element-wise results of :func:`logpdf_vec`."""

    logpdf: np.ndarray
    d_dr: np.ndarray
    d_dalpha: np.ndarray

    def __len__(self):
        return len(self.logpdf)

    def __getitem__(self, k) -> EvalResult:
        return EvalResult(float(self.logpdf[k]), float(self.d_dr[k]), float(self.d_dalpha[k]))


@dataclass(frozen=True)
class HybridModel:
    d: int
    s1: BicubicSpline
    s2: BicubicSpline
    s3: BicubicSpline
    tail_order: int = 3
    r_inner: float = R_INNER
    r_transition: float = R_TRANSITION
    r_tail: float = R_TAIL

    @classmethod
    def from_grids(cls, inner, main, order: SeriesOrder | int = 3) -> "HybridModel":
        n = order.n_terms if isinstance(order, SeriesOrder) else int(order)
        s1, s2, s3 = build_hybrid_splines(inner, main, n)
        return cls(main.dimension, s1, s2, s3, n)

    @classmethod
    def load(cls, grid_dir, d: int, desk: bool = True, parallelism: int = 1) -> "HybridModel":
        """Model from the grids in ``grid_dir``; missing grids are computed and stored."""
        inner = load_or_precompute(grid_dir, "inner", d, desk, parallelism=parallelism)
        main = load_or_precompute(grid_dir, "main", d, desk, parallelism=parallelism)
        return cls.from_grids(inner, main)

    @property
    def h_r(self) -> float:
        return self.s2.spec.h_r

    @property
    def h_alpha(self) -> float:
        return self.s2.spec.h_alpha

    def evaluate(self, r, alpha):
        """``(log f, d/dr, d/dalpha)`` at standard scale for arrays ``r >= 0`` and ``alpha``."""
        r = np.asarray(r, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        r, alpha = np.broadcast_arrays(r, alpha)
        if np.any(r < 0) or np.any(np.isnan(r)):
            raise ValueError("radial argument must be non-negative")
        check_alpha(alpha)
        v = np.empty(r.shape)
        vr = np.empty(r.shape)
        va = np.empty(r.shape)
        regions = (
            (r <= self.r_inner, self.s1),
            ((r > self.r_inner) & (r <= self.r_transition), self.s2),
            ((r > self.r_transition) & (r <= self.r_tail), self.s3),
        )
        for mask, spline in regions:
            if np.any(mask):
                v[mask], vr[mask], va[mask] = spline.eval_with_gradient(r[mask], alpha[mask])
        tail = r > self.r_tail
        if np.any(tail):
            v[tail], vr[tail], va[tail] = tail_log_series(r[tail], alpha[tail], self.tail_order, self.d)
        return v, vr, va


    def evaluate_scalar(self, r: float, alpha: float) -> tuple[float, float, float]:
        """``evaluate`` for one point without array overhead."""
        if not r >= 0:
            raise ValueError("radial argument must be non-negative")
        if not HYBRID_ALPHA_MIN <= alpha <= HYBRID_ALPHA_MAX:
            raise ValueError(f"alpha={alpha} outside [{HYBRID_ALPHA_MIN}, {HYBRID_ALPHA_MAX}]")
        if r <= self.r_inner:
            return self.s1.eval_scalar(r, alpha)
        if r <= self.r_transition:
            return self.s2.eval_scalar(r, alpha)
        if r <= self.r_tail:
            return self.s3.eval_scalar(r, alpha)
        v, vr, va = tail_log_series(r, alpha, self.tail_order, self.d)
        return float(v), float(vr), float(va)

def check_alpha(alpha):
    alpha = np.asarray(alpha)
    if np.any(~((alpha >= HYBRID_ALPHA_MIN) & (alpha <= HYBRID_ALPHA_MAX))):
        bad = alpha[~((alpha >= HYBRID_ALPHA_MIN) & (alpha <= HYBRID_ALPHA_MAX))].ravel()[0]
        raise ValueError(f"alpha={bad} outside [{HYBRID_ALPHA_MIN}, {HYBRID_ALPHA_MAX}]")


def region_of(model: HybridModel, r_scaled: float) -> Region:
    if r_scaled < 0:
        raise ValueError("r must be non-negative")
    if r_scaled <= model.r_inner:
        return Region.SPLINE1
    if r_scaled <= model.r_transition:
        return Region.SPLINE2
    if r_scaled <= model.r_tail:
        return Region.TRANSITION
    return Region.TAIL_SERIES


def _scaled(model, r, alpha, sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(~(sigma > 0)):
        raise ValueError("sigma must be positive")
    v, vr, va = model.evaluate(r / sigma, alpha)
    return v - model.d * np.log(sigma), vr / sigma, va


def logpdf(model: HybridModel, r: float, params: StableParams) -> EvalResult:
    """Log density of the radial argument ``r`` with scale handled by the scale law."""
    if params.d != model.d:
        raise ValueError(f"model is {model.d}-dimensional, params ask for d={params.d}")
    if r < 0:
        raise ValueError("r must be non-negative")
    params.check_hybrid_range()
    sigma = params.sigma
    v, vr, va = model.evaluate_scalar(r / sigma, params.alpha)
    return EvalResult(v - model.d * math.log(sigma), vr / sigma, va)


def logpdf_vec(model: HybridModel, x, params: StableParams | None = None, *,
               alpha=None, sigma=None) -> EvalBatch:
    """Batch evaluation at raw arguments.

    Univariate ``x`` is a vector of signed values; ``d_dr`` is then the
    derivative with respect to the raw value (odd in ``x``).  Bivariate ``x``
    has shape ``(n, 2)`` and ``d_dr`` is the radial derivative.  ``alpha``
    and ``sigma`` may be given per element instead of through ``params``.
    """
    if params is not None:
        if params.d != model.d:
            raise ValueError(f"model is {model.d}-dimensional, params ask for d={params.d}")
        alpha = params.alpha if alpha is None else alpha
        sigma = params.sigma if sigma is None else sigma
    if alpha is None or sigma is None:
        raise ValueError("alpha and sigma are required")
    x = np.asarray(x, dtype=float)
    if model.d == 1:
        r = np.abs(x)
        sign = np.sign(x)
    else:
        if x.ndim != 2 or x.shape[1] != 2:
            raise ValueError("bivariate arguments must have shape (n, 2)")
        r = np.hypot(x[:, 0], x[:, 1])
        sign = 1.0
    v, vr, va = _scaled(model, r, alpha, sigma)
    return EvalBatch(v, vr * sign, va)


def default_grid_dir(desk: bool = True) -> Path:
    """Grid directory from ``ALPHASTABLE_GRID_DIR``, else a per-user cache."""
    env = os.environ.get("ALPHASTABLE_GRID_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "alphastable" / ("desk" if desk else "full")
