"""Log-density grids and the bicubic splines fitted to them.

A ``BicubicSpline`` is the tensor-product cubic spline through a rectangular
grid.  It is stored in Hermite form: node values together with the node
derivatives ``f_r``, ``f_alpha`` and ``f_ralpha`` obtained from 1D spline
passes along each axis.  The 4x4 polynomial block of any cell follows from
the 16 corner quantities, so blocks are formed on demand.
"""

from __future__ import annotations

import enum
import hashlib
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .oracles import (
    DEFAULT_QUAD,
    OracleError,
    QuadratureConfig,
    SeriesOrder,
    oracle_pdf,
    tail_log_series,
)

R_INNER = 0.9
R_TRANSITION = 29.6
R_TAIL = 30.0
R_INNER_GRID_MAX = 1.0

FULL_H_R = 0.01
FULL_H_ALPHA = 5e-4
DESK_H_R = 0.1
DESK_H_ALPHA = 0.01


def _count(lo: float, hi: float, h: float) -> int:
    n = (hi - lo) / h
    k = round(n)
    if abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"interval [{lo}, {hi}] is not a whole number of steps {h}")
    return k + 1


@dataclass(frozen=True)
class GridSpec:
    r_min: float
    r_max: float
    alpha_min: float = 0.5
    alpha_max: float = 1.9
    h_r: float = FULL_H_R
    h_alpha: float = FULL_H_ALPHA

    def __post_init__(self):
        if not (self.r_max > self.r_min >= 0 and self.alpha_max > self.alpha_min):
            raise ValueError("empty or invalid grid ranges")
        if not (self.h_r > 0 and self.h_alpha > 0):
            raise ValueError("grid spacings must be positive")
        _count(self.r_min, self.r_max, self.h_r)
        _count(self.alpha_min, self.alpha_max, self.h_alpha)

    @property
    def n_r(self) -> int:
        return _count(self.r_min, self.r_max, self.h_r)

    @property
    def n_alpha(self) -> int:
        return _count(self.alpha_min, self.alpha_max, self.h_alpha)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_alpha, self.n_r

    @property
    def r_nodes(self) -> np.ndarray:
        x = self.r_min + self.h_r * np.arange(self.n_r)
        x[-1] = self.r_max
        return x

    @property
    def alpha_nodes(self) -> np.ndarray:
        x = self.alpha_min + self.h_alpha * np.arange(self.n_alpha)
        x[-1] = self.alpha_max
        return x

    def with_r_range(self, r_min: float, r_max: float) -> "GridSpec":
        return GridSpec(r_min, r_max, self.alpha_min, self.alpha_max, self.h_r, self.h_alpha)

    @classmethod
    def hybrid(cls, region: str, desk: bool = False) -> "GridSpec":
        """Grid for ``region`` in {"inner", "main", "transition"}."""
        h_r, h_a = (DESK_H_R, DESK_H_ALPHA) if desk else (FULL_H_R, FULL_H_ALPHA)
        lo, hi = {"inner": (0.0, R_INNER_GRID_MAX), "main": (0.0, R_TAIL),
                  "transition": (R_TRANSITION, R_TAIL)}[region]
        return cls(lo, hi, 0.5, 1.9, h_r, h_a)


class Provenance(enum.IntEnum):
    QUADRATURE = 0
    HERMITE_BLEND = 1


@dataclass
class LogDensityGrid:
    """``values[i, j] = log f(r_j; alpha_i)``."""

    spec: GridSpec
    values: np.ndarray
    dimension: int
    provenance: Provenance = Provenance.QUADRATURE

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.spec.shape}")
        if self.dimension not in (1, 2):
            raise ValueError("dimension must be 1 or 2")

    def check(self) -> list[str]:
        """Problems with the grid: non-finite entries or rows not decreasing in r."""
        problems = []
        if not np.all(np.isfinite(self.values)):
            problems.append("non-finite values")
        bad = np.nonzero(np.any(np.diff(self.values, axis=1) >= 0, axis=1))[0]
        for i in bad:
            problems.append(f"row alpha={self.spec.alpha_nodes[i]:.6g} not strictly decreasing")
        return problems

    def restrict(self, r_min: float, r_max: float) -> "LogDensityGrid":
        sub = self.spec.with_r_range(r_min, r_max)
        j0 = round((r_min - self.spec.r_min) / self.spec.h_r)
        return LogDensityGrid(sub, self.values[:, j0:j0 + sub.n_r].copy(),
                              self.dimension, self.provenance)


# --------------------------------------------------------------------------
# precomputation

def _oracle_row(args):
    alpha, r_nodes, d, cfg = args
    out = np.empty(len(r_nodes))
    for j, r in enumerate(r_nodes):
        try:
            out[j] = math.log(oracle_pdf(float(r), float(alpha), d, cfg))
        except (OracleError, ValueError) as exc:
            raise OracleError(f"node (r={r}, alpha={alpha}, d={d}) failed: {exc}") from None
    return out


def precompute_grid(spec: GridSpec, d: int, cfg: QuadratureConfig = DEFAULT_QUAD,
                    parallelism: int = 1) -> LogDensityGrid:
    """Evaluate ``log f`` at every node with the oracle-selection rule.

    Rows are independent, so they are farmed out to worker processes when
    ``parallelism > 1``; each node is computed by the same deterministic
    call either way, so the result does not depend on the worker count.
    """
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    r_nodes = spec.r_nodes
    jobs = [(a, r_nodes, d, cfg) for a in spec.alpha_nodes]
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_oracle_row, jobs, chunksize=max(1, len(jobs) // (4 * parallelism))))
    else:
        rows = [_oracle_row(job) for job in jobs]
    return LogDensityGrid(spec, np.vstack(rows), d, Provenance.QUADRATURE)


# --------------------------------------------------------------------------
# bicubic splines

@dataclass(frozen=True)
class BoundaryCondition:
    """Natural (zero second derivative) or clamped (prescribed first derivative per row)."""

    kind: str = "natural"
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("natural", "clamped"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")
        if self.kind == "clamped" and self.values is None:
            raise ValueError("clamped boundary needs derivative values")

    @classmethod
    def clamped(cls, values) -> "BoundaryCondition":
        return cls("clamped", np.asarray(values, dtype=float))

    def scipy_form(self):
        return "natural" if self.kind == "natural" else (1, self.values)


NATURAL = BoundaryCondition()


def _hermite_basis(t, h, order):
    """Cubic Hermite basis (value weights on f0, f1, slope weights on m0, m1)."""
    if order == 0:
        t2, t3 = t * t, t * t * t
        return (2 * t3 - 3 * t2 + 1, -2 * t3 + 3 * t2, (t3 - 2 * t2 + t) * h, (t3 - t2) * h)
    if order == 1:
        t2 = t * t
        return ((6 * t2 - 6 * t) / h, (-6 * t2 + 6 * t) / h, 3 * t2 - 4 * t + 1, 3 * t2 - 2 * t)
    if order == 2:
        return ((12 * t - 6) / h ** 2, (-12 * t + 6) / h ** 2, (6 * t - 4) / h, (6 * t - 2) / h)
    if order == 3:
        z = np.ones_like(t)
        return (12 * z / h ** 3, -12 * z / h ** 3, 6 * z / h ** 2, 6 * z / h ** 2)
    raise ValueError("derivative order up to 3")


@dataclass(frozen=True)
class BicubicSpline:
    spec: GridSpec
    f: np.ndarray
    f_r: np.ndarray
    f_alpha: np.ndarray
    f_ralpha: np.ndarray
    bc_r_low: BoundaryCondition = field(default=NATURAL, compare=False)
    bc_r_high: BoundaryCondition = field(default=NATURAL, compare=False)
    bc_alpha: BoundaryCondition = field(default=NATURAL, compare=False)

    def _locate(self, r, alpha):
        s = self.spec
        j = np.clip(np.floor((r - s.r_min) / s.h_r).astype(np.int64), 0, s.n_r - 2)
        i = np.clip(np.floor((alpha - s.alpha_min) / s.h_alpha).astype(np.int64), 0, s.n_alpha - 2)
        t = (r - s.r_nodes[j]) / s.h_r
        u = (alpha - s.alpha_nodes[i]) / s.h_alpha
        return i, j, t, u

    def partial(self, r, alpha, nr: int = 0, na: int = 0):
        """``d^(nr+na) s / dr^nr dalpha^na`` at the given points (broadcast arrays)."""
        r = np.asarray(r, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        r, alpha = np.broadcast_arrays(r, alpha)
        i, j, t, u = self._locate(r, alpha)
        hr = _hermite_basis(t, self.spec.h_r, nr)
        ha = _hermite_basis(u, self.spec.h_alpha, na)
        # corner (di, dj): row alpha_{i+di}, column r_{j+dj}
        out = np.zeros_like(r)
        for di in (0, 1):
            for dj in (0, 1):
                ii, jj = i + di, j + dj
                out = out + (ha[di] * (hr[dj] * self.f[ii, jj] + hr[2 + dj] * self.f_r[ii, jj])
                             + ha[2 + di] * (hr[dj] * self.f_alpha[ii, jj]
                                             + hr[2 + dj] * self.f_ralpha[ii, jj]))
        return out

    def __call__(self, r, alpha):
        return self.partial(r, alpha)

    def eval_with_gradient(self, r, alpha):
        """Value, ``d/dr`` and ``d/dalpha`` sharing one cell lookup."""
        r = np.asarray(r, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        r, alpha = np.broadcast_arrays(r, alpha)
        i, j, t, u = self._locate(r, alpha)
        hr0 = _hermite_basis(t, self.spec.h_r, 0)
        hr1 = _hermite_basis(t, self.spec.h_r, 1)
        ha0 = _hermite_basis(u, self.spec.h_alpha, 0)
        ha1 = _hermite_basis(u, self.spec.h_alpha, 1)
        v = np.zeros_like(r)
        vr = np.zeros_like(r)
        va = np.zeros_like(r)
        for di in (0, 1):
            for dj in (0, 1):
                ii, jj = i + di, j + dj
                f, fr, fa, fra = (self.f[ii, jj], self.f_r[ii, jj],
                                  self.f_alpha[ii, jj], self.f_ralpha[ii, jj])
                row0 = hr0[dj] * f + hr0[2 + dj] * fr
                row0a = hr0[dj] * fa + hr0[2 + dj] * fra
                row1 = hr1[dj] * f + hr1[2 + dj] * fr
                row1a = hr1[dj] * fa + hr1[2 + dj] * fra
                v = v + ha0[di] * row0 + ha0[2 + di] * row0a
                vr = vr + ha0[di] * row1 + ha0[2 + di] * row1a
                va = va + ha1[di] * row0 + ha1[2 + di] * row0a
        return v, vr, va

    def eval_scalar(self, r: float, alpha: float) -> tuple[float, float, float]:
        """Single-point ``eval_with_gradient`` on Python floats."""
        s = self.spec
        j = min(max(math.floor((r - s.r_min) / s.h_r), 0), s.n_r - 2)
        i = min(max(math.floor((alpha - s.alpha_min) / s.h_alpha), 0), s.n_alpha - 2)
        hr, ha = s.h_r, s.h_alpha
        t = (r - (s.r_min + j * hr)) / hr
        u = (alpha - (s.alpha_min + i * ha)) / ha
        hr0 = _hermite_basis(t, hr, 0)
        hr1 = _hermite_basis(t, hr, 1)
        ha0 = _hermite_basis(u, ha, 0)
        ha1 = _hermite_basis(u, ha, 1)
        v = vr = va = 0.0
        for di in (0, 1):
            for dj in (0, 1):
                k = (i + di, j + dj)
                f, fr, fa, fra = (float(self.f[k]), float(self.f_r[k]),
                                  float(self.f_alpha[k]), float(self.f_ralpha[k]))
                row0 = hr0[dj] * f + hr0[2 + dj] * fr
                row0a = hr0[dj] * fa + hr0[2 + dj] * fra
                row1 = hr1[dj] * f + hr1[2 + dj] * fr
                row1a = hr1[dj] * fa + hr1[2 + dj] * fra
                v += ha0[di] * row0 + ha0[2 + di] * row0a
                vr += ha0[di] * row1 + ha0[2 + di] * row1a
                va += ha1[di] * row0 + ha1[2 + di] * row0a
        return v, vr, va

    def coefficients(self, i: int, j: int) -> np.ndarray:
        """Block ``C`` with ``s = sum_{p,q} C[p, q] t^p u^q`` on cell (alpha_i, r_j).

        ``t`` and ``u`` are the local coordinates in ``[0, 1]`` along r and alpha.
        """
        hr, ha = self.spec.h_r, self.spec.h_alpha
        # Hermite basis in monomial form: rows (f0, f1, m0, m1), columns t^0..t^3
        B = np.array([[1, 0, -3, 2], [0, 0, 3, -2], [0, 1, -2, 1], [0, 0, -1, 1]], dtype=float)
        corner = lambda a, ii, jj: a[i + ii, j + jj]
        K = np.empty((4, 4))   # K[r-basis, alpha-basis]
        for rb, (dj, sr) in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
            for ab, (di, sa) in enumerate([(0, 0), (1, 0), (0, 1), (1, 1)]):
                arr = [[self.f, self.f_alpha], [self.f_r, self.f_ralpha]][sr][sa]
                K[rb, ab] = corner(arr, di, dj) * (hr if sr else 1.0) * (ha if sa else 1.0)
        return B.T @ K @ B

    @property
    def nbytes(self) -> int:
        return sum(a.nbytes for a in (self.f, self.f_r, self.f_alpha, self.f_ralpha))


def fit_bicubic(grid: LogDensityGrid, bc_r_low: BoundaryCondition = NATURAL,
                bc_r_high: BoundaryCondition = NATURAL,
                bc_alpha: BoundaryCondition = NATURAL) -> BicubicSpline:
    """Tensor-product cubic spline through the grid.

    Node slopes in r come from row-wise cubic splines with the requested end
    conditions, slopes in alpha from column-wise splines, and the twist
    ``f_ralpha`` from column-wise splines of the r-slopes.
    """
    if bc_alpha.kind != "natural":
        raise ValueError("only natural conditions are supported along alpha")
    spec = grid.spec
    v = grid.values
    r, a = spec.r_nodes, spec.alpha_nodes
    row_spline = CubicSpline(r, v, axis=1, bc_type=(bc_r_low.scipy_form(), bc_r_high.scipy_form()))
    f_r = row_spline(r, 1)
    f_a = CubicSpline(a, v, axis=0, bc_type="natural")(a, 1)
    f_ra = CubicSpline(a, f_r, axis=0, bc_type="natural")(a, 1)
    if bc_r_low.kind == "clamped":
        f_r[:, 0] = bc_r_low.values
    if bc_r_high.kind == "clamped":
        f_r[:, -1] = bc_r_high.values
    return BicubicSpline(spec, v.copy(), f_r, f_a, f_ra, bc_r_low, bc_r_high, bc_alpha)


# --------------------------------------------------------------------------
# transition band

@dataclass(frozen=True)
class TransitionSpec:
    """Endpoint data of the Hermite blend between quadrature and tail series.

    The quadrature-side value and slope live at ``r_a`` (where the main spline
    ends) and the series-side value and slope at ``r_b`` (where the tail
    series takes over); all arrays are indexed by the alpha nodes.  The
    optional ``*_da`` arrays are the alpha derivatives of the same four
    quantities; when present the band spline uses them as its alpha slopes.
    """

    quad_value: np.ndarray
    quad_slope: np.ndarray
    series_value: np.ndarray
    series_slope: np.ndarray
    r_a: float = R_TRANSITION
    r_b: float = R_TAIL
    quad_value_da: np.ndarray | None = None
    quad_slope_da: np.ndarray | None = None
    series_value_da: np.ndarray | None = None
    series_slope_da: np.ndarray | None = None

    @property
    def delta(self) -> float:
        return self.r_b - self.r_a

    @property
    def has_alpha_slopes(self) -> bool:
        return all(x is not None for x in (self.quad_value_da, self.quad_slope_da,
                                           self.series_value_da, self.series_slope_da))


def hermite_blend(q, delta, v0, m0, v1, m1, order: int = 0):
    t = np.asarray(q) / delta
    h00, h01, h10, h11 = _hermite_basis(t, delta, order)
    return h00 * v0 + h10 * m0 + h01 * v1 + h11 * m1


def _blend_columns(ts: TransitionSpec, q, parts, order):
    col = lambda a: np.asarray(a, dtype=float)[:, None]
    return hermite_blend(q[None, :], ts.delta, *(col(a) for a in parts), order=order)


def build_transition_grid(ts: TransitionSpec, spec: GridSpec, dimension: int = 1) -> LogDensityGrid:
    """Blend row by row: ``H(q)`` for ``q = r_i - r_a`` in ``[0, delta]``."""
    if abs(spec.r_min - ts.r_a) > 1e-12 or abs(spec.r_max - ts.r_b) > 1e-12:
        raise ValueError("grid must span exactly [r_a, r_b]")
    q = spec.r_nodes - ts.r_a
    vals = _blend_columns(ts, q, (ts.quad_value, ts.quad_slope, ts.series_value, ts.series_slope), 0)
    vals[:, 0] = ts.quad_value
    vals[:, -1] = ts.series_value
    return LogDensityGrid(spec, vals, dimension, Provenance.HERMITE_BLEND)


def fit_transition(ts: TransitionSpec, spec: GridSpec, dimension: int = 1) -> BicubicSpline:
    """Band spline on ``[r_a, r_b]`` clamped to both endpoint slopes.

    Without alpha derivatives in ``ts`` this is :func:`fit_bicubic` of the
    blended grid.  With them, node slopes in alpha are the exact alpha
    derivatives of the blend, so the band reproduces the endpoint data
    between alpha nodes to fourth order instead of through a natural spline.
    """
    band = build_transition_grid(ts, spec, dimension)
    lo = BoundaryCondition.clamped(ts.quad_slope)
    hi = BoundaryCondition.clamped(ts.series_slope)
    if not ts.has_alpha_slopes:
        return fit_bicubic(band, lo, hi)
    q = spec.r_nodes - ts.r_a
    base = (ts.quad_value, ts.quad_slope, ts.series_value, ts.series_slope)
    da = (ts.quad_value_da, ts.quad_slope_da, ts.series_value_da, ts.series_slope_da)
    # the blend is cubic in r, so these match a clamped spline pass exactly
    f_r = _blend_columns(ts, q, base, 1)
    f_a = _blend_columns(ts, q, da, 0)
    f_ra = _blend_columns(ts, q, da, 1)
    f_r[:, 0], f_r[:, -1] = ts.quad_slope, ts.series_slope
    f_a[:, 0], f_a[:, -1] = ts.quad_value_da, ts.series_value_da
    f_ra[:, 0], f_ra[:, -1] = ts.quad_slope_da, ts.series_slope_da
    return BicubicSpline(spec, band.values, f_r, f_a, f_ra, lo, hi)


def tail_log_mixed(r, alpha, order: SeriesOrder | int = 3, d: int = 1):
    """``d^2 log S / dr dalpha`` of the tail partial sum."""
    from .oracles import tail_series_partial

    s = tail_series_partial(r, alpha, 0, 0, order, d)
    s_r = tail_series_partial(r, alpha, 1, 0, order, d)
    s_a = tail_series_partial(r, alpha, 0, 1, order, d)
    s_ra = tail_series_partial(r, alpha, 1, 1, order, d)
    return s_ra / s - s_r * s_a / s ** 2


def build_hybrid_splines(inner: LogDensityGrid, main: LogDensityGrid,
                         order: SeriesOrder | int = 3) -> tuple[BicubicSpline, BicubicSpline, BicubicSpline]:
    """Fit the three splines of the hybrid evaluator.

    ``inner`` covers at least ``[0, 0.9]`` and ``main`` covers ``[0, 30]``
    on a shared alpha lattice.  The inner spline is clamped to zero slope at
    the origin and to the main spline's slope at 0.9; the transition spline
    is clamped to the main spline's slope at 29.6 and to the tail series'
    slope at 30, and takes its alpha slopes from the main spline at 29.6 and
    from the exact series derivatives at 30.
    """
    if inner.dimension != main.dimension:
        raise ValueError("grids belong to different dimensions")
    if not np.allclose(inner.spec.alpha_nodes, main.spec.alpha_nodes, atol=1e-12, rtol=0):
        raise ValueError("grids must share the alpha nodes")
    d = main.dimension
    alphas = main.spec.alpha_nodes
    n = order.n_terms if isinstance(order, SeriesOrder) else int(order)

    s2 = fit_bicubic(main)
    at = lambda r, nr, na: s2.partial(np.full_like(alphas, r), alphas, nr, na)

    inner_grid = inner.restrict(0.0, R_INNER)
    s1 = fit_bicubic(inner_grid, BoundaryCondition.clamped(np.zeros_like(alphas)),
                     BoundaryCondition.clamped(at(R_INNER, 1, 0)))

    quad_value = main.restrict(R_TRANSITION, R_TAIL).values[:, 0]
    series_value, series_slope, series_da = tail_log_series(R_TAIL, alphas, n, d)
    ts = TransitionSpec(quad_value, at(R_TRANSITION, 1, 0), series_value, series_slope,
                        quad_value_da=at(R_TRANSITION, 0, 1), quad_slope_da=at(R_TRANSITION, 1, 1),
                        series_value_da=series_da,
                        series_slope_da=tail_log_mixed(R_TAIL, alphas, n, d))
    s3 = fit_transition(ts, main.spec.with_r_range(R_TRANSITION, R_TAIL), d)
    return s1, s2, s3


# --------------------------------------------------------------------------
# grid files

GRID_MAGIC = b"ASTGRD"
GRID_VERSION = 1
_HEADER = struct.Struct("<6sHBB6d6x")
assert _HEADER.size == 64


def write_grid(path, grid: LogDensityGrid, cfg: QuadratureConfig | None = None,
               extra: dict | None = None) -> Path:
    """Write ``grid`` as a 64-byte header plus little-endian float64 rows, with a manifest."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    s = grid.spec
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, grid.dimension, int(grid.provenance),
                          s.r_min, s.r_max, s.alpha_min, s.alpha_max, s.h_r, s.h_alpha)
    body = np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    path.write_bytes(header + body)
    cfg = cfg or DEFAULT_QUAD
    lines = {
        "format_version": GRID_VERSION,
        "dimension": grid.dimension,
        "provenance": grid.provenance.name.lower(),
        "r_range": f"{s.r_min!r} {s.r_max!r}",
        "alpha_range": f"{s.alpha_min!r} {s.alpha_max!r}",
        "spacing": f"{s.h_r!r} {s.h_alpha!r}",
        "nodes": f"{s.n_alpha} x {s.n_r} (alpha x r)",
        "oracle_rule": ("fourier if |alpha-1|<0.2 or r=0 else nolan" if grid.dimension == 1
                        else "bessel (direct r<=1, rotated hankel r>1)"),
        "rel_tol": repr(cfg.rel_tol),
        "abs_tol": repr(cfg.abs_tol),
        "max_subdivisions": cfg.max_subdivisions,
        "sha256": hashlib.sha256(body).hexdigest(),
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    lines.update(extra or {})
    manifest = path.with_suffix(path.suffix + ".manifest")
    manifest.write_text("".join(f"{k} = {v}\n" for k, v in lines.items()))
    return path


def read_grid(path, mmap: bool = False) -> LogDensityGrid:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, d, prov, r0, r1, a0, a1, hr, ha = _HEADER.unpack(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: not a grid file")
    if version != GRID_VERSION:
        raise ValueError(f"{path}: unsupported grid version {version}")
    spec = GridSpec(r0, r1, a0, a1, hr, ha)
    n = spec.n_alpha * spec.n_r
    if mmap:
        vals = np.memmap(path, dtype="<f8", mode="r", offset=_HEADER.size, shape=spec.shape)
    else:
        vals = np.fromfile(path, dtype="<f8", offset=_HEADER.size)
        if vals.size != n:
            raise ValueError(f"{path}: expected {n} values, found {vals.size}")
        vals = vals.reshape(spec.shape)
    return LogDensityGrid(spec, np.asarray(vals, dtype=float), d, Provenance(prov))


def grid_filename(region: str, d: int) -> str:
    return f"{region}_d{d}.grid"


def load_or_precompute(grid_dir, region: str, d: int, desk: bool = True,
                       cfg: QuadratureConfig = DEFAULT_QUAD, parallelism: int = 1) -> LogDensityGrid:
    """Read the region's grid from ``grid_dir``, computing and storing it if absent."""
    path = Path(grid_dir) / grid_filename(region, d)
    spec = GridSpec.hybrid(region, desk)
    if path.exists():
        grid = read_grid(path)
        if grid.spec == spec and grid.dimension == d:
            return grid
    grid = precompute_grid(spec, d, cfg, parallelism)
    write_grid(path, grid, cfg)
    return grid


def default_parallelism() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
