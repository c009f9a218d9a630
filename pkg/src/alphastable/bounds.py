"""Certified error budget of the hybrid approximation.

The sup of a density derivative ``f^(l1, l2) = d^(l1+l2) f / dr^l1 dalpha^l2``
over a small cell is bounded by several independent arguments, and the
smallest bound wins:

``uniform``
    triangle inequality under the integral, valid everywhere;
``small_r``
    Taylor expansion of the cosine (Bessel) factor with its remainder;
``tail``
    large-r expansion plus the rotated-contour remainder;
``oscillatory``
    one integration by parts against the oscillating factor.

Lower bounds on ``f`` follow from corner values and the alpha-slope, and the
quotient rule turns both into sups of log-density derivatives, which feed
the bicubic interpolation error estimate.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .oracles import (
    DEFAULT_QUAD,
    QuadratureConfig,
    _tail_coeffs,
    abs_log_moment,
    hankel_moment,
    oracle_pdf,
    p_poly,
    tail_mixed_remainder_biv,
    tail_mixed_remainder_uni,
    tail_series_partial,
)

PATTERNS = ((4, 0), (2, 2), (0, 4))
SMALL_R_ORDERS = (0, 1, 2, 3, 4, 6, 8, 11)
TAIL_ORDERS = (1, 2, 3, 5, 8, 12, 20, 30)
TAIL_FAMILY_R_MIN = 0.1


@dataclass(frozen=True)
class Cell:
    r_lo: float
    r_hi: float
    a_lo: float
    a_hi: float
    index: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if not (self.r_hi > self.r_lo >= 0 and self.a_hi > self.a_lo > 0):
            raise ValueError("degenerate cell")

    @property
    def dr(self) -> float:
        return self.r_hi - self.r_lo

    @property
    def da(self) -> float:
        return self.a_hi - self.a_lo

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.r_lo + self.r_hi), 0.5 * (self.a_lo + self.a_hi)


def needed_derivatives(pattern: tuple[int, int]) -> list[tuple[int, int]]:
    """Density derivatives entering the quotient-rule expansion of ``(log f)^pattern``."""
    l1, l2 = pattern
    return [(i, j) for i in range(l1 + 1) for j in range(l2 + 1) if (i, j) != (0, 0)]


# --------------------------------------------------------------------------
# bound families

def _moment_sup(m: float, l2: int, a_lo: float, a_hi: float) -> float:
    """``sup_alpha |d^l2/dalpha^l2 int t^(m-1) exp(-t^alpha) dt|`` over ``[a_lo, a_hi]``."""
    return abs_log_moment(m, l2, a_lo, a_hi) / a_lo ** (l2 + 1)


def uniform_bound(cell: Cell, l1: int, l2: int, d: int) -> float:
    """``(1/(k pi)) int t^(l1+d-1) |d^l2/dalpha^l2 exp(-t^alpha)| dt`` with ``k = d``."""
    return _moment_sup(l1 + d, l2, cell.a_lo, cell.a_hi) / (d * math.pi)


def _small_r_terms(l1: int, d: int, n: int):
    """(coefficient, moment index, power) per summand of the small-r expansion of ``f^(l1, .)``."""
    c = (l1 + 1) // 2
    o = l1 % 2
    out = []
    for k in range(n + 1):
        p = 2 * k + o
        if d == 1:
            coef = (-1) ** (k + c) / (math.pi * math.factorial(p))
            m = 2 * k + 1 + 2 * c
        else:
            prod = math.factorial(p + l1) / math.factorial(p)
            coef = (-1) ** (k + c) * prod / (2 * math.pi * (2.0 ** (k + c) * math.factorial(k + c)) ** 2)
            m = 2 * k + 2 + 2 * c
        out.append((coef, m, p))
    return out


def _small_r_remainder(r: float, l1: int, l2: int, d: int, n: int, a_lo: float, a_hi: float) -> float:
    o = l1 % 2
    c = (l1 + 1) // 2
    p = 2 * n + 2 + o
    m = p + l1 + d
    assert m == 2 * n + 2 + d + 2 * c
    return r ** p / (d * math.pi * math.factorial(p)) * _moment_sup(m, l2, a_lo, a_hi)


def small_r_bound(cell: Cell, l1: int, l2: int, d: int, n: int) -> float:
    """Partial sum of order ``n`` bounded over the cell, plus its remainder.

    The partial sum ``P`` is bounded by ``|P(center)|`` plus half-widths times
    termwise sups of ``dP/dr`` and ``dP/dalpha``.
    """
    from .oracles import moment_alpha_derivative

    rc, ac = cell.center
    terms = _small_r_terms(l1, d, n)
    centre = sum(coef * float(moment_alpha_derivative(m, ac, l2)) * rc ** p for coef, m, p in terms)
    slope_r = sum(abs(coef) * p * _moment_sup(m, l2, cell.a_lo, cell.a_hi) * cell.r_hi ** (p - 1)
                  for coef, m, p in terms if p > 0)
    slope_a = sum(abs(coef) * _moment_sup(m, l2 + 1, cell.a_lo, cell.a_hi) * cell.r_hi ** p
                  for coef, m, p in terms)
    partial = abs(centre) + 0.5 * cell.dr * slope_r + 0.5 * cell.da * slope_a
    return partial + _small_r_remainder(cell.r_hi, l1, l2, d, n, cell.a_lo, cell.a_hi)


def _tail_partial_sup(cell: Cell, l1: int, l2: int, d: int, n: int) -> float:
    rc, ac = cell.center
    centre = abs(float(tail_series_partial(rc, ac, l1, l2, n, d)))
    # slopes sampled on a 3x3 lattice of the cell
    rs = np.array([cell.r_lo, rc, cell.r_hi])
    as_ = np.array([cell.a_lo, ac, cell.a_hi])
    R, A = np.meshgrid(rs, as_)
    slope_r = np.max(np.abs(tail_series_partial(R, A, l1 + 1, l2, n, d)))
    slope_a = np.max(np.abs(tail_series_partial(R, A, l1, l2 + 1, n, d)))
    return centre + 0.5 * cell.dr * slope_r + 0.5 * cell.da * slope_a


def tail_bound(cell: Cell, l1: int, l2: int, d: int, n: int) -> float:
    remainder = (tail_mixed_remainder_uni if d == 1 else tail_mixed_remainder_biv)(
        cell.r_lo, cell.r_hi, cell.a_lo, cell.a_hi, l1, l2, n)
    return _tail_partial_sup(cell, l1, l2, d, n) + remainder


def _peak_power_exp(x: float) -> float:
    """``max_t t^l exp(-t^alpha)`` written through ``x = l/alpha``: ``x^x e^-x``."""
    return math.exp(x * math.log(x) - x) if x > 0 else 1.0


@lru_cache(maxsize=None)
def _alpha_total_variation(l2: int) -> float:
    """Total variation of ``log(s)^l2 p_l2(s) exp(-s)`` over ``s > 0``."""
    s = np.exp(np.linspace(-40.0, 5.0, 200_001))
    g = np.log(s) ** l2 * np.polynomial.polynomial.polyval(s, p_poly(l2)) * np.exp(-s)
    return float(np.sum(np.abs(np.diff(g))) + abs(g[0]) + abs(g[-1]))


def oscillatory_bound(cell: Cell, l1: int, l2: int, d: int) -> float | None:
    """One integration by parts against the oscillating factor; ``None`` if not applicable."""
    r = cell.r_lo
    if r <= 0:
        return None
    if d == 1 and l2 == 0:
        if l1 == 0:
            return 1.0 / (math.pi * r)
        peak = max(_peak_power_exp(l1 / cell.a_lo), _peak_power_exp(l1 / cell.a_hi))
        return 2.0 * peak / (math.pi * r)
    if d == 1 and l1 == 0:
        return cell.a_lo ** (-l2) * _alpha_total_variation(l2) / (math.pi * r)
    if d == 2 and l2 == 0 and l1 >= 1:
        l = l1 + 1
        peak = max(_peak_power_exp(l / cell.a_lo), _peak_power_exp(l / cell.a_hi))
        return 2.0 * peak / (2.0 * math.pi * r)
    return None


def derivative_sup_bound(cell: Cell, l1: int, l2: int, d: int,
                         with_family: bool = False):
    """Smallest applicable certified bound on ``sup_cell |f^(l1, l2)|``."""
    if l1 + l2 > 5:
        raise ValueError("derivative order too high")
    best, family = uniform_bound(cell, l1, l2, d), "uniform"
    osc = oscillatory_bound(cell, l1, l2, d)
    if osc is not None and osc < best:
        best, family = osc, "oscillatory"
    if cell.r_hi <= 8.0:
        for n in SMALL_R_ORDERS:
            v = small_r_bound(cell, l1, l2, d, n)
            if v < best:
                best, family = v, f"small_r[{n}]"
    if cell.r_lo >= TAIL_FAMILY_R_MIN:
        # the expansion converges only for alpha < 1; stop once it stalls
        prev, stalls = math.inf, 0
        for n in TAIL_ORDERS:
            v = tail_bound(cell, l1, l2, d, n)
            if not np.isfinite(v):
                break
            if v < best:
                best, family = v, f"tail[{n}]"
            stalls = stalls + 1 if v > 0.9 * prev else 0
            if stalls >= 2:
                break
            prev = min(prev, v)
    return (best, family) if with_family else best


def density_inf_bound(cell: Cell, d: int, corner_values, sup_alpha_slope: float | None = None) -> float:
    """Lower bound on ``f`` over the cell.

    ``corner_values`` are the oracle densities at ``(r_hi, a_lo)`` and
    ``(r_hi, a_hi)``: the density decreases in r, and along alpha it cannot
    drop further than half the width times the sup of its alpha-slope.
    A non-positive result means the bound is vacuous.
    """
    if sup_alpha_slope is None:
        sup_alpha_slope = derivative_sup_bound(cell, 0, 1, d)
    return float(min(corner_values)) - 0.5 * cell.da * sup_alpha_slope


# --------------------------------------------------------------------------
# log-derivative sups

def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


@lru_cache(maxsize=None)
def _partition_terms(pattern: tuple[int, int]):
    """Multiplicities of ``(|blocks|, multiset of block derivative orders)``."""
    letters = ["r"] * pattern[0] + ["a"] * pattern[1]
    counts: dict = {}
    for part in _set_partitions(list(range(len(letters)))):
        blocks = tuple(sorted((sum(letters[i] == "r" for i in b), sum(letters[i] == "a" for i in b))
                              for b in part))
        counts[blocks] = counts.get(blocks, 0) + 1
    return tuple(counts.items())


def log_derivative_bound(pattern: tuple[int, int], sups: dict, inf: float) -> float:
    """Triangle-inequality bound on ``|(log f)^pattern|`` from derivative sups and ``inf f``.

    ``d^B log f = sum over partitions pi of B of (-1)^(|pi|-1) (|pi|-1)! prod f_b / f``.
    """
    if not inf > 0:
        raise ValueError("density lower bound must be positive")
    total = 0.0
    for blocks, mult in _partition_terms(tuple(pattern)):
        k = len(blocks)
        prod = 1.0
        for b in blocks:
            prod *= sups[b]
        total += mult * math.factorial(k - 1) * prod / inf ** k
    return total


@dataclass
class CellBound:
    cell: Cell
    sups: dict
    families: dict
    inf: float

    @property
    def vacuous(self) -> bool:
        return not self.inf > 0

    def log_sup(self, pattern) -> float:
        return log_derivative_bound(pattern, self.sups, self.inf)


def bound_cell(cell: Cell, d: int, corner_values, patterns=PATTERNS) -> CellBound:
    needed = sorted({b for p in patterns for b in needed_derivatives(p)} | {(0, 1)})
    sups, families = {}, {}
    for l1, l2 in needed:
        sups[(l1, l2)], families[(l1, l2)] = derivative_sup_bound(cell, l1, l2, d, with_family=True)
    inf = density_inf_bound(cell, d, corner_values, sups[(0, 1)])
    return CellBound(cell, sups, families, inf)


@dataclass
class SweepResult:
    d: int
    cells: list
    vacuous: list = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.vacuous)

    def log_derivative_sup(self, pattern) -> float:
        return log_derivative_sup(pattern, self.cells)

    def dominant_families(self, pattern) -> dict:
        """Count of cells per bound family for the top-order derivative of ``pattern``."""
        out: dict = {}
        for cb in self.cells:
            if not cb.vacuous:
                fam = cb.families[tuple(pattern)].split("[")[0]
                out[fam] = out.get(fam, 0) + 1
        return out


def log_derivative_sup(pattern, cells) -> float:
    """Sup over non-vacuous cells of the quotient-rule bound for ``(log f)^pattern``."""
    vals = [cb.log_sup(pattern) for cb in cells if not cb.vacuous]
    return max(vals) if vals else math.inf


def _bound_cells_chunk(args):
    cells, d, corners, patterns = args
    return [bound_cell(c, d, cv, patterns) for c, cv in zip(cells, corners)]


def make_cells(r_range, a_range, delta_r: float, delta_a: float | None = None) -> list[Cell]:
    delta_a = delta_r if delta_a is None else delta_a
    nr = max(1, round((r_range[1] - r_range[0]) / delta_r))
    na = max(1, round((a_range[1] - a_range[0]) / delta_a))
    rs = np.linspace(r_range[0], r_range[1], nr + 1)
    as_ = np.linspace(a_range[0], a_range[1], na + 1)
    return [Cell(float(rs[j]), float(rs[j + 1]), float(as_[i]), float(as_[i + 1]), (i, j))
            for i in range(na) for j in range(nr)]


DESK_R_STRATA = (0.0, 0.2, 0.5, 0.85, 1.0, 2.0, 5.0, 10.0, 20.0, 29.55, 29.95)
DESK_ALPHA_STRATA = (0.5, 0.7, 1.0, 1.3, 1.6, 1.85)


def desk_cells(delta: float = 0.05, r_strata=DESK_R_STRATA, alpha_strata=DESK_ALPHA_STRATA) -> list[Cell]:
    """Fixed subsample of the ``delta`` lattice: one cell per (r, alpha) stratum."""
    return [Cell(r, min(r + delta, 30.0), a, min(a + delta, 1.9), (i, j))
            for i, a in enumerate(alpha_strata) for j, r in enumerate(r_strata)]


def sweep(cells: list[Cell], d: int, cfg: QuadratureConfig = DEFAULT_QUAD,
          parallelism: int = 1, patterns=PATTERNS) -> SweepResult:
    """Bound every cell; corner densities come from the quadrature oracle."""
    corner_cache: dict = {}

    def f(r, a):
        key = (round(r, 12), round(a, 12))
        if key not in corner_cache:
            corner_cache[key] = oracle_pdf(r, a, d, cfg)
        return corner_cache[key]

    corners = [(f(c.r_hi, c.a_lo), f(c.r_hi, c.a_hi)) for c in cells]
    if parallelism > 1:
        k = math.ceil(len(cells) / (4 * parallelism))
        chunks = [(cells[i:i + k], d, corners[i:i + k], patterns) for i in range(0, len(cells), k)]
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            out = list(itertools.chain.from_iterable(pool.map(_bound_cells_chunk, chunks)))
    else:
        out = _bound_cells_chunk((cells, d, corners, patterns))
    return SweepResult(d, out, [cb.cell for cb in out if cb.vacuous])


# --------------------------------------------------------------------------
# budgets

def spline_error(s40: float, s22: float, s04: float, h_r: float, h_alpha: float) -> float:
    """Bicubic interpolation error from sups of the fourth log-density derivatives."""
    return (5.0 / 384.0 * s40 * h_r ** 4 + 81.0 / 64.0 * s22 * h_r ** 2 * h_alpha ** 2
            + 5.0 / 384.0 * s04 * h_alpha ** 4)


def tail_relative_error(alpha: float, d: int, order: int = 3, r: float = 30.0) -> float:
    """Sup over ``r' >= r`` of ``|1 - f / S_n|`` for the tail partial sum.

    ``S_n = r^-(alpha+d) sum_k c_k r^-((k-1) alpha)`` and the remainder is at
    most ``C r^-((n+1) alpha + d)``, so the ratio is bounded by
    ``C r^(-n alpha) / (|c_1| - sum_{k>=2} |c_k| r^-((k-1) alpha))``, which
    decreases in r.
    """
    coeffs = [abs(float(c)) for c, _ in _tail_coeffs(alpha, order, d)]
    if d == 1:
        e = (order + 1) * alpha + 1
        big_c = math.gamma(e) / (math.pi * math.factorial(order + 1)
                                 * math.sin(math.pi / (2 * max(alpha, 1.0))) ** e)
    else:
        big_c = hankel_moment(float(alpha), 0, (order + 1) * alpha + 1) / (
            2 * math.pi * math.factorial(order + 1))
    denom = coeffs[0] - sum(c * r ** (-(k * alpha)) for k, c in enumerate(coeffs[1:], start=1))
    if not denom > 0:
        raise ArithmeticError(f"tail bound unavailable at alpha={alpha}: denominator {denom:.3g}")
    return big_c * r ** (-order * alpha) / denom


def tail_relative_error_sup(d: int, order: int = 3, alphas=None, r: float = 30.0) -> tuple[float, float]:
    """``(sup, argmax)`` of :func:`tail_relative_error` over an alpha lattice on [0.5, 1.9]."""
    if alphas is None:
        alphas = np.linspace(0.5, 1.9, 1401)
    vals = [tail_relative_error(float(a), d, order, r) for a in alphas]
    k = int(np.argmax(vals))
    return vals[k], float(alphas[k])


def log_error_from_relative(eps: float) -> float:
    """``|log f - log S| <= -log(1 - eps)`` when ``|1 - f/S| <= eps < 1``."""
    if not 0 <= eps < 1:
        raise ValueError("relative error must lie in [0, 1)")
    return -math.log1p(-eps)


@dataclass
class ErrorBudget:
    """Spline interpolation budget of one region plus the tail budget."""

    s40: float
    s22: float
    s04: float
    h_r: float
    h_alpha: float
    tail_relative: float = 0.0
    partial: bool = False

    @property
    def spline_error(self) -> float:
        return spline_error(self.s40, self.s22, self.s04, self.h_r, self.h_alpha)

    @property
    def tail_log_error(self) -> float:
        return log_error_from_relative(self.tail_relative)

    @classmethod
    def from_sweep(cls, result: SweepResult, h_r: float, h_alpha: float,
                   tail_relative: float = 0.0) -> "ErrorBudget":
        return cls(result.log_derivative_sup((4, 0)), result.log_derivative_sup((2, 2)),
                   result.log_derivative_sup((0, 4)), h_r, h_alpha, tail_relative, result.partial)


def transition_error(tail_rel: float, slope_gap: float, delta: float,
                     s40_band: float) -> float:
    """Error of the Hermite-blended band ``[r_a, r_a + delta]``.

    The blend interpolates exact data at ``r_a`` and series data at
    ``r_a + delta``; against the Hermite interpolant of the exact log density
    it differs by at most the value gap (the tail log error) plus
    ``(4/27) delta`` times the slope gap, and that interpolant itself is
    within ``delta^4/384 sup|(log f)''''|`` of the truth.
    """
    return (log_error_from_relative(tail_rel) + 4.0 / 27.0 * delta * slope_gap
            + delta ** 4 / 384.0 * s40_band)


def tail_log_slope_gap(alpha_lo: float, alpha_hi: float, d: int, order: int = 3,
                       r: float = 30.0) -> float:
    """Bound on ``|d/dr log f - d/dr log S_n|`` at ``r`` uniformly over an alpha interval.

    ``|f'/f - S'/S| <= |f' - S'| / f + |S'/S| |f - S| / f`` with
    ``f >= S (1 - eps)`` and the remainder bounds of f and its r-derivative.
    """
    cell_r = (r, r * (1 + 1e-12))
    rem0 = (tail_mixed_remainder_uni if d == 1 else tail_mixed_remainder_biv)(
        cell_r[0], cell_r[1], alpha_lo, alpha_hi, 0, 0, order)
    rem1 = (tail_mixed_remainder_uni if d == 1 else tail_mixed_remainder_biv)(
        cell_r[0], cell_r[1], alpha_lo, alpha_hi, 1, 0, order)
    worst = 0.0
    for a in np.linspace(alpha_lo, alpha_hi, 5):
        s = float(tail_series_partial(r, a, 0, 0, order, d))
        s1 = float(tail_series_partial(r, a, 1, 0, order, d))
        f_lo = s - rem0
        worst = max(worst, rem1 / f_lo + abs(s1 / s) * rem0 / f_lo)
    return worst
