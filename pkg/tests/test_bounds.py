import math

import numpy as np
import pytest

from alphastable.bounds import (
    Cell,
    ErrorBudget,
    desk_cells,
    derivative_sup_bound,
    log_error_from_relative,
    make_cells,
    spline_error,
    sweep,
    tail_relative_error,
    tail_relative_error_sup,
)
from alphastable.oracles import contour_pdf, oracle_pdf, tail_series


def test_spline_error_formula():
    assert spline_error(384.0, 0.0, 0.0, 1.0, 1.0) == pytest.approx(5.0)
    assert spline_error(0.0, 64.0, 0.0, 1.0, 1.0) == pytest.approx(81.0)
    assert spline_error(0.0, 0.0, 384.0, 0.5, 1.0) == pytest.approx(5.0)


def test_log_error_from_relative():
    assert log_error_from_relative(0.0) == 0.0
    assert log_error_from_relative(0.5) == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        log_error_from_relative(1.0)


def test_tail_relative_error_values():
    # certified sup over alpha in [0.5, 1.9] at r = 30
    assert tail_relative_error_sup(1)[0] <= 0.00097
    assert tail_relative_error_sup(2)[0] <= 0.0017


@pytest.mark.parametrize("d", [1, 2])
def test_tail_relative_error_holds_empirically(d):
    for alpha in (0.55, 1.0, 1.45, 1.85):
        eps = tail_relative_error(alpha, d)
        for r in (30.0, 45.0, 100.0):
            exact = contour_pdf(r, alpha, d)
            assert abs(1 - exact / float(tail_series(r, alpha, 3, d))) <= eps


def test_cells():
    cells = make_cells((0.0, 1.0), (0.5, 0.7), 0.1)
    assert len(cells) == 20
    assert desk_cells()[0].dr == pytest.approx(0.05)
    with pytest.raises(ValueError):
        Cell(1.0, 1.0, 0.5, 0.6)


def _fd2(f, x, h):
    return (f(x + h) - 2 * f(x) + f(x - h)) / h ** 2


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("cell", [Cell(0.2, 0.3, 1.0, 1.05), Cell(5.0, 5.1, 0.7, 0.75), Cell(25.0, 25.1, 1.6, 1.65)])
def test_derivative_bounds_dominate_finite_differences(d, cell):
    bound_rr = derivative_sup_bound(cell, 2, 0, d)
    bound_aa = derivative_sup_bound(cell, 0, 2, d)
    for r in np.linspace(cell.r_lo, cell.r_hi, 3):
        for a in np.linspace(cell.a_lo, cell.a_hi, 3):
            rr = _fd2(lambda x: oracle_pdf(x, a, d), r, 1e-3)
            aa = _fd2(lambda y: oracle_pdf(r, y, d), a, 1e-3)
            assert abs(rr) <= bound_rr * (1 + 1e-3)
            assert abs(aa) <= bound_aa * (1 + 1e-3)


def test_sweep_budget_is_finite():
    cells = make_cells((5.0, 5.2), (1.0, 1.1), 0.1)
    res = sweep(cells, 1)
    assert not res.partial
    b = ErrorBudget.from_sweep(res, 0.1, 0.01)
    assert 0 < b.spline_error < math.inf
    assert sum(res.dominant_families((4, 0)).values()) == len(cells)
