import numpy as np

from alphastable.validation import (
    SEAM_SLOPE_TOL,
    SEAM_VALUE_TOL,
    CheckResult,
    Report,
    derivative_errors,
    quasi_random_points,
    seam_jumps,
    validate_model,
)


def test_check_result_lines():
    ok = CheckResult("x", 1.0, 2.0)
    bad = CheckResult("y", 3.0, 2.0, "detail")
    assert ok.passed and not bad.passed
    assert ok.line().startswith("PASS") and bad.line().startswith("FAIL") and "detail" in bad.line()
    rep = Report([ok])
    assert rep.passed
    rep.add(bad)
    assert not rep.passed and len(rep.text().splitlines()) == 2


def test_seams_are_small(model1, model2):
    alphas = np.linspace(0.5, 1.9, 50)
    for m in (model1, model2):
        for r, (dv, ds) in seam_jumps(m, alphas).items():
            assert dv < 100 * SEAM_VALUE_TOL and ds < 100 * SEAM_SLOPE_TOL, r


def test_derivatives_consistent(model1):
    er, ea = derivative_errors(model1, n=100)
    assert er.max() < 1e-4 and ea.max() < 1e-4


def test_quasi_random_points_cover_box():
    r, a = quasi_random_points(500)
    assert r.min() >= 0 and r.max() <= 30 and a.min() >= 0.5 and a.max() <= 1.9
    assert r.max() - r.min() > 25


def test_validate_model_desk(model1):
    report, details = validate_model(model1, desk=True, samples=300)
    assert report.passed, report.text()
    assert details["errors"].shape == (300,)
