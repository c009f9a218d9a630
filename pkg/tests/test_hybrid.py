import math

import numpy as np
import pytest

from alphastable.hybrid import Region, logpdf, logpdf_vec, region_of
from alphastable.oracles import StableParams, oracle_pdf, tail_log_series


def test_region_boundaries_belong_to_lower_region(model1):
    assert region_of(model1, 0.9) is Region.SPLINE1
    assert region_of(model1, 0.9000001) is Region.SPLINE2
    assert region_of(model1, 29.6) is Region.SPLINE2
    assert region_of(model1, 30.0) is Region.TRANSITION
    assert region_of(model1, 30.0000001) is Region.TAIL_SERIES


def test_tail_region_is_the_series(model1, model2):
    r, a = np.array([31.0, 150.0]), np.array([0.7, 1.8])
    for m in (model1, model2):
        got = m.evaluate(r, a)
        want = tail_log_series(r, a, 3, m.d)
        assert np.allclose(got, want, rtol=0, atol=1e-14)


def test_close_to_oracle_at_spot_points(model1, model2):
    for r, a in [(0.3, 1.2), (5.0, 0.8), (29.8, 1.5)]:
        for m in (model1, model2):
            ref = math.log(oracle_pdf(r, a, m.d))
            assert m.evaluate(r, a)[0] == pytest.approx(ref, abs=5e-3)


def test_scale_law(model1, model2):
    for m in (model1, model2):
        sigma = 2.5
        p = StableParams(1.3, sigma, m.d)
        base = logpdf(m, 4.0 / sigma, StableParams(1.3, 1.0, m.d))
        scaled = logpdf(m, 4.0, p)
        assert scaled.logpdf == pytest.approx(base.logpdf - m.d * math.log(sigma), rel=1e-14)
        assert scaled.d_dr == pytest.approx(base.d_dr / sigma, rel=1e-14)
        assert scaled.d_dalpha == pytest.approx(base.d_dalpha, rel=1e-14)


def test_vectorized_matches_scalar(model1, model2):
    rng = np.random.default_rng(3)
    for m in (model1, model2):
        r = np.concatenate([rng.uniform(0, 60, 200), [0.0, 0.9, 29.6, 30.0]])
        a = rng.uniform(0.5, 1.9, len(r))
        v = np.array(m.evaluate(r, a)).T
        s = np.array([m.evaluate_scalar(float(x), float(y)) for x, y in zip(r, a)])
        assert np.max(np.abs(v - s)) < 1e-11


def test_univariate_signed_argument(model1):
    x = np.array([-3.0, 3.0, -0.2])
    b = logpdf_vec(model1, x, StableParams(1.1, 0.5, 1))
    assert b.logpdf[0] == b.logpdf[1]
    assert b.d_dr[0] == -b.d_dr[1] and b.d_dr[0] > 0
    assert len(b) == 3 and b[2].logpdf == b.logpdf[2]


def test_bivariate_argument_shape(model2):
    pts = np.array([[3.0, 4.0], [0.0, 0.0]])
    b = logpdf_vec(model2, pts, alpha=1.2, sigma=1.0)
    assert b.logpdf[0] == pytest.approx(model2.evaluate(5.0, 1.2)[0], rel=1e-14)
    with pytest.raises(ValueError):
        logpdf_vec(model2, np.ones(3), alpha=1.2, sigma=1.0)


def test_invalid_inputs(model1, model2):
    with pytest.raises(ValueError):
        logpdf(model1, -1.0, StableParams(1.0))
    with pytest.raises(ValueError):
        logpdf(model1, 1.0, StableParams(1.95))
    with pytest.raises(ValueError):
        logpdf(model1, 1.0, StableParams(1.0, d=2))
    with pytest.raises(ValueError):
        model2.evaluate(np.array([1.0]), np.array([0.4]))
    with pytest.raises(ValueError):
        logpdf_vec(model1, [1.0], alpha=1.0, sigma=-1.0)
