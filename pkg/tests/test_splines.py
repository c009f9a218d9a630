import numpy as np
import pytest

from alphastable.splines import (
    BoundaryCondition,
    GridSpec,
    LogDensityGrid,
    fit_bicubic,
    grid_filename,
    hermite_blend,
    read_grid,
    write_grid,
)


def smooth(r, a):
    return np.sin(r) * np.cos(a) + 0.1 * r * a


def grid_of(fn, spec):
    R, A = np.meshgrid(spec.r_nodes, spec.alpha_nodes)
    return LogDensityGrid(spec, fn(R, A), 1)


def test_grid_spec_counts():
    desk = GridSpec.hybrid("main", desk=True)
    assert (desk.n_alpha, desk.n_r) == (141, 301)
    full = GridSpec.hybrid("main", desk=False)
    assert (full.n_alpha, full.n_r) == (2801, 3001)
    assert GridSpec.hybrid("inner", desk=True).r_max == 1.0
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, h_r=0.3)


def test_spline_interpolates_nodes():
    spec = GridSpec(0.0, 3.0, 0.5, 1.9, 0.1, 0.05)
    s = fit_bicubic(grid_of(smooth, spec))
    R, A = np.meshgrid(spec.r_nodes, spec.alpha_nodes)
    assert np.max(np.abs(s(R, A) - smooth(R, A))) < 1e-13


def test_bilinear_reproduced_exactly():
    spec = GridSpec(0.0, 2.0, 0.5, 1.9, 0.25, 0.1)
    fn = lambda r, a: 1.0 + 2.0 * r - 0.5 * a + 0.3 * r * a
    s = fit_bicubic(grid_of(fn, spec))
    rng = np.random.default_rng(0)
    r, a = rng.uniform(0, 2, 200), rng.uniform(0.5, 1.9, 200)
    v, vr, va = s.eval_with_gradient(r, a)
    assert np.allclose(v, fn(r, a), atol=1e-12)
    assert np.allclose(vr, 2.0 + 0.3 * a, atol=1e-11)
    assert np.allclose(va, -0.5 + 0.3 * r, atol=1e-11)


def test_fourth_order_convergence():
    rng = np.random.default_rng(1)
    # points kept well inside so the natural end conditions do not pollute the rate
    r, a = rng.uniform(1.5, 3.5, 300), rng.uniform(0.8, 1.6, 300)
    errs = []
    for h in (0.05, 0.025):
        spec = GridSpec(0.0, 5.0, 0.0, 2.4, h, h)
        errs.append(np.max(np.abs(fit_bicubic(grid_of(smooth, spec))(r, a) - smooth(r, a))))
    assert 12 < errs[0] / errs[1] < 20


def test_partials_match_finite_differences():
    spec = GridSpec(0.0, 3.0, 0.5, 1.9, 0.1, 0.05)
    s = fit_bicubic(grid_of(smooth, spec))
    r, a, h = 1.234, 1.111, 1e-6
    assert s.partial(r, a, 1, 0) == pytest.approx((s(r + h, a) - s(r - h, a)) / (2 * h), rel=1e-7)
    assert s.partial(r, a, 0, 1) == pytest.approx((s(r, a + h) - s(r, a - h)) / (2 * h), rel=1e-7)
    assert s.partial(r, a, 1, 1) == pytest.approx(
        (s.partial(r, a + h, 1, 0) - s.partial(r, a - h, 1, 0)) / (2 * h), rel=1e-6)


def test_scalar_path_matches_vectorized():
    spec = GridSpec(0.0, 3.0, 0.5, 1.9, 0.1, 0.05)
    s = fit_bicubic(grid_of(smooth, spec))
    for r, a in [(0.0, 0.5), (3.0, 1.9), (1.05, 1.23), (2.2, 0.71)]:
        vec = [float(x[0]) for x in s.eval_with_gradient(np.array([r]), np.array([a]))]
        assert np.allclose(s.eval_scalar(r, a), vec, rtol=0, atol=1e-13)


def test_clamped_end_slope():
    spec = GridSpec(0.0, 3.0, 0.5, 1.9, 0.1, 0.1)
    g = grid_of(smooth, spec)
    slope = np.cos(spec.r_max) * np.cos(spec.alpha_nodes) + 0.1 * spec.alpha_nodes
    s = fit_bicubic(g, bc_r_high=BoundaryCondition.clamped(slope))
    assert np.allclose(s.partial(np.full(spec.n_alpha, 3.0), spec.alpha_nodes, 1, 0), slope)
    with pytest.raises(ValueError):
        BoundaryCondition("clamped")


def test_hermite_blend_endpoints():
    q = np.array([0.0, 2.0])
    v = hermite_blend(q, 2.0, 1.0, 0.5, 3.0, -1.0)
    assert np.allclose(v, [1.0, 3.0])
    m = hermite_blend(q, 2.0, 1.0, 0.5, 3.0, -1.0, order=1)
    assert np.allclose(m, [0.5, -1.0])


def test_grid_round_trip(tmp_path):
    spec = GridSpec(0.0, 1.0, 0.5, 1.9, 0.1, 0.1)
    g = grid_of(smooth, spec)
    path = write_grid(tmp_path / grid_filename("inner", 1), g)
    back = read_grid(path)
    assert back.spec == spec and back.dimension == 1
    assert np.array_equal(back.values, g.values)
    assert np.array_equal(read_grid(path, mmap=True).values, g.values)
    assert "sha256" in path.with_suffix(".grid.manifest").read_text()
    (tmp_path / "bad.grid").write_bytes(b"junk")
    with pytest.raises(ValueError):
        read_grid(tmp_path / "bad.grid")


def test_grid_check_flags_bad_rows():
    spec = GridSpec(0.0, 1.0, 0.5, 1.9, 0.1, 0.1)
    vals = -np.tile(spec.r_nodes, (spec.n_alpha, 1))
    vals[3, 4] = 5.0
    vals[5, 2] = np.nan
    problems = LogDensityGrid(spec, vals, 1).check()
    assert "non-finite values" in problems
    assert any("not strictly decreasing" in p for p in problems)
