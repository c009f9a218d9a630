import math

import numpy as np
import pytest

from alphastable.forward import (
    KERNEL_1D,
    EllipticProblem,
    NoiseModel,
    PDELikelihood,
    PDESolveError,
    adjoint_gradient,
    build_conv_1d,
    build_conv_2d,
    cell_midpoints,
    default_conductivity,
    generate_data,
    halton_grid_indices,
    halton_points,
    interpolate_truth,
    pad_solution,
    padded_axes,
    solve_pde,
    truth_1d,
    truth_2d,
)

from fd import fd_gradient, rel_error


def manufactured_error(n):
    src = lambda x, y: 2 * math.pi ** 2 * np.sin(math.pi * x) * np.sin(math.pi * y)
    prob = EllipticProblem.on_unit_square(n, src)
    X, Y = prob.nodes
    u = solve_pde(prob, np.ones((n, n)))
    return np.max(np.abs(u - np.sin(math.pi * X) * np.sin(math.pi * Y)))


def test_manufactured_solution_second_order():
    e64, e129 = manufactured_error(64), manufactured_error(129)
    assert e64 < 1e-3
    assert 3.5 <= e64 / e129 <= 4.5


def test_constant_conductivity_scales_solution():
    prob = EllipticProblem.on_unit_square(15)
    assert np.allclose(solve_pde(prob, np.full((15, 15), 2.0)), 0.5 * solve_pde(prob, np.ones((15, 15))))


@pytest.mark.parametrize("averaging", ["harmonic", "arithmetic"])
def test_system_matrix_symmetric_positive(averaging):
    prob = EllipticProblem.on_unit_square(8, averaging=averaging)
    X, Y = prob.nodes
    A = prob.system_matrix(default_conductivity(X, Y)).toarray()
    assert np.allclose(A, A.T)
    assert np.min(np.linalg.eigvalsh(A)) > 0


@pytest.mark.parametrize("log_parameter", [False, True])
def test_adjoint_gradient(log_parameter):
    n = 12
    prob = EllipticProblem.on_unit_square(n, obs_index=halton_grid_indices(n, 40), log_parameter=log_parameter)
    X, Y = prob.nodes
    k_true = default_conductivity(X, Y)
    data = generate_data_pde(prob, k_true)
    like = PDELikelihood(prob, data, 1e-3)
    rng = np.random.default_rng(0)
    k = 1.0 + 0.3 * rng.random((n, n))
    param = np.log(k) if log_parameter else k
    _, g = like.value_and_gradient(param)
    fd = fd_gradient(lambda p: like.value_and_gradient(p)[0], param, h=1e-6)
    assert rel_error(g, fd) < 1e-5
    if not log_parameter:
        assert np.allclose(adjoint_gradient(prob, k, data, 1e-3), -g.reshape(n, n))


def generate_data_pde(prob, k):
    return prob.observation_matrix() @ solve_pde(prob, k).ravel()


def test_solver_rejects_bad_conductivity():
    prob = EllipticProblem.on_unit_square(5)
    with pytest.raises(PDESolveError):
        solve_pde(prob, -np.ones((5, 5)))
    with pytest.raises(PDESolveError):
        solve_pde(prob, np.full((5, 5), np.nan))
    with pytest.raises(ValueError):
        EllipticProblem(5, np.zeros((4, 4)))


def test_blur_of_constant():
    op = build_conv_1d(2000, 11)
    y = op.apply(np.ones(2000))
    centre = y[5]
    assert centre == pytest.approx(KERNEL_1D.amplitude * math.sqrt(math.pi / KERNEL_1D.bandwidth), rel=1e-6)


def test_operator_adjoint_identity():
    rng = np.random.default_rng(5)
    for op in (build_conv_1d(50, 20), build_conv_2d((12, 10), halton_points(30))):
        u, y = rng.standard_normal(op.n_src), rng.standard_normal(op.n_obs)
        assert op.apply(u) @ y == pytest.approx(u @ op.adjoint(y), rel=1e-12)


def test_noise_is_reproducible():
    a = NoiseModel(0.1, 4).sample(100)
    assert np.array_equal(a, NoiseModel(0.1, 4).sample(100))
    assert not np.array_equal(a, NoiseModel(0.1, 5).sample(100))
    assert 0.07 < np.std(a) < 0.13
    op = build_conv_1d(40, 10)
    assert generate_data(op, np.zeros(40), NoiseModel(0.1, 4)).shape == (10,)


def test_truth_functions():
    x = cell_midpoints(400)
    t = truth_1d(x)
    assert np.array_equal(t, truth_1d(x))
    assert np.all(t[(x > -0.7) & (x < -0.3)] != 0)
    assert np.all(t[(x > -0.25) & (x < 0.05)] == 0)
    pts = halton_points(50)
    assert truth_2d(pts).shape == (50,)


def test_halton_indices_unique():
    idx = halton_grid_indices(10, 60)
    assert len(np.unique(idx)) == 60
    with pytest.raises(ValueError):
        halton_grid_indices(3, 10)


def test_interpolation_of_padded_solution():
    prob = EllipticProblem.on_unit_square(6)
    ys, xs = padded_axes(prob)
    field = np.add.outer(ys, 2 * xs)
    assert interpolate_truth(field, (ys, xs), [[0.3, 0.6]])[0] == pytest.approx(0.6 + 0.6)
    assert pad_solution(np.ones((6, 6))).shape == (8, 8)
    with pytest.raises(ValueError):
        interpolate_truth(field, (ys, xs), [[1.5, 0.1]])
