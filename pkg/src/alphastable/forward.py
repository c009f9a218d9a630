"""Forward operators for the deconvolution and conductivity experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.interpolate import RegularGridInterpolator
from scipy.sparse.linalg import cg, splu
from scipy.stats import qmc

K_MIN = 1e-5
K_MAX = 1e2


# --------------------------------------------------------------------------
# convolution

@dataclass(frozen=True)
class Kernel:
    """Gaussian blur ``amplitude * exp(-bandwidth * |p|^2)``."""

    amplitude: float
    bandwidth: float

    def __call__(self, sq_dist):
        return self.amplitude * np.exp(-self.bandwidth * sq_dist)


KERNEL_1D = Kernel(25.0, 50.0)
KERNEL_2D = Kernel(150.0 / math.pi, 150.0)


def cell_midpoints(n: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    h = (hi - lo) / n
    return lo + h * (np.arange(n) + 0.5)


def grid_points_2d(shape, lo: float = -1.0, hi: float = 1.0):
    """Cell midpoints of a ``shape`` grid as ``(n, 2)`` array in row-major order."""
    ys = cell_midpoints(shape[0], lo, hi)
    xs = cell_midpoints(shape[1], lo, hi)
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def halton_points(n: int, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """First ``n`` nonzero points of the unscrambled base (2, 3) Halton sequence."""
    pts = qmc.Halton(d=2, scramble=False).random(n + 1)[1:]
    return lo + (hi - lo) * pts


@dataclass(frozen=True)
class ConvolutionOperator:
    matrix: np.ndarray | sparse.csr_matrix
    src_points: np.ndarray
    obs_points: np.ndarray
    kernel: Kernel
    src_shape: tuple[int, ...]
    cell_volume: float

    @property
    def n_obs(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_src(self) -> int:
        return self.matrix.shape[1]

    def apply(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float).ravel()

    def adjoint(self, y) -> np.ndarray:
        return self.matrix.T @ np.asarray(y, dtype=float)

    def backproject(self, y) -> np.ndarray:
        """Adjoint image normalized so that a constant field maps back to itself.

        Source cells that no observation sees are set to zero.
        """
        weight = self.adjoint(self.apply(np.ones(self.n_src)))
        back = np.zeros(self.n_src)
        seen = weight > 0
        back[seen] = self.adjoint(y)[seen] / weight[seen]
        return back.reshape(self.src_shape)


def _kernel_matrix(obs, src, kernel, volume, cutoff):
    diff = obs[:, None, :] - src[None, :, :]
    mat = kernel(np.sum(diff * diff, axis=-1)) * volume
    if cutoff is None:
        return mat
    mat[mat < cutoff * kernel.amplitude * volume] = 0.0
    return sparse.csr_matrix(mat)


def build_conv_1d(n_src: int, n_obs: int, kernel: Kernel = KERNEL_1D) -> ConvolutionOperator:
    """Midpoint-rule blur on ``[-1, 1]`` observed at ``n_obs`` equispaced points."""
    if n_obs < 1 or n_src < n_obs:
        raise ValueError("need n_src >= n_obs >= 1")
    src = cell_midpoints(n_src)
    obs = np.linspace(-1.0, 1.0, n_obs)
    h = 2.0 / n_src
    mat = _kernel_matrix(obs[:, None], src[:, None], kernel, h, None)
    return ConvolutionOperator(mat, src, obs, kernel, (n_src,), h)


def build_conv_2d(src_shape, obs_points, kernel: Kernel = KERNEL_2D,
                  cutoff: float | None = 1e-16) -> ConvolutionOperator:
    """Midpoint-rule blur on ``[-1, 1]^2``; entries below ``cutoff`` times the
    peak weight are dropped and the matrix is stored sparse."""
    src_shape = tuple(int(s) for s in src_shape)
    src = grid_points_2d(src_shape)
    obs = np.asarray(obs_points, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != 2:
        raise ValueError("observation points must have shape (n, 2)")
    volume = (2.0 / src_shape[0]) * (2.0 / src_shape[1])
    rows = []
    for start in range(0, len(obs), 256):
        block = _kernel_matrix(obs[start:start + 256], src, kernel, volume, cutoff)
        rows.append(block if cutoff is not None else sparse.csr_matrix(block))
    mat = sparse.vstack(rows).tocsr()
    return ConvolutionOperator(mat, src, obs, kernel, src_shape, volume)


@dataclass(frozen=True)
class NoiseModel:
    std: float
    seed: int = 0

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be non-negative")

    def sample(self, n: int) -> np.ndarray:
        # Philox is counter-based, so the stream is fixed by the seed alone
        return self.std * np.random.Generator(np.random.Philox(self.seed)).standard_normal(n)


def generate_data(op: ConvolutionOperator, truth_u, noise: NoiseModel) -> np.ndarray:
    clean = op.apply(truth_u)
    return clean + noise.sample(clean.size)


# --------------------------------------------------------------------------
# ground truths

def _matern32_sample(t, length, std, seed):
    d = np.abs(t[:, None] - t[None, :]) / length
    cov = std ** 2 * (1 + math.sqrt(3) * d) * np.exp(-math.sqrt(3) * d)
    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(len(t)))
    return chol @ np.random.Generator(np.random.Philox(seed)).standard_normal(len(t))


def truth_1d(x, seed: int = 7) -> np.ndarray:
    """Boxcar on [-0.7, -0.3] plus a Matern-3/2 path on [0.1, 0.8], zero elsewhere."""
    x = np.asarray(x, dtype=float)
    box = np.where((x >= -0.7) & (x <= -0.3), 1.0, 0.0)
    knots = np.linspace(0.1, 0.8, 141)
    path = 0.6 + _matern32_sample(knots, 0.15, 0.35, seed)
    inside = (x >= 0.1) & (x <= 0.8)
    return box + np.where(inside, np.interp(x, knots, path), 0.0)


def truth_2d(points) -> np.ndarray:
    """Two overlapping discs of height 1 plus a smaller raised disc of height 0.5."""
    p = np.asarray(points, dtype=float)
    x, y = p[..., 0], p[..., 1]
    a = (x + 0.25) ** 2 + (y - 0.1) ** 2 <= 0.35 ** 2
    b = (x - 0.15) ** 2 + (y - 0.25) ** 2 <= 0.3 ** 2
    c = (x - 0.4) ** 2 + (y + 0.5) ** 2 <= 0.2 ** 2
    return np.where(a | b, 1.0, 0.0) + np.where(c, 0.5, 0.0)


# --------------------------------------------------------------------------
# elliptic problem

def default_source(x, y):
    """Smooth positive source built from three Gaussian bumps."""
    g = np.zeros_like(x)
    for cx, cy, w in ((0.3, 0.3, 1.0), (0.7, 0.4, 0.8), (0.45, 0.75, 1.2)):
        g = g + 100.0 * w * np.exp(-30.0 * ((x - cx) ** 2 + (y - cy) ** 2))
    return g


def default_conductivity(x, y):
    """Unit background with a raised double disc."""
    a = (x - 0.4) ** 2 + (y - 0.5) ** 2 <= 0.18 ** 2
    b = (x - 0.58) ** 2 + (y - 0.55) ** 2 <= 0.15 ** 2
    return np.where(a | b, 3.0, 1.0)


@dataclass(frozen=True)
class EllipticProblem:
    """``-div(k grad u) = g`` on a rectangle with zero Dirichlet data.

    Unknowns and conductivities live on the ``n x n`` interior nodes of a
    uniform grid; face conductivities are harmonic (or arithmetic) means of
    the two adjacent node values, and a face to the boundary uses the
    interior node's own value.
    """

    n: int
    source: np.ndarray
    obs_index: np.ndarray | None = None
    obs_weights: sparse.csr_matrix | None = None
    lower: tuple[float, float] = (0.0, 0.0)
    upper: tuple[float, float] = (1.0, 1.0)
    averaging: str = "harmonic"
    log_parameter: bool = False

    def __post_init__(self):
        if self.averaging not in ("harmonic", "arithmetic"):
            raise ValueError(f"unknown face averaging {self.averaging!r}")
        if np.shape(self.source) != (self.n, self.n):
            raise ValueError("source must live on the interior grid")

    @property
    def h(self) -> tuple[float, float]:
        return ((self.upper[0] - self.lower[0]) / (self.n + 1),
                (self.upper[1] - self.lower[1]) / (self.n + 1))

    @property
    def nodes(self):
        """Coordinates ``(X, Y)`` of the interior nodes; arrays are indexed ``[iy, ix]``."""
        hx, hy = self.h
        xs = self.lower[0] + hx * np.arange(1, self.n + 1)
        ys = self.lower[1] + hy * np.arange(1, self.n + 1)
        return np.meshgrid(xs, ys)

    @classmethod
    def on_unit_square(cls, n: int, source=default_source, **kw) -> "EllipticProblem":
        hx = 1.0 / (n + 1)
        xs = hx * np.arange(1, n + 1)
        X, Y = np.meshgrid(xs, xs)
        return cls(n, source(X, Y), **kw)

    def observation_matrix(self) -> sparse.csr_matrix:
        if self.obs_weights is not None:
            return self.obs_weights
        m = self.n * self.n
        idx = np.arange(m) if self.obs_index is None else np.asarray(self.obs_index)
        return sparse.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), m))

    def conductivity(self, param) -> np.ndarray:
        param = np.asarray(param, dtype=float).reshape(self.n, self.n)
        return np.exp(param) if self.log_parameter else param

    def _faces(self, k):
        """Face values and their derivatives with respect to the two node values."""
        a, b = k[:, :-1], k[:, 1:]
        c, d = k[:-1, :], k[1:, :]
        if self.averaging == "harmonic":
            mean = lambda p, q: 2 * p * q / (p + q)
            dp = lambda p, q: 2 * q * q / (p + q) ** 2
        else:
            mean = lambda p, q: 0.5 * (p + q)
            dp = lambda p, q: 0.5 * np.ones_like(p)
        return (mean(a, b), dp(a, b), dp(b, a)), (mean(c, d), dp(c, d), dp(d, c))

    def system_matrix(self, k) -> sparse.csc_matrix:
        n = self.n
        hx, hy = self.h
        k = np.asarray(k, dtype=float).reshape(n, n)
        (kx, _, _), (ky, _, _) = self._faces(k)
        idx = np.arange(n * n).reshape(n, n)
        # boundary faces use the node's own conductivity
        diag = np.zeros((n, n))
        diag[:, :-1] += kx / hx ** 2
        diag[:, 1:] += kx / hx ** 2
        diag[:-1, :] += ky / hy ** 2
        diag[1:, :] += ky / hy ** 2
        diag[:, 0] += k[:, 0] / hx ** 2
        diag[:, -1] += k[:, -1] / hx ** 2
        diag[0, :] += k[0, :] / hy ** 2
        diag[-1, :] += k[-1, :] / hy ** 2
        rows = [idx.ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel()]
        cols = [idx.ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel()]
        vals = [diag.ravel(), -kx.ravel() / hx ** 2, -kx.ravel() / hx ** 2,
                -ky.ravel() / hy ** 2, -ky.ravel() / hy ** 2]
        return sparse.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                 shape=(n * n, n * n))

    def dresidual_dk_transpose(self, k, u, q) -> np.ndarray:
        """``q^T dE/dk`` for ``E(u; k) = A(k) u - g``, as an ``n x n`` field."""
        n = self.n
        hx, hy = self.h
        k = np.asarray(k, dtype=float).reshape(n, n)
        u = np.asarray(u).reshape(n, n)
        q = np.asarray(q).reshape(n, n)
        (_, kx_l, kx_r), (_, ky_l, ky_r) = self._faces(k)
        out = np.zeros((n, n))
        jx = (q[:, :-1] - q[:, 1:]) * (u[:, :-1] - u[:, 1:]) / hx ** 2
        jy = (q[:-1, :] - q[1:, :]) * (u[:-1, :] - u[1:, :]) / hy ** 2
        out[:, :-1] += kx_l * jx
        out[:, 1:] += kx_r * jx
        out[:-1, :] += ky_l * jy
        out[1:, :] += ky_r * jy
        qu = q * u
        out[:, 0] += qu[:, 0] / hx ** 2
        out[:, -1] += qu[:, -1] / hx ** 2
        out[0, :] += qu[0, :] / hy ** 2
        out[-1, :] += qu[-1, :] / hy ** 2
        return out


class PDESolveError(RuntimeError):
    pass


def _check_k(k):
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        raise PDESolveError("conductivity must be finite and positive")


def _factorize(prob: EllipticProblem, k):
    A = prob.system_matrix(k)
    try:
        lu = splu(A)
    except RuntimeError:
        def solve(b):
            x, info = cg(A, b, rtol=1e-12, maxiter=10 * A.shape[0])
            if info != 0:
                raise PDESolveError(f"iterative solve failed (info={info})")
            return x
        return solve
    return lu.solve


def solve_pde(prob: EllipticProblem, k) -> np.ndarray:
    """Nodal solution on the interior grid for conductivity ``k`` (not the parameter)."""
    k = np.asarray(k, dtype=float).reshape(prob.n, prob.n)
    _check_k(k)
    u = _factorize(prob, k)(prob.source.ravel())
    if not np.all(np.isfinite(u)):
        raise PDESolveError("non-finite solution")
    return u.reshape(prob.n, prob.n)


def _misfit_and_gradient(prob: EllipticProblem, k, data, noise_std):
    """Negative log-likelihood, its gradient in ``k`` and the state ``u``.

    The gradient comes from one adjoint solve reusing the factorization
    (the system matrix is symmetric).
    """
    k = np.asarray(k, dtype=float).reshape(prob.n, prob.n)
    _check_k(k)
    solve = _factorize(prob, k)
    u = solve(prob.source.ravel())
    O = prob.observation_matrix()
    resid = data - O @ u
    value = 0.5 * float(resid @ resid) / noise_std ** 2
    # adjoint of the log-likelihood: A^T q = d loglik / du
    q = solve(O.T @ resid / noise_std ** 2)
    # d loglik / dk = -q^T dE/dk
    grad = prob.dresidual_dk_transpose(k, u, q)
    return value, grad, u.reshape(prob.n, prob.n)


def adjoint_gradient(prob: EllipticProblem, k, data, noise_std: float) -> np.ndarray:
    """Gradient of the Gaussian log-likelihood with respect to the conductivity ``k``."""
    return -_misfit_and_gradient(prob, k, np.asarray(data, dtype=float), noise_std)[1]


@dataclass(frozen=True)
class PDELikelihood:
    problem: EllipticProblem
    data: np.ndarray
    noise_std: float

    def value_and_gradient(self, param):
        """Negative log-likelihood and its gradient in the parameter field."""
        k = self.problem.conductivity(param)
        value, grad, _ = _misfit_and_gradient(self.problem, k, self.data, self.noise_std)
        if self.problem.log_parameter:
            grad = grad * k
        return value, grad.ravel()


def interpolate_truth(field_values, axes, points) -> np.ndarray:
    """Bilinear interpolation of a field given on the tensor grid ``axes = (ys, xs)``.

    ``points`` are ``(x, y)`` pairs; points outside the grid raise ``ValueError``.
    """
    ys, xs = axes
    interp = RegularGridInterpolator((ys, xs), np.asarray(field_values, dtype=float),
                                     method="linear", bounds_error=True)
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    return interp(p[:, ::-1])


def padded_axes(prob: EllipticProblem):
    """Node coordinates including the boundary, for interpolating solutions."""
    hx, hy = prob.h
    xs = prob.lower[0] + hx * np.arange(prob.n + 2)
    ys = prob.lower[1] + hy * np.arange(prob.n + 2)
    return ys, xs


def pad_solution(u) -> np.ndarray:
    return np.pad(np.asarray(u), 1)


def halton_grid_indices(n: int, count: int) -> np.ndarray:
    """Distinct node indices of an ``n x n`` grid picked by snapping Halton points."""
    if count > n * n:
        raise ValueError("more observations than grid nodes")
    pts = qmc.Halton(d=2, scramble=False).random(64 * n * n + 1)[1:]
    keys = np.minimum((pts[:, 1] * n).astype(int), n - 1) * n + np.minimum((pts[:, 0] * n).astype(int), n - 1)
    _, first = np.unique(keys, return_index=True)
    order = np.sort(first)
    if len(order) < count:
        raise ValueError("cannot place that many distinct observations")
    return keys[order[:count]]
