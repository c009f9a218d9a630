"""Discretized alpha-stable difference priors: 1D, hierarchical 1D and 2D fields."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .hybrid import HybridModel, logpdf_vec
from .oracles import HYBRID_ALPHA_MAX, HYBRID_ALPHA_MIN

STABILITY_FLOOR = 0.51
STABILITY_SPAN = 1.39
SCALE_FLOOR = 0.001
SCALE_SPAN = 0.05


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def stability_transform(s):
    """Map an unconstrained value to a stability index in (0.51, 1.9)."""
    return STABILITY_FLOOR + STABILITY_SPAN * sigmoid(s)


def stability_transform_deriv(s):
    p = sigmoid(s)
    return STABILITY_SPAN * p * (1.0 - p)


def scale_transform(c):
    """Map an unconstrained value to a scale in (0.001, 0.051)."""
    return SCALE_FLOOR + SCALE_SPAN * sigmoid(c)


def scale_transform_deriv(c):
    p = sigmoid(c)
    return SCALE_SPAN * p * (1.0 - p)


@dataclass(frozen=True)
class InitialDist:
    """Density of the anchoring values (first entry, or field boundary).

    ``kind="stable"`` is a centred univariate stable law with the prior's own
    stability and scale ``sigma0``; ``sigma0=None`` reuses the increment scale.
    ``kind="improper"`` is the flat density (log density 0).
    """

    kind: str = "stable"
    sigma0: float | None = 1.0

    def __post_init__(self):
        if self.kind not in ("stable", "improper"):
            raise ValueError(f"unknown initial distribution {self.kind!r}")
        if self.sigma0 is not None and not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")


IMPROPER = InitialDist("improper", None)


def _check_alpha(alpha):
    if not HYBRID_ALPHA_MIN <= alpha <= HYBRID_ALPHA_MAX:
        raise ValueError(f"alpha={alpha} outside [{HYBRID_ALPHA_MIN}, {HYBRID_ALPHA_MAX}]")


@dataclass(frozen=True)
class DifferencePrior1D:
    n: int
    alpha: float
    sigma_increment: float
    initial_dist: InitialDist = field(default_factory=InitialDist)
    delta_scaling: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least two grid points")
        _check_alpha(self.alpha)
        if not self.sigma_increment > 0:
            raise ValueError("sigma_increment must be positive")
        if self.delta_scaling is not None and not 0 < self.delta_scaling < 1:
            raise ValueError("mesh width must lie in (0, 1)")

    @property
    def increment_scale(self) -> float:
        if self.delta_scaling is None:
            return self.sigma_increment
        return self.sigma_increment * self.delta_scaling ** (1.0 / self.alpha)


def _require(model: HybridModel, d: int):
    if model.d != d:
        raise ValueError(f"expected a {d}-dimensional model, got d={model.d}")


def _initial_terms(dist: InitialDist, model, x, alpha, sigma):
    """Log density of the anchors and its derivatives (value, d/dx, d/dalpha, d/dsigma)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if dist.kind == "improper":
        z = np.zeros_like(x)
        return 0.0, z, z, z
    scale = sigma if dist.sigma0 is None else dist.sigma0
    res = logpdf_vec(model, x, alpha=alpha, sigma=scale)
    if dist.sigma0 is None:
        dsig = -(x * res.d_dr + 1.0) / scale
    else:
        dsig = np.zeros_like(x)
    return float(np.sum(res.logpdf)), res.d_dr, res.d_dalpha, dsig


def logprior_1d(prior: DifferencePrior1D, model: HybridModel, u) -> float:
    """Unnormalized log density of the first-order difference prior."""
    _require(model, 1)
    u = np.asarray(u, dtype=float)
    if u.shape != (prior.n,):
        raise ValueError(f"expected a vector of length {prior.n}")
    sigma = prior.increment_scale
    head, *_ = _initial_terms(prior.initial_dist, model, u[:1], prior.alpha, sigma)
    inc = logpdf_vec(model, np.diff(u), alpha=prior.alpha, sigma=sigma)
    return head + float(np.sum(inc.logpdf))


def grad_logprior_1d(prior: DifferencePrior1D, model: HybridModel, u) -> np.ndarray:
    _require(model, 1)
    u = np.asarray(u, dtype=float)
    if u.shape != (prior.n,):
        raise ValueError(f"expected a vector of length {prior.n}")
    sigma = prior.increment_scale
    _, d_head, _, _ = _initial_terms(prior.initial_dist, model, u[:1], prior.alpha, sigma)
    g = logpdf_vec(model, np.diff(u), alpha=prior.alpha, sigma=sigma).d_dr
    grad = np.zeros_like(u)
    grad[1:] += g
    grad[:-1] -= g
    grad[0] += d_head[0]
    return grad


# --------------------------------------------------------------------------
# hierarchical priors

class HierarchyMode(enum.Enum):
    PLAIN = "plain"
    STABILITY = "stability"
    SCALE = "scale"
    BOTH = "both"

    @property
    def has_stability(self) -> bool:
        return self in (HierarchyMode.STABILITY, HierarchyMode.BOTH)

    @property
    def has_scale(self) -> bool:
        return self in (HierarchyMode.SCALE, HierarchyMode.BOTH)


@dataclass(frozen=True)
class HierarchicalSpec:
    """Which parameters of the increments are processes of their own.

    The untransformed stability process ``s`` has increments
    ``S(alpha_s, sigma_s)`` and the untransformed scale process ``c`` has
    increments ``S(alpha_c, sigma_c)``; their first entries follow
    ``layer_initial`` with scale ``sigma0=None`` meaning the layer's own scale.
    """

    mode: HierarchyMode = HierarchyMode.PLAIN
    alpha_s: float = 1.4
    sigma_s: float = 0.05
    alpha_c: float = 1.9
    sigma_c: float = 0.05
    layer_initial: InitialDist = field(default_factory=lambda: InitialDist("stable", None))

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", HierarchyMode(self.mode))
        for a in (self.alpha_s, self.alpha_c):
            _check_alpha(a)
        if not (self.sigma_s > 0 and self.sigma_c > 0):
            raise ValueError("layer scales must be positive")


def _layer_parameters(spec: HierarchicalSpec, prior: DifferencePrior1D, c, s):
    n = prior.n
    if spec.mode.has_stability:
        alpha, dalpha = stability_transform(s), stability_transform_deriv(s)
    else:
        alpha, dalpha = np.full(n, prior.alpha), np.zeros(n)
    if spec.mode.has_scale:
        sigma, dsigma = scale_transform(c), scale_transform_deriv(c)
    else:
        sigma, dsigma = np.full(n, prior.sigma_increment), np.zeros(n)
    return alpha, dalpha, sigma, dsigma


def _layer_vector(x, n, name):
    if x is None:
        return np.zeros(n)
    x = np.asarray(x, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"{name} must have length {n}")
    return x


def _check_hier(spec, prior, model):
    _require(model, 1)
    if prior.delta_scaling is not None and spec.mode is not HierarchyMode.PLAIN:
        raise ValueError("mesh-width scaling is only available for the plain prior")


def _layer_logprior(model, x, alpha, sigma, dist):
    head, d_head, _, _ = _initial_terms(dist, model, x[:1], alpha, sigma)
    inc = logpdf_vec(model, np.diff(x), alpha=alpha, sigma=sigma)
    grad = np.zeros_like(x)
    grad[1:] += inc.d_dr
    grad[:-1] -= inc.d_dr
    grad[0] += d_head[0]
    return head + float(np.sum(inc.logpdf)), grad


def _hier_terms(spec, prior, model, u, c, s):
    n = prior.n
    u = _layer_vector(u, n, "u")
    c = _layer_vector(c, n, "c")
    s = _layer_vector(s, n, "s")
    alpha, dalpha, sigma, dsigma = _layer_parameters(spec, prior, c, s)

    # increments of u carry the parameters of their upper endpoint
    z = np.diff(u)
    inc = logpdf_vec(model, z, alpha=alpha[1:], sigma=sigma[1:])
    d_sig = -(z * inc.d_dr + 1.0) / sigma[1:]
    head, h_u, h_a, h_s = _initial_terms(prior.initial_dist, model, u[:1], alpha[0], sigma[0])

    value = head + float(np.sum(inc.logpdf))
    du = np.zeros(n)
    du[1:] += inc.d_dr
    du[:-1] -= inc.d_dr
    du[0] += h_u[0]
    d_alpha = np.concatenate([h_a, inc.d_dalpha])
    d_sigma = np.concatenate([h_s, d_sig])
    dc = np.zeros(n)
    ds = np.zeros(n)
    if spec.mode.has_scale:
        v, g = _layer_logprior(model, c, spec.alpha_c, spec.sigma_c, spec.layer_initial)
        value += v
        dc = g + d_sigma * dsigma
    if spec.mode.has_stability:
        v, g = _layer_logprior(model, s, spec.alpha_s, spec.sigma_s, spec.layer_initial)
        value += v
        ds = g + d_alpha * dalpha
    return value, du, dc, ds


def logprior_hier(spec: HierarchicalSpec, prior: DifferencePrior1D, model: HybridModel,
                  u, c=None, s=None) -> float:
    """Log density of the two-layer hierarchical difference prior.

    Absent layers (per ``spec.mode``) are ignored and the fixed stability or
    scale of ``prior`` is used instead; ``PLAIN`` reduces to :func:`logprior_1d`.
    """
    _check_hier(spec, prior, model)
    if spec.mode is HierarchyMode.PLAIN:
        return logprior_1d(prior, model, u)
    return _hier_terms(spec, prior, model, u, c, s)[0]


def grad_logprior_hier(spec: HierarchicalSpec, prior: DifferencePrior1D, model: HybridModel,
                       u, c=None, s=None):
    """Gradients ``(du, dc, ds)``; blocks of absent layers are zero."""
    _check_hier(spec, prior, model)
    if spec.mode is HierarchyMode.PLAIN:
        n = prior.n
        return grad_logprior_1d(prior, model, u), np.zeros(n), np.zeros(n)
    return _hier_terms(spec, prior, model, u, c, s)[1:]


# --------------------------------------------------------------------------
# two-dimensional fields

@dataclass(frozen=True)
class FieldPrior2D:
    """Quasi-isotropic difference prior on a ``(n_rows, n_cols)`` grid.

    Row 0 and column 0 are the anchoring boundary; every other node
    contributes a bivariate stable density of its (left, lower) differences.
    """

    n_rows: int
    n_cols: int
    alpha: float
    sigma: float
    boundary_dist: InitialDist = field(default_factory=InitialDist)

    def __post_init__(self):
        if self.n_rows < 2 or self.n_cols < 2:
            raise ValueError("field must be at least 2x2")
        _check_alpha(self.alpha)
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rows, self.n_cols)

    @property
    def n_boundary(self) -> int:
        return self.n_rows + self.n_cols - 1


def _boundary_mask(shape):
    mask = np.zeros(shape, dtype=bool)
    mask[0, :] = True
    mask[:, 0] = True
    return mask


def _field_terms(prior: FieldPrior2D, model: HybridModel, u, boundary_model):
    _require(model, 2)
    u = np.asarray(u, dtype=float)
    if u.shape != prior.shape:
        raise ValueError(f"expected a field of shape {prior.shape}")
    horiz = u[1:, 1:] - u[1:, :-1]
    vert = u[1:, 1:] - u[:-1, 1:]
    pairs = np.stack([horiz.ravel(), vert.ravel()], axis=1)
    res = logpdf_vec(model, pairs, alpha=prior.alpha, sigma=prior.sigma)
    r = np.hypot(pairs[:, 0], pairs[:, 1])
    # radial derivative vanishes at r = 0, so the direction is irrelevant there
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(r > 0, res.d_dr / r, 0.0)
    gh = (w * pairs[:, 0]).reshape(horiz.shape)
    gv = (w * pairs[:, 1]).reshape(vert.shape)
    grad = np.zeros_like(u)
    grad[1:, 1:] += gh + gv
    grad[1:, :-1] -= gh
    grad[:-1, 1:] -= gv

    mask = _boundary_mask(u.shape)
    value = float(np.sum(res.logpdf))
    if prior.boundary_dist.kind == "stable":
        if boundary_model is None:
            raise ValueError("a univariate model is needed for the stable boundary density")
        _require(boundary_model, 1)
        b, db, _, _ = _initial_terms(prior.boundary_dist, boundary_model, u[mask],
                                     prior.alpha, prior.sigma)
        value += b
        grad[mask] += db
    return value, grad


def logprior_2d(prior: FieldPrior2D, model: HybridModel, u, boundary_model: HybridModel | None = None) -> float:
    """Log density of the field prior; ``boundary_model`` is the univariate model
    used by a stable boundary density."""
    return _field_terms(prior, model, u, boundary_model)[0]


def grad_logprior_2d(prior: FieldPrior2D, model: HybridModel, u,
                     boundary_model: HybridModel | None = None) -> np.ndarray:
    return _field_terms(prior, model, u, boundary_model)[1]


def cauchy_increment_logprior(u, sigma: float) -> float:
    """Closed-form sum of Cauchy increment log densities (no initial term)."""
    z = np.diff(np.asarray(u, dtype=float)) / sigma
    return float(np.sum(-np.log(math.pi * sigma * (1.0 + z * z))))
