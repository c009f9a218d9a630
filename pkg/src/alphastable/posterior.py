"""Negative log posteriors and MAP estimation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .forward import K_MAX, K_MIN, ConvolutionOperator, PDELikelihood
from .hybrid import HybridModel
from .optim import OptimizeResult, OptimizerConfig, lbfgs_minimize
from .priors import (
    DifferencePrior1D,
    FieldPrior2D,
    HierarchicalSpec,
    HierarchyMode,
    grad_logprior_1d,
    grad_logprior_2d,
    grad_logprior_hier,
    logprior_1d,
    logprior_2d,
    logprior_hier,
)


@dataclass(frozen=True)
class GaussianLikelihood:
    """``|y - F u|^2 / (2 std^2)`` for a linear forward operator."""

    op: ConvolutionOperator
    data: np.ndarray
    noise_std: float

    def value_and_gradient(self, u):
        resid = self.data - self.op.apply(u)
        value = 0.5 * float(resid @ resid) / self.noise_std ** 2
        return value, -self.op.adjoint(resid) / self.noise_std ** 2


class Posterior:
    """Objective over a flat vector split into named blocks."""

    blocks: tuple[str, ...] = ("u",)

    @property
    def block_size(self) -> int:
        raise NotImplementedError

    @property
    def dimension(self) -> int:
        return self.block_size * len(self.blocks)

    def split(self, x) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a vector of length {self.dimension}")
        m = self.block_size
        return {name: x[i * m:(i + 1) * m] for i, name in enumerate(self.blocks)}

    def default_start(self) -> np.ndarray:
        return np.zeros(self.dimension)

    def bounds(self):
        return None

    def value_and_gradient(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Deconvolution1DPosterior(Posterior):
    """Gaussian likelihood with a (possibly hierarchical) difference prior.

    Blocks are ``u`` followed by ``c`` and/or ``s`` when the hierarchy makes
    the scale or stability a process.  ``hierarchy=None`` uses the plain
    prior directly.
    """

    likelihood: GaussianLikelihood
    prior: DifferencePrior1D
    model: HybridModel
    hierarchy: HierarchicalSpec | None = None

    @property
    def blocks(self):
        names = ["u"]
        if self.hierarchy is not None:
            if self.hierarchy.mode.has_scale:
                names.append("c")
            if self.hierarchy.mode.has_stability:
                names.append("s")
        return tuple(names)

    @property
    def block_size(self) -> int:
        return self.prior.n

    def value_and_gradient(self, x):
        parts = self.split(x)
        u = parts["u"]
        lv, lg = self.likelihood.value_and_gradient(u)
        if self.hierarchy is None:
            return lv - logprior_1d(self.prior, self.model, u), lg - grad_logprior_1d(self.prior, self.model, u)
        c, s = parts.get("c"), parts.get("s")
        pv = logprior_hier(self.hierarchy, self.prior, self.model, u, c, s)
        du, dc, ds = grad_logprior_hier(self.hierarchy, self.prior, self.model, u, c, s)
        grads = {"u": lg - du, "c": -dc, "s": -ds}
        return lv - pv, np.concatenate([grads[b] for b in self.blocks])


@dataclass(frozen=True)
class Field2DPosterior(Posterior):
    likelihood: GaussianLikelihood
    prior: FieldPrior2D
    model: HybridModel
    boundary_model: HybridModel | None = None

    @property
    def block_size(self) -> int:
        return self.prior.n_rows * self.prior.n_cols

    def value_and_gradient(self, x):
        u = self.split(x)["u"]
        lv, lg = self.likelihood.value_and_gradient(u)
        field = u.reshape(self.prior.shape)
        pv = logprior_2d(self.prior, self.model, field, self.boundary_model)
        pg = grad_logprior_2d(self.prior, self.model, field, self.boundary_model)
        return lv - pv, lg - pg.ravel()


@dataclass(frozen=True)
class ConductivityPosterior(Posterior):
    """PDE likelihood with a field prior on the conductivity parameter."""

    likelihood: PDELikelihood
    prior: FieldPrior2D
    model: HybridModel
    boundary_model: HybridModel | None = None
    lower: float = K_MIN
    upper: float = K_MAX

    blocks = ("k",)

    @property
    def block_size(self) -> int:
        return self.likelihood.problem.n ** 2

    def default_start(self) -> np.ndarray:
        if self.likelihood.problem.log_parameter:
            return np.zeros(self.dimension)
        return np.ones(self.dimension)

    def bounds(self):
        if self.likelihood.problem.log_parameter:
            return np.log(self.lower), np.log(self.upper)
        return self.lower, self.upper

    def value_and_gradient(self, x):
        k = self.split(x)["k"]
        lv, lg = self.likelihood.value_and_gradient(k)
        field = k.reshape(self.prior.shape)
        pv = logprior_2d(self.prior, self.model, field, self.boundary_model)
        pg = grad_logprior_2d(self.prior, self.model, field, self.boundary_model)
        return lv - pv, lg - pg.ravel()


def neg_log_posterior(p: Posterior, x):
    """``(value, gradient)`` of the negative log posterior, up to a constant."""
    return p.value_and_gradient(x)


@dataclass
class MapResult:
    estimate: dict[str, np.ndarray]
    objective: float
    start_objective: float
    optimization: OptimizeResult

    @property
    def x(self) -> np.ndarray:
        return self.optimization.x


def _with_bounds(p: Posterior, cfg: OptimizerConfig) -> OptimizerConfig:
    b = p.bounds()
    if b is None or cfg.bounded:
        return cfg
    return dataclasses.replace(cfg, lower=b[0], upper=b[1])


def solve_map(p: Posterior, x0=None, cfg: OptimizerConfig = OptimizerConfig(),
              n_starts: int = 1, seed: int = 0, perturbation: float = 0.1) -> MapResult:
    """Local maximizer of the posterior; extra starts are seeded perturbations of ``x0``."""
    cfg = _with_bounds(p, cfg)
    x0 = p.default_start() if x0 is None else np.asarray(x0, dtype=float).ravel()
    f0 = p.value_and_gradient(x0)[0]
    lo, hi = cfg.bounds_for(p.dimension)
    rng = np.random.Generator(np.random.Philox(seed))
    best = None
    for k in range(n_starts):
        start = x0 if k == 0 else np.clip(x0 + perturbation * rng.standard_normal(x0.size), lo, hi)
        res = lbfgs_minimize(p.value_and_gradient, start, cfg)
        if best is None or res.fun < best.fun:
            best = res
    return MapResult(p.split(best.x), best.fun, f0, best)


def rmse(a, b) -> float:
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    return float(np.sqrt(np.mean((a - b) ** 2)))


def plain_hierarchy() -> HierarchicalSpec:
    return HierarchicalSpec(HierarchyMode.PLAIN)
