"""Experiment configuration files (YAML)."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .oracles import HYBRID_ALPHA_MAX, HYBRID_ALPHA_MIN

KINDS = ("deconv1d", "deconv2d", "pde")
MODES = ("none", "plain", "stability", "scale", "both")


class ConfigError(ValueError):
    pass


@dataclass
class PriorConfig:
    """Difference prior; ``mode='none'`` is the plain non-hierarchical prior."""

    alpha: float = 1.0
    sigma: float = 0.05
    mode: str = "none"
    alpha_s: float = 1.4
    sigma_s: float = 0.05
    alpha_c: float = 1.9
    sigma_c: float = 0.05
    initial: str = "stable"
    sigma0: float | None = 1.0


@dataclass
class ForwardConfig:
    """Geometry and noise.  Sizes are points per axis; ``n_obs`` is the total count."""

    truth_size: int = 500
    recon_size: int = 120
    n_obs: int = 60
    noise_std: float = 0.02
    seed: int = 1
    truth_seed: int = 7
    averaging: str = "harmonic"
    log_parameter: bool = False


@dataclass
class OptimizerBlock:
    memory: int = 10
    max_iter: int = 1000
    gtol: float = 1e-6
    lower: float | None = None
    upper: float | None = None
    n_starts: int = 1


@dataclass
class SweepBlock:
    alpha: list[float] = field(default_factory=list)
    sigma: list[float] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    kind: str = "deconv1d"
    prior: PriorConfig = field(default_factory=PriorConfig)
    forward: ForwardConfig = field(default_factory=ForwardConfig)
    optimizer: OptimizerBlock = field(default_factory=OptimizerBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    output_dir: str = "out"
    desk_scale: bool = True

    @classmethod
    def default(cls, kind: str, desk: bool = True) -> "ExperimentConfig":
        if kind == "deconv1d":
            fwd = ForwardConfig(500, 120, 60, 0.02)
            return cls(kind, forward=fwd, desk_scale=desk)
        if kind == "deconv2d":
            fwd = ForwardConfig(65, 48, 400, 0.05, seed=3) if desk else ForwardConfig(333, 256, 10000, 0.05, seed=3)
            return cls(kind, PriorConfig(1.0, 0.05), fwd, OptimizerBlock(max_iter=300, gtol=1e-5),
                       desk_scale=desk)
        if kind == "pde":
            fwd = ForwardConfig(47, 23, 100, 0.001, seed=5) if desk else ForwardConfig(223, 128, 625, 0.001, seed=5)
            prior = PriorConfig(1.0, 0.1, initial="improper", sigma0=None)
            return cls(kind, prior, fwd, OptimizerBlock(max_iter=300, gtol=1e-6, lower=1e-5, upper=1e2),
                       desk_scale=desk)
        raise ConfigError(f"unknown experiment kind {kind!r}")

    def validate(self) -> "ExperimentConfig":
        p, f, o = self.prior, self.forward, self.optimizer
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if p.mode not in MODES:
            raise ConfigError(f"prior.mode must be one of {MODES}")
        if p.mode != "none" and self.kind != "deconv1d":
            raise ConfigError("hierarchical priors are only available in one dimension")
        for name in ("alpha", "alpha_s", "alpha_c"):
            a = getattr(p, name)
            if not HYBRID_ALPHA_MIN <= a <= HYBRID_ALPHA_MAX:
                raise ConfigError(f"prior.{name}={a} outside [{HYBRID_ALPHA_MIN}, {HYBRID_ALPHA_MAX}]")
        for name in ("sigma", "sigma_s", "sigma_c"):
            if not getattr(p, name) > 0:
                raise ConfigError(f"prior.{name} must be positive")
        if p.initial not in ("stable", "improper"):
            raise ConfigError("prior.initial must be 'stable' or 'improper'")
        if p.sigma0 is not None and not p.sigma0 > 0:
            raise ConfigError("prior.sigma0 must be positive or null")
        if min(f.truth_size, f.recon_size) < 2 or f.n_obs < 1:
            raise ConfigError("grid sizes must be at least 2 and n_obs at least 1")
        if self.kind == "deconv1d" and f.n_obs > f.recon_size:
            raise ConfigError("forward.n_obs cannot exceed forward.recon_size")
        if self.kind == "pde" and f.n_obs > f.recon_size ** 2:
            raise ConfigError("forward.n_obs cannot exceed the number of reconstruction nodes")
        if not f.noise_std > 0:
            raise ConfigError("forward.noise_std must be positive")
        if f.averaging not in ("harmonic", "arithmetic"):
            raise ConfigError("forward.averaging must be 'harmonic' or 'arithmetic'")
        if o.memory < 1 or o.max_iter < 1 or o.n_starts < 1 or not o.gtol > 0:
            raise ConfigError("optimizer settings must be positive")
        if o.lower is not None and o.upper is not None and not o.lower < o.upper:
            raise ConfigError("optimizer.lower must lie below optimizer.upper")
        for a in self.sweep.alpha:
            if not HYBRID_ALPHA_MIN <= a <= HYBRID_ALPHA_MAX:
                raise ConfigError(f"sweep alpha {a} out of range")
        if any(not s > 0 for s in self.sweep.sigma):
            raise ConfigError("sweep sigmas must be positive")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping")
        data = dict(data)
        kind = data.get("kind", "deconv1d")
        base = cls.default(kind, bool(data.get("desk_scale", True))) if kind in KINDS else cls(kind)
        blocks = {"prior": PriorConfig, "forward": ForwardConfig,
                  "optimizer": OptimizerBlock, "sweep": SweepBlock}
        kwargs = {}
        for key, value in data.items():
            if key in blocks:
                kwargs[key] = _block(blocks[key], getattr(base, key), value, key)
            elif key in ("kind", "output_dir", "desk_scale"):
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown configuration key {key!r}")
        return dataclasses.replace(base, **kwargs).validate()

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data or {})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file {path} not found")
        return cls.loads(path.read_text())

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())


def _block(cls, default, value, name):
    if value is None:
        return default
    if not isinstance(value, dict):
        raise ConfigError(f"{name} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    try:
        return dataclasses.replace(default, **value)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
