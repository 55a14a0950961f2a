"""Experiment configuration stored as a flat ``key = value`` text file."""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "dump_config"]


class ConfigError(ValueError):
    """Malformed configuration text or invalid values."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by the command-line tools and the acceptance suite.

    Every key has a fixed type taken from its default. Floats are written
    with ``repr`` so reading a dumped file gives back identical values.
    """

    backend: str = "mesh"
    n: int = 3
    level: int = 4
    order: int = 3
    resolution: int = 32
    seed: int = 0
    families: str = "moebius,harmonic,power,bubble"
    corpus_size: int = 200
    amplitudes: str = "0.01,0.1,0.5"
    volume_floor: float = 1e-6
    degree_tol: float = 0.05
    grad_tol: float = 1e-8
    proj_tol: float = 1e-10
    kappa: float = 0.5
    k: int = 7
    fraction: float = 0.5
    n_starts: int = 8
    delta: float = 0.1
    epsilon: float = 0.05
    theta: float = 0.1
    out: str = "results"

    def __post_init__(self):
        for name in ("volume_floor", "degree_tol", "grad_tol", "proj_tol", "kappa", "delta", "epsilon", "theta"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.backend not in ("mesh", "chart"):
            raise ConfigError("backend must be 'mesh' or 'chart'")
        if self.n < 3:
            raise ConfigError("n must be at least 3")
        if not 0 < self.fraction <= 0.5:
            raise ConfigError("fraction must lie in (0, 1/2]")
        if self.kappa >= 1:
            raise ConfigError("kappa must be below 1")

    @property
    def amplitude_list(self):
        return [float(a) for a in self.amplitudes.split(",") if a.strip()]

    @property
    def family_list(self):
        return [f.strip() for f in self.families.split(",") if f.strip()]

    def replace(self, **changes):
        data = asdict(self)
        data.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig(**data)

    def dumps(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self):
        """SHA-256 of the serialized configuration."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    @classmethod
    def loads(cls, text):
        types = {f.name: type(f.default) for f in fields(cls)}
        data = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            try:
                data[key] = types[key](value)
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from exc
        return cls(**data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.loads(fh.read())


def dump_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config.dumps())
