"""Run configuration: ``key = value`` files with ``#`` comments."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

__all__ = ["ConfigError", "RunConfig", "parse_config", "parse_config_text", "RHO0"]

RHO0 = (3 - 2 * math.sqrt(2)) / 100


class ConfigError(ValueError):
    """Invalid configuration; carries the offending line number when known."""

    def __init__(self, msg: str, line: int | None = None, keys: tuple[str, ...] = ()):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.msg, self.line, self.keys = msg, line, keys


@dataclass(frozen=True)
class RunConfig:
    """Resolved run parameters.

    ``r = r_factor * rho0``, ``mu0 = mu0_factor * r`` and
    ``mu_f = mu_f_factor * r`` with ``rho0 = (3 - 2 sqrt 2)/100``.
    """

    sigma: float = 3.0
    r_factor: float = 200.0
    mu0_factor: float = 2.0
    eps0: float = 1e-6
    n_trunc: int = 6
    d_trunc: int = 6
    s_max: int = 3
    seed: int = 0
    gamma_budget: tuple[int, int] = (3, 2)
    mu_f_factor: float = 2.5
    dt: float = 1e-2
    T: float = 100.0
    out_dir: str = "out"

    def __post_init__(self):
        if not self.sigma > 2:
            raise ConfigError("sigma must exceed 2", keys=("sigma",))
        if not 0 <= self.eps0 < 1:
            raise ConfigError("eps0 must lie in [0, 1)", keys=("eps0",))
        if self.n_trunc < 2:
            raise ConfigError("n_trunc must be at least 2", keys=("n_trunc",))
        if self.s_max < 1:
            raise ConfigError("s_max must be at least 1", keys=("s_max",))
        if not 0 < self.d_trunc <= 64:
            raise ConfigError("d_trunc must lie in [1, 64]", keys=("d_trunc",))
        if self.r_factor <= 0 or self.mu0_factor <= 0 or self.mu_f_factor <= 0:
            raise ConfigError("r_factor, mu0_factor and mu_f_factor must be positive", keys=("r_factor", "mu0_factor", "mu_f_factor"))
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError("dt and T must be positive", keys=("dt", "T"))
        sb, sz = self.gamma_budget
        if sb < 0 or sz < 1:
            raise ConfigError("gamma_budget needs support >= 0 and size >= 1", keys=("gamma_budget",))

    @property
    def rho0(self) -> float:
        return RHO0

    @property
    def r(self) -> float:
        return self.r_factor * RHO0

    @property
    def mu0(self) -> float:
        return self.mu0_factor * self.r

    @property
    def mu_f(self) -> float:
        return self.mu_f_factor * self.r

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gamma_budget"] = list(self.gamma_budget)
        return d

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "gamma_budget":
                v = f"{v[0]},{v[1]}"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "gamma_budget" in d:
            d["gamma_budget"] = tuple(d["gamma_budget"])
        return cls(**d)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(name: str, raw: str, line: int):
    t = _TYPES[name]
    try:
        if name == "gamma_budget":
            a, b = raw.split(",")
            return (int(a), int(b))
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {name}", line) from None


def parse_config_text(text: str) -> RunConfig:
    """Parse config text; unknown keys and malformed lines are rejected."""
    vals: dict = {}
    lines: dict[str, int] = {}
    for i, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", i)
        key, raw = (p.strip() for p in body.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"unknown key {key!r}", i)
        if key in vals:
            raise ConfigError(f"duplicate key {key!r}", i)
        vals[key] = _convert(key, raw, i)
        lines[key] = i
    try:
        return RunConfig(**vals)
    except ConfigError as e:
        at = [lines[k] for k in e.keys if k in lines]
        raise ConfigError(e.msg, min(at) if at else None, e.keys) from None


def parse_config(path: str | Path | None) -> RunConfig:
    """Load a ``key = value`` file, or the ``config`` block of a run manifest (``.json``)."""
    if path is None:
        return RunConfig()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            return RunConfig.from_dict(json.loads(text)["config"])
        except (KeyError, TypeError, json.JSONDecodeError) as e:
            raise ConfigError(f"not a run manifest: {e}") from None
    return parse_config_text(text)
