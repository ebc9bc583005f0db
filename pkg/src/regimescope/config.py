"""Flat ``key = value`` run configuration with a fixed schema.

Blank lines and lines starting with ``#`` or ``;`` are ignored.  Unknown
keys are rejected.  Every key has a default, so an empty file is valid.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass

from .homology import EUCLIDEAN, TOROIDAL
from .motion import SimConfig


class ConfigError(ValueError):
    """Bad configuration key or value."""


@dataclass(frozen=True)
class RunConfig:
    # simulation
    num_particles: int = 200
    box_side: float = 20.0
    dt: float = 0.02
    num_steps: int = 50000
    alpha: float = 0.24
    beta: float = 0.009
    l_attract: float = 0.5
    l_repel: float = 14.0
    l_max: float = 1.5
    tumble_period: int = 2500
    snapshot_stride: int = 50
    runs: int = 1
    # homology and landscapes
    eps_max: float = 4.0
    metric: str = EUCLIDEAN
    dim: int = 1
    grid: int = 2001
    m_prime: int = 5
    noise_floor: float = 0.0
    # testing and detection
    perms: int = 1000
    alpha_level: float = 0.05
    window: int = 10
    time_index: int = -1
    # observed data
    target_density: float = 0.5
    null_runs: int = 30
    null_alpha: float = 0.09
    null_beta: float = 0.024
    steps_per_frame: int = 50
    # run control
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        try:
            self.sim_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        checks = [
            (self.eps_max > 0, "eps_max must be > 0"),
            (self.metric in (EUCLIDEAN, TOROIDAL), f"metric must be {EUCLIDEAN} or {TOROIDAL}"),
            (self.dim in (0, 1), "dim must be 0 or 1"),
            (self.grid >= 2, "grid must be >= 2"),
            (self.m_prime >= 1, "m_prime must be >= 1"),
            (self.noise_floor >= 0, "noise_floor must be >= 0"),
            (self.perms >= 100, "perms must be >= 100"),
            (0 < self.alpha_level < 1, "alpha_level must lie in (0, 1)"),
            (self.window >= 1, "window must be >= 1"),
            (self.runs >= 1, "runs must be >= 1"),
            (self.target_density > 0, "target_density must be > 0"),
            (self.null_runs >= 2, "null_runs must be >= 2"),
            (self.steps_per_frame >= 1, "steps_per_frame must be >= 1"),
            (self.threads >= 1, "threads must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)

    def sim_config(self, **changes) -> SimConfig:
        names = {f.name for f in dataclasses.fields(SimConfig)}
        kw = {k: v for k, v in dataclasses.asdict(self).items() if k in names}
        kw.update(changes)
        return SimConfig(**kw)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, *extra: str) -> str:
        """Short stable hash of the settings plus any extra strings."""
        blob = json.dumps([self.as_dict(), list(extra)], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:10]


FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_CASTS = {"int": int, "float": float, "str": str}


def coerce(key: str, text: str):
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    cast = _CASTS[FIELDS[key]]
    try:
        if cast is int:
            return int(text)
        return cast(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {text!r} as {FIELDS[key]}") from None


def parse_config(text: str, source: str = "<config>") -> dict:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return {key: coerce(key, value.strip()) for key, value in parser["run"].items()}


def load_config(path=None, **overrides) -> RunConfig:
    """Read ``path`` (if any) and apply non-None ``overrides`` on top."""
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                values = parse_config(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for key, value in overrides.items():
        if value is not None:
            if key not in FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = value
    return RunConfig(**values)


def schema() -> str:
    """One ``key = default  # type`` line per accepted key."""
    defaults = RunConfig().as_dict()
    return "\n".join(f"{k} = {defaults[k]}  # {FIELDS[k]}" for k in FIELDS)
