"""Experiment configuration: a flat JSON document with a schema version."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .graph_core import TopologySpec
from .spectral import SIGMA2_CONVENTIONS

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologySpec | None = None
    graph_file: str | None = None
    topology_seed: int | None = None
    seed: int = 0
    t_end: float = 10.0
    dt: float = 0.01
    record_every: int = 1
    sigma2: str = "full"
    sigma2_value: float | None = None
    epsilon: float | None = None
    connectivity: str = "aggregate"
    x0: tuple[float, ...] | None = None
    out_dir: str = "out"
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        if (self.topology is None) == (self.graph_file is None):
            raise ConfigError("exactly one of 'topology' and 'graph_file' must be given")
        if not (self.t_end > self.dt > 0):
            raise ConfigError(f"need t_end > dt > 0, got t_end={self.t_end}, dt={self.dt}")
        if self.sigma2 not in SIGMA2_CONVENTIONS:
            raise ConfigError(f"sigma2 must be one of {SIGMA2_CONVENTIONS}, got {self.sigma2!r}")
        if self.connectivity not in ("aggregate", "full"):
            raise ConfigError(f"connectivity must be 'aggregate' or 'full', got {self.connectivity!r}")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.seed < 0 or (self.topology_seed is not None and self.topology_seed < 0):
            raise ConfigError("seeds must be non-negative")

    @property
    def graph_seed(self) -> int:
        return self.seed if self.topology_seed is None else self.topology_seed

    @property
    def graph_path(self) -> Path | None:
        if self.graph_file is None:
            return None
        p = Path(self.graph_file)
        return p if p.is_absolute() else self.base_dir / p

    def with_overrides(self, *, seed=None, out_dir=None, sigma2=None) -> "ExperimentConfig":
        changes = {}
        if seed is not None:
            changes["seed"] = int(seed)
        if out_dir is not None:
            changes["out_dir"] = str(out_dir)
        if sigma2 is not None:
            changes["sigma2"] = sigma2
        return replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "t_end": self.t_end,
            "dt": self.dt,
            "record_every": self.record_every,
            "sigma2": self.sigma2,
            "connectivity": self.connectivity,
            "out_dir": self.out_dir,
        }
        if self.topology is not None:
            d["topology"] = self.topology.to_dict()
        if self.graph_file is not None:
            d["graph_file"] = self.graph_file
        for key in ("topology_seed", "sigma2_value", "epsilon"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.x0 is not None:
            d["x0"] = list(self.x0)
        return d


_KNOWN = {
    "schema_version", "topology", "graph_file", "topology_seed", "seed", "t_end", "dt",
    "record_every", "sigma2", "sigma2_value", "epsilon", "connectivity", "x0", "out_dir",
}


def from_dict(d: dict, base_dir: Path | str = ".") -> ExperimentConfig:
    if d.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {d.get('schema_version')!r}; expected {SCHEMA_VERSION}")
    unknown = set(d) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        topology = TopologySpec.from_dict(d["topology"]) if "topology" in d else None
        return ExperimentConfig(
            topology=topology,
            graph_file=d.get("graph_file"),
            topology_seed=d.get("topology_seed"),
            seed=int(d.get("seed", 0)),
            t_end=float(d.get("t_end", 10.0)),
            dt=float(d.get("dt", 0.01)),
            record_every=int(d.get("record_every", 1)),
            sigma2=d.get("sigma2", "full"),
            sigma2_value=None if d.get("sigma2_value") is None else float(d["sigma2_value"]),
            epsilon=None if d.get("epsilon") is None else float(d["epsilon"]),
            connectivity=d.get("connectivity", "aggregate"),
            x0=None if d.get("x0") is None else tuple(float(v) for v in d["x0"]),
            out_dir=str(d.get("out_dir", "out")),
            base_dir=Path(base_dir),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad config: {exc}") from exc


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(d, base_dir=path.parent)
