"""Run configuration (YAML or JSON) and run manifests."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dfield
from pathlib import Path

import numpy as np
import yaml

from .currents import Direction, FieldProfile
from .ensemble import EnsembleSpec
from .lattice import DisorderSpec
from .operators import CombesThomasParams

DEFAULT_TOLERANCES = {
    "quad_tol": 1e-9,          # max-entry change of K between node doublings
    "max_nodes": 512,
    "trace_tol": 1e-5,         # relative gap F vs finite-difference J''(0)
    "degenerate": 1e-8,        # curvature below which the quadratic fit is skipped
    "t_max": 0.2,              # smallness bound on T in the floor check
    "oracle_tol": 1e-9,
    "margin_eps": 1e-8,
}


class ConfigParseError(ValueError):
    """The configuration file or an override could not be parsed."""


def _number(value):
    """YAML 1.1 reads ``1e-9`` as a string; accept it as a float."""
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


@dataclass
class RunConfig:
    d: int = 1
    L: int = 8
    L_schedule: list = dfield(default_factory=lambda: [4, 8])
    margin: int | None = None
    beta: float = 1.0
    lam: float = 1.0
    theta: float = 0.0
    eta: float = 1.0
    mu: float = 1.0
    disorder: dict = dfield(default_factory=lambda: DisorderSpec().to_dict())
    field: dict = dfield(default_factory=lambda: FieldProfile().to_dict())
    w: list = dfield(default_factory=lambda: [1.0])
    s_grid: dict = dfield(default_factory=lambda: {"n": 81, "s_max": 2.0})
    x_grid: dict = dfield(default_factory=lambda: {"n": 201})
    ensemble: dict = dfield(default_factory=lambda: {"n_samples": 10, "base_seed": 0,
                                                    "quantities": ["J1"]})
    oracle: dict = dfield(default_factory=lambda: {"draws": 50, "seed": 0})
    tolerances: dict = dfield(default_factory=dict)

    def __post_init__(self):
        # canonical form: nested sections carry every field explicitly
        self.disorder = DisorderSpec.from_dict(self.disorder).to_dict()
        self.field = FieldProfile(**self.field).to_dict()
        self.w = [float(v) for v in self.w]
        self.L_schedule = [int(v) for v in self.L_schedule]
        self.tolerances = {k: _number(v) for k, v in self.tolerances.items()}
        self.validate()

    def validate(self) -> None:
        if self.d < 1 or self.L < 0:
            raise ValueError("d must be >= 1 and L >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lam < 0 or self.theta < 0:
            raise ValueError("lambda and theta must be non-negative")
        if len(self.w) != self.d or len(self.field.get("amplitude", [])) != self.d:
            raise ValueError("direction and field amplitude must have d components")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigParseError(f"unknown tolerance names {sorted(unknown)}")
        self.disorder_spec()
        self.field_profile()
        self.direction()

    # typed views -----------------------------------------------------------
    def tol(self, name: str):
        return self.tolerances.get(name, DEFAULT_TOLERANCES[name])

    def disorder_spec(self) -> DisorderSpec:
        return DisorderSpec.from_dict(self.disorder)

    def field_profile(self) -> FieldProfile:
        return FieldProfile(**self.field)

    def direction(self) -> Direction:
        return Direction.of(self.w)

    def ct_params(self) -> CombesThomasParams:
        return CombesThomasParams(self.eta, self.mu, self.d, self.theta)

    def s_values(self) -> np.ndarray:
        from .ldp import default_s_grid
        return default_s_grid(int(self.s_grid["n"]), float(self.s_grid["s_max"]))

    def ensemble_spec(self) -> EnsembleSpec:
        return EnsembleSpec(n_samples=int(self.ensemble["n_samples"]),
                            base_seed=int(self.ensemble["base_seed"]),
                            L_schedule=tuple(self.L_schedule), d=self.d, beta=self.beta,
                            lam=self.lam, theta=self.theta, disorder=self.disorder_spec(),
                            field=self.field_profile(), w=self.direction(),
                            margin=self.margin)

    # serialisation ---------------------------------------------------------
    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data or {})
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigParseError(f"unknown configuration keys {sorted(unknown)}")
        base = cls().to_dict()
        for key, val in data.items():
            if isinstance(base.get(key), dict) and isinstance(val, dict):
                base[key].update(val)
            else:
                base[key] = val
        return cls(**base)

    def dumps(self, fmt: str = "yaml") -> str:
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, sort_keys=True)
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)    # JSON is a subset of YAML
        except yaml.YAMLError as exc:
            raise ConfigParseError(f"cannot parse configuration: {exc}") from exc
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigParseError("configuration must be a mapping")
        if "config" in data and "outputs" in data:   # a run manifest
            data = data["config"]
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigParseError(f"cannot read configuration {path}: {exc}") from exc
        return cls.loads(text)

    def with_overrides(self, assignments) -> "RunConfig":
        """Apply ``key=value`` strings; dotted keys reach nested mappings."""
        data = self.to_dict()
        for item in assignments or ():
            key, sep, raw = item.partition("=")
            if not sep or not key:
                raise ConfigParseError(f"override {item!r} is not of the form key=value")
            try:
                value = _number(yaml.safe_load(raw))
            except yaml.YAMLError as exc:
                raise ConfigParseError(f"cannot parse override value {raw!r}") from exc
            parts = key.split(".")
            node = data
            for p in parts[:-1]:
                if not isinstance(node.get(p), dict):
                    raise ConfigParseError(f"override key {key!r} does not name a mapping")
                node = node[p]
            if len(parts) == 1 and parts[0] not in data:
                raise ConfigParseError(f"unknown configuration key {key!r}")
            node[parts[-1]] = value
        return RunConfig.from_dict(data)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    version: str
    seeds: list = dfield(default_factory=list)
    wall_clock: float = 0.0
    diagnostics: dict = dfield(default_factory=dict)
    outputs: dict = dfield(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(**data)
