"""Run configuration: one JSON file drives the whole pipeline.

Scalar fields can be overridden from the command line; the artifacts
directory can also be overridden with the CASCADEKIT_ARTIFACTS environment
variable. Defaults mirror the usual experiment setup: 5 folds, 10 bins, AUC
bounds {0.2, 0.4, 1.0}, 1000 bootstrap resamples, cost ratio 70/13.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields as dc_fields

from .deferral import METHODS
from .errors import UsageError
from .forest import ForestConfig
from .synth import WorldConfig

ARTIFACTS_ENV = "CASCADEKIT_ARTIFACTS"

# stable sub-seed labels so results do not depend on method-list order
SEED_FOLDS = 1
SEED_PROXY = 2
SEED_METHOD = {m: 10 + i for i, m in enumerate(METHODS)}
SEED_BOOTSTRAP = 30
SEED_SWEEP_POOL = 40
SEED_SCORER = 50
SEED_CALIBRATION = 60


@dataclass
class BootstrapConfig:
    n_resamples: int = 1000
    level: float = 0.95


@dataclass
class ProxyConfig:
    mode: str = "binned-accuracy"  # | "individual-probability"
    subsample_fraction: float = 1.0
    cross_fit: bool = True  # per-fold proxies; False = one in-sample proxy


@dataclass
class RunConfig:
    records: str = "records.jsonl"
    artifacts_dir: str = "artifacts"
    reports_dir: str = "reports"
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    k_folds: int = 5
    n_bins: int = 10
    entbin_mode: str = "width"
    cost_ratio: float = 70.0 / 13.0
    auc_uppers: tuple[float, ...] = (0.2, 0.4, 1.0)
    rate_match_points: tuple[float, ...] = (0.2, 0.4)
    sweep_fractions: tuple[float, ...] = (0.25, 0.5, 1.0)
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    proxy: ProxyConfig = field(default_factory=ProxyConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    proxy_forest: ForestConfig | None = None  # defaults to `forest`
    world: WorldConfig | None = None  # required by `gen`

    def validate(self) -> None:
        for m in self.methods:
            if m not in METHODS:
                raise UsageError(f"unknown method {m!r}; valid: {', '.join(METHODS)}")
        if not self.methods:
            raise UsageError("methods list is empty")
        for u in self.auc_uppers:
            if not (0.0 < u <= 1.0):
                raise UsageError(f"auc upper bound must lie in (0, 1], got {u}")
        for f in self.sweep_fractions:
            if not (0.0 < f <= 1.0):
                raise UsageError(f"sweep fraction must lie in (0, 1], got {f}")
        if self.k_folds < 2:
            raise UsageError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.n_bins < 1:
            raise UsageError(f"n_bins must be >= 1, got {self.n_bins}")
        if self.cost_ratio <= 0:
            raise UsageError(f"cost_ratio must be positive, got {self.cost_ratio}")
        if self.entbin_mode not in ("width", "mass"):
            raise UsageError(f"entbin_mode must be 'width' or 'mass', got {self.entbin_mode!r}")
        if self.proxy.mode not in ("binned-accuracy", "individual-probability"):
            raise UsageError(f"unknown proxy mode {self.proxy.mode!r}")
        if not (0.0 < self.proxy.subsample_fraction <= 1.0):
            raise UsageError("proxy subsample_fraction must lie in (0, 1]")

    def effective_proxy_forest(self) -> ForestConfig:
        return self.proxy_forest if self.proxy_forest is not None else self.forest


def _build(cls, obj: dict, where: str):
    names = {f.name for f in dc_fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise UsageError(f"unknown config keys in {where}: {', '.join(sorted(unknown))}")
    return cls(**obj)


def config_from_dict(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise UsageError("config root must be a JSON object")
    obj = dict(obj)
    nested = {}
    if "bootstrap" in obj:
        nested["bootstrap"] = _build(BootstrapConfig, obj.pop("bootstrap"), "bootstrap")
    if "proxy" in obj:
        nested["proxy"] = _build(ProxyConfig, obj.pop("proxy"), "proxy")
    if "forest" in obj:
        nested["forest"] = _build(ForestConfig, obj.pop("forest"), "forest")
    if obj.get("proxy_forest") is not None:
        nested["proxy_forest"] = _build(ForestConfig, obj.pop("proxy_forest"), "proxy_forest")
    elif "proxy_forest" in obj:
        obj.pop("proxy_forest")
    if obj.get("world") is not None:
        nested["world"] = _build(WorldConfig, obj.pop("world"), "world")
    elif "world" in obj:
        obj.pop("world")
    for key in ("methods", "auc_uppers", "rate_match_points", "sweep_fractions"):
        if key in obj:
            obj[key] = tuple(obj[key])
    cfg = _build(RunConfig, {**obj, **nested}, "config")
    env_dir = os.environ.get(ARTIFACTS_ENV)
    if env_dir:
        cfg.artifacts_dir = env_dir
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}") from e
    return config_from_dict(obj)
