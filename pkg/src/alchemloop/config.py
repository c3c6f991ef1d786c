"""Campaign configuration: one JSON document describing a whole run.

Parsing is strict.  Unknown keys, wrong types and out-of-range values all
raise :class:`~alchemloop.errors.ConfigError` naming the offending field,
and ``CampaignConfig.from_dict(c.to_dict()) == c`` for every valid ``c``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from alchemloop.dataset import SeedSpec
from alchemloop.errors import ConfigError
from alchemloop.generator import GAConfig
from alchemloop.loop import IterationPlan, LoopSettings, default_plans
from alchemloop.oracle import ExternalOracle, SyntheticOracle, SyntheticOracleConfig
from alchemloop.scoring import STABILITY_THRESHOLD
from alchemloop.surrogate import TrainConfig


def _build(cls, data, where: str, convert=None):
    """Instantiate a flat dataclass from ``data``, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = dict(data)
    for key, fn in (convert or {}).items():
        if key in kwargs:
            kwargs[key] = fn(kwargs[key])
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{where}: {err}") from err


def _check_types(obj, where: str):
    # dataclass annotations are strings under postponed evaluation, so check
    # against the default's type, which is enough for the scalar fields used here
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if f.default is dataclasses.MISSING or f.default is None or value is None:
            continue
        want = type(f.default)
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            continue
        if want is not float and isinstance(value, bool) != (want is bool):
            raise ConfigError(f"{where}.{f.name}: expected {want.__name__}, got {type(value).__name__}")
        if not isinstance(value, want):
            raise ConfigError(f"{where}.{f.name}: expected {want.__name__}, got {type(value).__name__}")


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to reproduce a campaign.

    ``seed_path`` (a SMILES-lines file) takes precedence over ``seed_spec``.
    ``oracle`` is ``"synthetic"`` or ``"external:<command>"``.
    """

    master_seed: int = 0
    seed_path: str | None = None
    seed_spec: SeedSpec = field(default_factory=SeedSpec)
    ga: GAConfig = field(default_factory=lambda: GAConfig(generations=40, population_size=200))
    plans: tuple[IterationPlan, ...] = field(default_factory=lambda: tuple(default_plans()))
    train: TrainConfig = field(default_factory=TrainConfig)
    oracle: str = "synthetic"
    synthetic_oracle: SyntheticOracleConfig = field(default_factory=SyntheticOracleConfig)
    holdout_fraction: float = 0.1
    stability_threshold: float = STABILITY_THRESHOLD
    out_dir: str | None = None

    def __post_init__(self):
        if not isinstance(self.master_seed, int) or isinstance(self.master_seed, bool) or self.master_seed < 0:
            raise ConfigError("master_seed must be a non-negative integer")
        if not (self.oracle == "synthetic" or (self.oracle.startswith("external:") and len(self.oracle) > 9)):
            raise ConfigError("oracle must be 'synthetic' or 'external:<command>'")
        indices = [p.index for p in self.plans]
        if indices != sorted(set(indices)):
            raise ConfigError("plan indices must be strictly increasing")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        if not 0.0 < self.stability_threshold < 1.0:
            raise ConfigError("stability_threshold must lie in (0, 1)")

    def settings(self) -> LoopSettings:
        return LoopSettings(master_seed=self.master_seed, ga=self.ga, train=self.train,
                            holdout_fraction=self.holdout_fraction,
                            stability_threshold=self.stability_threshold)

    def make_oracle(self):
        if self.oracle == "synthetic":
            return SyntheticOracle(self.synthetic_oracle)
        return ExternalOracle(self.oracle[len("external:"):])

    def to_dict(self) -> dict:
        return {
            "master_seed": self.master_seed,
            "seed_path": self.seed_path,
            "seed_spec": dataclasses.asdict(self.seed_spec),
            "ga": self.ga.to_dict(),
            "plans": [p.to_dict() for p in self.plans],
            "train": self.train.to_dict(),
            "oracle": self.oracle,
            "synthetic_oracle": self.synthetic_oracle.to_dict(),
            "holdout_fraction": self.holdout_fraction,
            "stability_threshold": self.stability_threshold,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d) -> "CampaignConfig":
        if not isinstance(d, dict):
            raise ConfigError("config: expected a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        kw = dict(d)
        if "seed_spec" in kw:
            kw["seed_spec"] = _build(SeedSpec, kw["seed_spec"], "seed_spec")
            _check_types(kw["seed_spec"], "seed_spec")
        if "ga" in kw:
            kw["ga"] = _build(GAConfig, kw["ga"], "ga")
            _check_types(kw["ga"], "ga")
        if "train" in kw:
            kw["train"] = _build(TrainConfig, kw["train"], "train",
                                 {"fractions": lambda v: tuple(v) if isinstance(v, list) else v})
        if "plans" in kw:
            if not isinstance(kw["plans"], list) or not kw["plans"]:
                raise ConfigError("plans: expected a non-empty list")
            kw["plans"] = tuple(_build(IterationPlan, p, f"plans[{i}]") for i, p in enumerate(kw["plans"]))
            for i, p in enumerate(kw["plans"]):
                _check_types(p, f"plans[{i}]")
        if "synthetic_oracle" in kw:
            kw["synthetic_oracle"] = _build(
                SyntheticOracleConfig, kw["synthetic_oracle"], "synthetic_oracle",
                {"ring_strain": lambda v: {int(k): float(x) for k, x in v.items()}},
            )
        for key in ("seed_path", "out_dir", "oracle"):
            if kw.get(key) is not None and not isinstance(kw[key], str):
                raise ConfigError(f"{key}: expected a string")
        for key in ("holdout_fraction", "stability_threshold"):
            if key in kw and (isinstance(kw[key], bool) or not isinstance(kw[key], (int, float))):
                raise ConfigError(f"{key}: expected a number")
        try:
            return cls(**kw)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"config: {err}") from err

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CampaignConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"config is not valid JSON: {err}") from err
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {p}: {err.strerror or err}") from err
        try:
            return cls.from_json(text)
        except ConfigError as err:
            raise ConfigError(f"{p}: {err}") from err
