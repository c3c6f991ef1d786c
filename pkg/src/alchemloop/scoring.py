"""Standard-score objectives and the chemical-constraint indicator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from alchemloop.errors import NonpositiveStd
from alchemloop.molgraph import FeatureStats, Molecule, featurize_many, is_chon, net_formal_charge

STABILITY_THRESHOLD = 0.5


@dataclass(frozen=True)
class PropertyStats:
    """Seed-dataset means and standard deviations, frozen for a run."""

    mean_rho: float
    std_rho: float
    mean_hof: float
    std_hof: float

    def __post_init__(self):
        if not (self.std_rho > 0 and self.std_hof > 0):
            raise NonpositiveStd("property standard deviations must be positive")

    @classmethod
    def from_values(cls, rho: Sequence[float], hof: Sequence[float]):
        rho, hof = np.asarray(rho, dtype=float), np.asarray(hof, dtype=float)
        return cls(float(rho.mean()), float(rho.std()), float(hof.mean()), float(hof.std()))

    def z_rho(self, rho):
        return zscore(rho, self.mean_rho, self.std_rho)

    def z_hof(self, hof):
        return zscore(hof, self.mean_hof, self.std_hof)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def zscore(value, mean: float, std: float):
    """(value - mean) / std.

    Raises
    ------
    NonpositiveStd
    """
    if not std > 0:
        raise NonpositiveStd(f"standard deviation must be positive, got {std}")
    return (value - mean) / std


def multi_property_score(z_hof, z_rho):
    """Sum of the two standard scores."""
    return z_hof + z_rho


def sigmoid(z):
    """Logistic function, evaluated without cancellation in either tail."""
    if isinstance(z, np.ndarray):
        e = np.exp(-np.abs(z))
        return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def oracle_score(rho: float, hof: float, stats: PropertyStats) -> float:
    """Multi-property score of oracle (true) property values."""
    return multi_property_score(stats.z_hof(hof), stats.z_rho(rho))


def constraint_indicator(m: Molecule, stability_model=None, feature_stats: FeatureStats | None = None,
                         threshold: float = STABILITY_THRESHOLD) -> int:
    """1 iff the molecule is CHON-only, neutral, and (with a model) predicted stable."""
    if not is_chon(m) or net_formal_charge(m) != 0:
        return 0
    if stability_model is None:
        return 1
    p = stability_model.predict(featurize_many([m], feature_stats))[0]
    return int(p >= threshold)


def objective_from_predictions(pred_rho, pred_hof, stats: PropertyStats, x=1):
    """X * (sigmoid(z_hof) + sigmoid(z_rho)) for predicted property values."""
    return x * (sigmoid(stats.z_hof(pred_hof)) + sigmoid(stats.z_rho(pred_rho)))


def full_objective(m: Molecule, models, stats: PropertyStats, feature_stats: FeatureStats,
                   stability_model=None, threshold: float = STABILITY_THRESHOLD) -> float:
    """Constrained objective of one molecule under the surrogate models.

    ``models`` is the ``(density_model, hof_model)`` pair.  The value lies in
    [0, 2].
    """
    return float(batch_full_objective([m], models, stats, feature_stats, stability_model, threshold)[0])


def batch_full_objective(molecules: Sequence[Molecule], models, stats: PropertyStats,
                         feature_stats: FeatureStats, stability_model=None,
                         threshold: float = STABILITY_THRESHOLD) -> np.ndarray:
    """Vectorized :func:`full_objective` over a list of molecules."""
    if not molecules:
        return np.zeros(0)
    X = featurize_many(list(molecules), feature_stats)
    rho_model, hof_model = models
    pred_rho = np.atleast_1d(rho_model.predict(X))
    pred_hof = np.atleast_1d(hof_model.predict(X))
    x = np.array([1.0 if is_chon(m) and net_formal_charge(m) == 0 else 0.0 for m in molecules])
    if stability_model is not None:
        x *= np.atleast_1d(stability_model.predict(X)) >= threshold
    return objective_from_predictions(pred_rho, pred_hof, stats, x)
