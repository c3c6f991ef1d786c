"""Active-learning orchestration: generate, select, label, retrain, repeat.

A campaign starts from an oracle-labeled seed dataset and a first set of
surrogates (``MPNN_0``).  Each iteration runs the GA against the current
surrogates, picks archive-novel candidates for the oracle, labels them, and
(optionally) retrains, producing ``MPNN_x`` after iteration ``x``.

Everything observable is written to a JSON-lines run log; reports are
derived from that log alone.  Random streams are derived per phase from the
master seed (see :mod:`alchemloop.rng`).
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from alchemloop import generator
from alchemloop.dataset import LabeledMolecule
from alchemloop.errors import CorruptLog, InsufficientData
from alchemloop.generator import GAConfig
from alchemloop.molgraph import FeatureStats, Molecule, featurize_many, parse_smiles
from alchemloop.oracle import OracleResult
from alchemloop.rng import phase_int, phase_rng
from alchemloop.scoring import STABILITY_THRESHOLD, PropertyStats, batch_full_objective, oracle_score
from alchemloop.surrogate import SurrogateModel, TrainConfig, train

POLICIES = ("Random", "TopK")
LOG_VERSION = 1


@dataclass(frozen=True)
class IterationPlan:
    index: int
    oracle_budget: int
    selection_policy: str = "Random"
    use_stability_gate: bool = False
    retrain_after: bool = True

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("iteration index starts at 1")
        if self.oracle_budget < 0:
            raise ValueError("oracle_budget must be non-negative")
        if self.selection_policy not in POLICIES:
            raise ValueError(f"selection_policy must be one of {POLICIES}")

    def to_dict(self):
        return asdict(self)


def default_plans() -> list[IterationPlan]:
    """Desk-scale schedule: three random rounds, then a gated top-K round."""
    return [
        IterationPlan(1, 200, "Random"),
        IterationPlan(2, 200, "Random"),
        IterationPlan(3, 400, "Random"),
        IterationPlan(4, 200, "TopK", use_stability_gate=True),
    ]


@dataclass(frozen=True)
class LoopSettings:
    """Knobs of the orchestration that are not part of an iteration plan."""

    master_seed: int = 0
    ga: GAConfig = field(default_factory=lambda: GAConfig(generations=40, population_size=200))
    train: TrainConfig = field(default_factory=TrainConfig)
    holdout_fraction: float = 0.1
    stability_threshold: float = STABILITY_THRESHOLD
    feature_dim: int = 32

    def __post_init__(self):
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in [0, 1)")


@dataclass
class ModelSet:
    """Surrogates of one round: ``MPNN_x`` for ``x = version``."""

    version: int
    rho: SurrogateModel
    hof: SurrogateModel
    stability: SurrogateModel | None = None

    def to_dict(self):
        return {
            "version": self.version,
            "rho": self.rho.to_dict(),
            "hof": self.hof.to_dict(),
            "stability": self.stability.to_dict() if self.stability else None,
        }

    @classmethod
    def from_dict(cls, d):
        stab = SurrogateModel.from_dict(d["stability"]) if d["stability"] else None
        return cls(int(d["version"]), SurrogateModel.from_dict(d["rho"]),
                   SurrogateModel.from_dict(d["hof"]), stab)


@dataclass
class RunState:
    labeled: dict[str, LabeledMolecule]
    feature_stats: FeatureStats
    property_stats: PropertyStats
    models: dict[int, ModelSet]
    completed: int = 0
    snapshots: list[dict] = field(default_factory=list)

    @property
    def current(self) -> ModelSet:
        return self.models[max(self.models)]

    def seeds(self) -> list[LabeledMolecule]:
        return [l for l in self.labeled.values() if l.iteration == 0]

    def generated(self) -> list[LabeledMolecule]:
        return [l for l in self.labeled.values() if l.iteration > 0]

    def copy(self) -> "RunState":
        return RunState(dict(self.labeled), self.feature_stats, self.property_stats,
                        dict(self.models), self.completed, copy.deepcopy(self.snapshots))

    def to_dict(self):
        return {
            "labeled": [l.to_dict() for l in self.labeled.values()],
            "feature_stats": self.feature_stats.to_dict(),
            "property_stats": self.property_stats.to_dict(),
            "models": [self.models[k].to_dict() for k in sorted(self.models)],
            "completed": self.completed,
            "snapshots": self.snapshots,
        }

    @classmethod
    def from_dict(cls, d):
        labeled = {}
        for item in d["labeled"]:
            l = LabeledMolecule.from_dict(item)
            labeled[l.smiles] = l
        models = {m["version"]: ModelSet.from_dict(m) for m in d["models"]}
        return cls(labeled, FeatureStats.from_dict(d["feature_stats"]),
                   PropertyStats.from_dict(d["property_stats"]), models, int(d["completed"]),
                   list(d["snapshots"]))


# ---------------------------------------------------------------------------
# run log


class RunLog:
    """JSON-lines event sink.

    Events are buffered and only reach the file on :meth:`flush`, so a
    failed iteration can be discarded without leaving partial records.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self.events: list[dict] = []
        self._pending: list[dict] = []

    def emit(self, event: str, **fields):
        self._pending.append({"event": event, **fields})

    def flush(self):
        if self.path is not None and self._pending:
            with open(self.path, "a") as fh:
                for e in self._pending:
                    fh.write(json.dumps(e, sort_keys=True) + "\n")
        self.events.extend(self._pending)
        self._pending = []

    def discard(self):
        self._pending = []


def read_log(path) -> list[dict]:
    """Parse a run log; a malformed line raises :class:`CorruptLog` naming its number."""
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                e = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorruptLog(f"{path}: corrupted log line {lineno}: {err.msg}") from None
            if not isinstance(e, dict) or "event" not in e:
                raise CorruptLog(f"{path}: corrupted log line {lineno}: not an event object")
            events.append(e)
    return events


# ---------------------------------------------------------------------------
# training


def regression_training_set(state: RunState, version: int) -> list[LabeledMolecule]:
    """Stable seeds plus stable, non-holdout molecules of iterations 1..version."""
    return [
        l for l in state.labeled.values()
        if l.stable and not l.holdout and l.iteration <= version
    ]


def classifier_training_set(state: RunState, version: int) -> list[LabeledMolecule]:
    """All non-holdout generated molecules of iterations 1..version (seeds excluded)."""
    return [
        l for l in state.labeled.values()
        if 1 <= l.iteration <= version and not l.holdout
    ]


def _features(state: RunState, labeled: Sequence[LabeledMolecule]) -> np.ndarray:
    return featurize_many([l.molecule for l in labeled], state.feature_stats)


def train_models(state: RunState, version: int, settings: LoopSettings, log: RunLog | None = None,
                 previous: ModelSet | None = None) -> ModelSet:
    """Train ``MPNN_version`` from the state's labeled archive."""
    reg = regression_training_set(state, version)
    X = _features(state, reg)
    rho = np.array([l.result.density for l in reg])
    hof = np.array([l.result.solid_hof for l in reg])
    seed = settings.master_seed
    rho_model = train(X, rho, replace(settings.train, seed=phase_int(seed, "train-rho", version)))
    hof_model = train(X, hof, replace(settings.train, seed=phase_int(seed, "train-hof", version)))
    if log is not None:
        log.emit("model_trained", version=version, model="rho", n_train=len(reg))
        log.emit("model_trained", version=version, model="hof", n_train=len(reg))

    stab_model = previous.stability if previous else None
    cls = classifier_training_set(state, version)
    labels = np.array([1.0 if l.stable else 0.0 for l in cls])
    if version >= 1:
        try:
            stab_model = train(_features(state, cls), labels,
                               replace(settings.train, seed=phase_int(seed, "train-stability", version)),
                               task="classification")
            if log is not None:
                log.emit("model_trained", version=version, model="stability", n_train=len(cls),
                         n_stable=int(labels.sum()))
        except InsufficientData as err:
            if log is not None:
                log.emit("model_skipped", version=version, model="stability", reason=str(err))
    return ModelSet(version, rho_model, hof_model, stab_model)


def initial_state(seed_molecules: Sequence[Molecule], oracle, settings: LoopSettings,
                  log: RunLog | None = None) -> RunState:
    """Label the seed dataset and train ``MPNN_0``."""
    seed_molecules = _dedup(seed_molecules)
    results = oracle.evaluate_many(seed_molecules)
    labeled = {}
    for m, r in zip(seed_molecules, results):
        labeled[m.smiles] = LabeledMolecule(m.smiles, r, 0, "seed")
    stable = [l for l in labeled.values() if l.stable]
    if len(stable) < 2:
        raise InsufficientData("seed dataset has fewer than two stable molecules")
    fstats = FeatureStats.from_molecules([l.molecule for l in stable], settings.feature_dim)
    pstats = PropertyStats.from_values([l.result.density for l in stable],
                                       [l.result.solid_hof for l in stable])
    if log is not None:
        log.emit("campaign_start", version=LOG_VERSION, master_seed=settings.master_seed,
                 feature_stats=fstats.to_dict(), property_stats=pstats.to_dict(),
                 settings=_settings_dict(settings))
        for l in labeled.values():
            log.emit("molecule_labeled", **l.to_dict())
    state = RunState(labeled, fstats, pstats, {})
    state.models[0] = train_models(state, 0, settings, log)
    if log is not None:
        log.flush()
    return state


def _settings_dict(settings: LoopSettings):
    return {
        "master_seed": settings.master_seed,
        "ga": settings.ga.to_dict(),
        "train": settings.train.to_dict(),
        "holdout_fraction": settings.holdout_fraction,
        "stability_threshold": settings.stability_threshold,
        "feature_dim": settings.feature_dim,
    }


def _dedup(molecules):
    seen, out = set(), []
    for m in molecules:
        if m.smiles not in seen:
            seen.add(m.smiles)
            out.append(m)
    return out


# ---------------------------------------------------------------------------
# iteration


def make_scorer(models: ModelSet, state: RunState, gate: bool, threshold: float):
    stability = models.stability if gate else None

    def scorer(molecules):
        return batch_full_objective(molecules, (models.rho, models.hof), state.property_stats,
                                    state.feature_stats, stability, threshold)

    return scorer


def select_for_oracle(candidates: Sequence[Molecule], plan: IterationPlan, models: ModelSet | None,
                      state: RunState, rng: np.random.Generator,
                      threshold: float = STABILITY_THRESHOLD) -> list[Molecule]:
    """Choose at most ``plan.oracle_budget`` archive-novel candidates.

    ``Random`` samples uniformly without replacement; ``TopK`` takes the best
    constrained objective under ``models`` (gated iff the plan says so),
    ties broken by SMILES.  Molecules already labeled are never returned.
    """
    pool = [m for m in _dedup(candidates) if m.smiles not in state.labeled]
    budget = min(plan.oracle_budget, len(pool))
    if budget == 0:
        return []
    if plan.selection_policy == "Random":
        idx = rng.choice(len(pool), size=budget, replace=False)
        return [pool[i] for i in sorted(idx)]
    gate = plan.use_stability_gate and models.stability is not None
    scores = make_scorer(models, state, gate, threshold)(pool)
    order = sorted(range(len(pool)), key=lambda i: (-scores[i], pool[i].smiles))
    return [pool[i] for i in order[:budget]]


def run_iteration(state: RunState, plan: IterationPlan, settings: LoopSettings, oracle,
                  log: RunLog | None = None, archive_path: str | os.PathLike | None = None) -> RunState:
    """Execute one plan and return the new state.

    The input state is never modified; when the oracle fails the exception
    propagates and the log's pending events are discarded.
    """
    log = log if log is not None else RunLog()
    try:
        new_state = _run_iteration(state, plan, settings, oracle, log, archive_path)
    except BaseException:
        log.discard()
        raise
    log.flush()
    return new_state


def _run_iteration(state, plan, settings, oracle, log, archive_path):
    seed = settings.master_seed
    models = state.current
    gate = plan.use_stability_gate and models.stability is not None
    log.emit("iteration_start", iteration=plan.index, plan=plan.to_dict(), model_version=models.version,
             gate_active=gate)

    scorer = make_scorer(models, state, gate, settings.stability_threshold)
    seed_mols = [l.molecule for l in state.seeds()]
    archive = generator.run(seed_mols, scorer, settings.ga, rng=phase_rng(seed, "ga", plan.index))
    if archive_path is not None:
        Path(archive_path).write_text(archive.to_jsonl())
    candidates = [m for m in archive.molecules() if m.smiles not in state.labeled]

    chosen = select_for_oracle(candidates, plan, models, state, phase_rng(seed, "select", plan.index),
                               settings.stability_threshold)
    results = oracle.evaluate_many(chosen) if chosen else []
    if len(results) != len(chosen):
        raise RuntimeError("oracle returned a different number of results")

    n_hold = int(round(settings.holdout_fraction * len(chosen)))
    hold_idx = set(phase_rng(seed, "holdout", plan.index).permutation(len(chosen))[:n_hold].tolist())

    new_state = state.copy()
    for i, (m, r) in enumerate(zip(chosen, results)):
        l = LabeledMolecule(m.smiles, r, plan.index, plan.selection_policy, i in hold_idx)
        new_state.labeled[m.smiles] = l
        log.emit("molecule_labeled", **l.to_dict())

    if plan.retrain_after and chosen:
        new_state.models[plan.index] = train_models(new_state, plan.index, settings, log, previous=models)

    new_state.completed = plan.index
    snapshot = iteration_snapshot(new_state, plan, len(archive), len(candidates), gate)
    new_state.snapshots.append(snapshot)
    log.emit("iteration_end", iteration=plan.index, metrics=snapshot)
    return new_state


def iteration_snapshot(state: RunState, plan: IterationPlan, archive_size: int, n_candidates: int,
                       gate: bool) -> dict:
    batch = [l for l in state.labeled.values() if l.iteration == plan.index]
    stable = [l for l in batch if l.stable]
    scores = [oracle_score(l.result.density, l.result.solid_hof, state.property_stats) for l in stable]
    return {
        "iteration": plan.index,
        "archive_size": archive_size,
        "candidates": n_candidates,
        "labeled": len(batch),
        "stable": len(stable),
        "stable_fraction": len(stable) / len(batch) if batch else None,
        "best_score": max(scores) if scores else None,
        "gate_active": gate,
        "model_version": state.current.version,
    }


# ---------------------------------------------------------------------------
# campaign


def evaluate_models(state: RunState, log: RunLog):
    """Log every model's predictions on every labeled generated molecule."""
    gen = state.generated()
    if not gen:
        return
    X = _features(state, gen)
    smiles = [l.smiles for l in gen]
    for version in sorted(state.models):
        ms = state.models[version]
        entry = {
            "version": version,
            "smiles": smiles,
            "pred_rho": np.atleast_1d(ms.rho.predict(X)).tolist(),
            "pred_hof": np.atleast_1d(ms.hof.predict(X)).tolist(),
            "p_stable": np.atleast_1d(ms.stability.predict(X)).tolist() if ms.stability else None,
        }
        log.emit("evaluation", **entry)
    log.flush()


def save_checkpoint(state: RunState, path):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(state.to_dict(), fh, sort_keys=True)
    os.replace(tmp, path)


def load_checkpoint(path) -> RunState:
    with open(path) as fh:
        return RunState.from_dict(json.load(fh))


def run_campaign(seed_molecules: Sequence[Molecule], plans: Sequence[IterationPlan],
                 settings: LoopSettings, oracle, log: RunLog | None = None,
                 out_dir: str | os.PathLike | None = None, state: RunState | None = None,
                 progress: Callable[[str], None] | None = None) -> RunState:
    """Run every plan in order and return the final state.

    With ``out_dir`` a checkpoint is written after the seed round and after
    every iteration (``checkpoints/iter_<x>.json``), plus the GA archive of
    each iteration.  Passing ``state`` resumes from a checkpoint; plans whose
    index is already completed are skipped.
    """
    log = log if log is not None else RunLog()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)
        (out / "archives").mkdir(parents=True, exist_ok=True)
    if state is None:
        state = initial_state(seed_molecules, oracle, settings, log)
        if out is not None:
            save_checkpoint(state, out / "checkpoints" / "iter_0.json")
    for plan in plans:
        if plan.index <= state.completed:
            continue
        if progress:
            progress(f"iteration {plan.index}: {plan.selection_policy} x{plan.oracle_budget}")
        archive_path = out / "archives" / f"iter_{plan.index}.jsonl" if out is not None else None
        state = run_iteration(state, plan, settings, oracle, log, archive_path)
        if out is not None:
            save_checkpoint(state, out / "checkpoints" / f"iter_{plan.index}.json")
    evaluate_models(state, log)
    log.emit("campaign_end", completed=state.completed, labeled=len(state.labeled))
    log.flush()
    return state
