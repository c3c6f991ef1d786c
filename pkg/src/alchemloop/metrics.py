"""Campaign evaluation: Pareto fronts, top/SOTA flags, surrogate error
analysis, and the report tables.

Reports are computed from a :class:`RunRecord`, which is rebuilt either from
a run log (the normal path, so a report is a pure replay) or from an
in-memory :class:`~alchemloop.loop.RunState`.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from alchemloop.dataset import LabeledMolecule
from alchemloop.errors import EmptyTrainSet, IncompleteState
from alchemloop.molgraph import DESCRIPTOR_NAMES, FeatureStats, featurize_many, parse_smiles
from alchemloop.scoring import PropertyStats, oracle_score
from alchemloop.surrogate import evaluate_regression, evaluate_top, precision_recall, roc_auc

DENSITY_BIN = 0.1
HOF_BIN = 100.0


# ---------------------------------------------------------------------------
# Pareto analysis (maximization in both coordinates)


def dominates(p, q) -> bool:
    """``p`` is >= ``q`` in both coordinates and > in at least one."""
    return p[0] >= q[0] and p[1] >= q[1] and (p[0] > q[0] or p[1] > q[1])


@dataclass(frozen=True)
class ParetoFront:
    points: tuple[tuple[float, float], ...]

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def pareto_front(points: Iterable[Sequence[float]]) -> ParetoFront:
    """Non-dominated subset, deduplicated and sorted by the first coordinate.

    Sweeps points in order of decreasing first coordinate (then decreasing
    second) and keeps those whose second coordinate beats everything seen.
    """
    pts = sorted({(float(p[0]), float(p[1])) for p in points}, key=lambda p: (-p[0], -p[1]))
    front = []
    best_y = -math.inf
    for x, y in pts:
        if y > best_y:
            front.append((x, y))
            best_y = y
    front.reverse()
    return ParetoFront(tuple(front))


def is_sota(p: Sequence[float], front: ParetoFront) -> bool:
    """True iff no front point weakly dominates ``p`` (>= in both)."""
    return not any(q[0] >= p[0] and q[1] >= p[1] for q in front)


def is_top(p: Sequence[float], stats: PropertyStats, k: float = 3.0) -> bool:
    """Both (density, hof) at least ``k`` standard deviations above the seed means."""
    rho, hof = p
    return rho >= stats.mean_rho + k * stats.std_rho and hof >= stats.mean_hof + k * stats.std_hof


def top_thresholds(stats: PropertyStats, k: float = 3.0) -> tuple[float, float]:
    return stats.mean_rho + k * stats.std_rho, stats.mean_hof + k * stats.std_hof


def nearest_train_distance(x, train) -> float:
    """Minimum Euclidean distance from ``x`` to the rows of ``train``.

    Raises
    ------
    EmptyTrainSet
    """
    train = np.asarray(train, dtype=float)
    if train.size == 0:
        raise EmptyTrainSet("training feature set is empty")
    train = train.reshape(len(train), -1)
    return float(np.sqrt(np.min(np.sum((train - np.asarray(x, dtype=float)) ** 2, axis=1))))


def nearest_train_distances(X, train) -> np.ndarray:
    """Vectorized :func:`nearest_train_distance` for every row of ``X``."""
    train = np.asarray(train, dtype=float)
    if train.size == 0:
        raise EmptyTrainSet("training feature set is empty")
    X = np.asarray(X, dtype=float)
    out = np.empty(len(X))
    sq_train = np.sum(train ** 2, axis=1)
    for start in range(0, len(X), 512):
        chunk = X[start:start + 512]
        d2 = np.sum(chunk ** 2, axis=1)[:, None] + sq_train[None, :] - 2 * chunk @ train.T
        out[start:start + 512] = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
    return out


# ---------------------------------------------------------------------------
# run records


@dataclass
class RunRecord:
    """Everything a report needs, independent of where it came from."""

    labeled: list[LabeledMolecule]
    property_stats: PropertyStats
    feature_stats: FeatureStats
    plans: list[dict] = field(default_factory=list)
    snapshots: list[dict] = field(default_factory=list)
    # version -> smiles -> (pred_rho, pred_hof, p_stable or None)
    predictions: dict[int, dict[str, tuple]] = field(default_factory=dict)
    complete: bool = False

    @classmethod
    def from_events(cls, events: Sequence[dict]) -> "RunRecord":
        start = next((e for e in events if e["event"] == "campaign_start"), None)
        if start is None:
            raise IncompleteState("run log has no campaign_start event")
        labeled: dict[str, LabeledMolecule] = {}
        plans, snapshots, predictions = [], [], {}
        complete = False
        for e in events:
            kind = e["event"]
            if kind == "molecule_labeled":
                fields = {k: v for k, v in e.items() if k != "event"}
                l = LabeledMolecule.from_dict(fields)
                labeled[l.smiles] = l
            elif kind == "iteration_start":
                plans.append(e["plan"])
            elif kind == "iteration_end":
                snapshots.append(e["metrics"])
            elif kind == "evaluation":
                p_stable = e["p_stable"] or [None] * len(e["smiles"])
                predictions[int(e["version"])] = {
                    s: (r, h, p) for s, r, h, p in zip(e["smiles"], e["pred_rho"], e["pred_hof"], p_stable)
                }
            elif kind == "campaign_end":
                complete = True
        return cls(list(labeled.values()), PropertyStats.from_dict(start["property_stats"]),
                   FeatureStats.from_dict(start["feature_stats"]), plans, snapshots, predictions, complete)

    @classmethod
    def from_state(cls, state, complete: bool = True) -> "RunRecord":
        gen = state.generated()
        predictions = {}
        if gen:
            X = featurize_many([l.molecule for l in gen], state.feature_stats)
            for version, ms in sorted(state.models.items()):
                rho = np.atleast_1d(ms.rho.predict(X))
                hof = np.atleast_1d(ms.hof.predict(X))
                stab = np.atleast_1d(ms.stability.predict(X)) if ms.stability else [None] * len(gen)
                predictions[version] = {
                    l.smiles: (float(r), float(h), None if p is None else float(p))
                    for l, r, h, p in zip(gen, rho, hof, stab)
                }
        plans = [{"index": s["iteration"]} for s in state.snapshots]
        return cls(list(state.labeled.values()), state.property_stats, state.feature_stats, plans,
                   list(state.snapshots), predictions, complete)

    def seeds(self):
        return [l for l in self.labeled if l.iteration == 0]

    def generated(self):
        return [l for l in self.labeled if l.iteration > 0]


# ---------------------------------------------------------------------------
# report


def table1_row(source: str, batch: Sequence[LabeledMolecule], stats: PropertyStats,
               front: ParetoFront) -> dict:
    """Table-1 style columns for one group of oracle-evaluated molecules.

    Percentages use every evaluated molecule as the denominator; "top" and
    "SOTA" numerators count stable molecules only.
    """
    n = len(batch)
    stable = [l for l in batch if l.stable]
    pts = [(l.result.density, l.result.solid_hof) for l in stable]
    n_top = sum(1 for p in pts if is_top(p, stats))
    n_sota = sum(1 for p in pts if is_sota(p, front))
    return {
        "source": source,
        "valid": n,
        "top_density": max((p[0] for p in pts), default=None),
        "top_hof": max((p[1] for p in pts), default=None),
        "top_score": max((oracle_score(r, h, stats) for r, h in pts), default=None),
        "pct_stable": 100.0 * len(stable) / n if n else None,
        "pct_top": 100.0 * n_top / n if n else None,
        "pct_sota": 100.0 * n_sota / n if n else None,
    }


def _bins(true, err, width):
    if len(true) == 0:
        return []
    idx = np.floor(np.asarray(true) / width).astype(int)
    rows = []
    for b in sorted(set(idx.tolist())):
        mask = idx == b
        rows.append({"bin_low": b * width, "bin_high": (b + 1) * width, "count": int(mask.sum()),
                     "mean_abs_error": float(np.mean(np.abs(np.asarray(err)[mask])))})
    return rows


def model_report(record: RunRecord, version: int, evalset: Sequence[LabeledMolecule]) -> dict:
    """Surrogate quality of ``MPNN_version`` on ``evalset`` (held-out generated molecules)."""
    preds = record.predictions[version]
    stats = record.property_stats
    stable = [l for l in evalset if l.stable and l.smiles in preds]
    out = {"version": version, "n_eval": len(evalset), "n_stable": len(stable)}
    if stable:
        pr = np.array([preds[l.smiles][0] for l in stable])
        ph = np.array([preds[l.smiles][1] for l in stable])
        tr = np.array([l.result.density for l in stable])
        th = np.array([l.result.solid_hof for l in stable])
        rho_thr, hof_thr = top_thresholds(stats)
        precision, recall = evaluate_top(pr, ph, tr, th, rho_thr, hof_thr)
        out.update(
            rmse_density=evaluate_regression(pr, tr).rmse,
            rmse_hof=evaluate_regression(ph, th).rmse,
            top_precision=precision,
            top_recall=recall,
            n_true_top=int(np.sum((tr >= rho_thr) & (th >= hof_thr))),
            n_pred_top=int(np.sum((pr >= rho_thr) & (ph >= hof_thr))),
            density_bins=_bins(tr, pr - tr, DENSITY_BIN),
            hof_bins=_bins(th, ph - th, HOF_BIN),
        )
    with_p = [l for l in evalset if l.smiles in preds and preds[l.smiles][2] is not None]
    labels = np.array([l.stable for l in with_p], dtype=bool)
    if with_p and 0 < labels.sum() < len(labels):
        p = np.array([preds[l.smiles][2] for l in with_p])
        out["stability_auc"] = roc_auc(p, labels)
        out["stability_precision"], out["stability_recall"] = precision_recall(p >= 0.5, labels)
    return out


def distance_error_pairs(record: RunRecord, version: int = 0):
    """(nearest seed distance, |density error|, |hof error|) for stable generated molecules."""
    preds = record.predictions.get(version)
    if not preds:
        return []
    train = [l for l in record.seeds() if l.stable]
    if not train:
        raise EmptyTrainSet("no stable seed molecules")
    gen = [l for l in record.generated() if l.stable and l.smiles in preds]
    if not gen:
        return []
    fs = record.feature_stats
    Xt = featurize_many([l.molecule for l in train], fs)
    Xg = featurize_many([l.molecule for l in gen], fs)
    dist = nearest_train_distances(Xg, Xt)
    return [
        {"smiles": l.smiles, "distance": float(d),
         "abs_err_density": abs(preds[l.smiles][0] - l.result.density),
         "abs_err_hof": abs(preds[l.smiles][1] - l.result.solid_hof)}
        for l, d in zip(gen, dist)
    ]


def quartile_errors(pairs, key="abs_err_density"):
    """Mean error in the bottom and top distance quartiles."""
    if len(pairs) < 4:
        return None
    d = np.array([p["distance"] for p in pairs])
    e = np.array([p[key] for p in pairs])
    lo, hi = np.quantile(d, [0.25, 0.75])
    return {"bottom": float(e[d <= lo].mean()), "top": float(e[d >= hi].mean())}


def campaign_report(record: RunRecord) -> dict:
    """Every report table as plain JSON-able data.

    Raises
    ------
    IncompleteState
        If no iteration has completed.
    """
    if not record.snapshots:
        raise IncompleteState("no completed iteration in this run")
    stats = record.property_stats
    seeds = record.seeds()
    seed_front = pareto_front([(l.result.density, l.result.solid_hof) for l in seeds if l.stable])
    iterations = sorted({l.iteration for l in record.generated()})
    table = [table1_row("seed", seeds, stats, seed_front)]
    for it in iterations:
        table.append(table1_row(f"iteration_{it}", [l for l in record.labeled if l.iteration == it],
                                stats, seed_front))
    table.append(table1_row("generated", record.generated(), stats, seed_front))

    holdout = [l for l in record.generated() if l.holdout]
    models = [model_report(record, v, holdout) for v in sorted(record.predictions)]
    pairs = distance_error_pairs(record, 0)
    return {
        "complete": record.complete,
        "property_stats": stats.to_dict(),
        "top_thresholds": dict(zip(("density", "hof"), top_thresholds(stats))),
        "seed_pareto_front": [list(p) for p in seed_front],
        "table1": table,
        "iterations": record.snapshots,
        "models": models,
        "distance_error": {
            "model_version": 0,
            "pairs": pairs,
            "density_quartiles": quartile_errors(pairs, "abs_err_density"),
            "hof_quartiles": quartile_errors(pairs, "abs_err_hof"),
        },
    }


def _csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in columns})
    return buf.getvalue()


def report_files(report: dict, record: RunRecord | None = None) -> dict[str, str]:
    """Render the report as ``{filename: text}`` (JSON plus one CSV per table)."""
    files = {"report.json": json.dumps(report, indent=1, sort_keys=True) + "\n"}
    files["table1.csv"] = _csv(report["table1"], ["source", "valid", "top_density", "top_hof", "top_score",
                                                  "pct_stable", "pct_top", "pct_sota"])
    files["model_eval.csv"] = _csv(report["models"], ["version", "n_eval", "n_stable", "rmse_density",
                                                      "rmse_hof", "top_precision", "top_recall",
                                                      "n_true_top", "n_pred_top", "stability_auc"])
    files["distance_error.csv"] = _csv(report["distance_error"]["pairs"],
                                       ["smiles", "distance", "abs_err_density", "abs_err_hof"])
    for prop in ("density", "hof"):
        rows = [dict(b, version=m["version"]) for m in report["models"] for b in m.get(f"{prop}_bins", [])]
        files[f"{prop}_error_bins.csv"] = _csv(rows, ["version", "bin_low", "bin_high", "count",
                                                      "mean_abs_error"])
    if record is not None:
        files["features.csv"] = features_csv(record)
    return files


def features_csv(record: RunRecord) -> str:
    """Feature matrix of every labeled molecule, for external embedding tools."""
    fs = record.feature_stats
    X = featurize_many([l.molecule for l in record.labeled], fs)
    names = list(DESCRIPTOR_NAMES[:fs.dim]) + [f"pad_{i}" for i in range(len(DESCRIPTOR_NAMES), fs.dim)]
    rows = []
    for l, x in zip(record.labeled, X):
        row = {"smiles": l.smiles, "iteration": l.iteration, "stable": int(l.stable)}
        row.update({n: float(v) for n, v in zip(names, x)})
        rows.append(row)
    return _csv(rows, ["smiles", "iteration", "stable"] + names)
