"""A small active-learning campaign and its report, as the CLI would run it.

Four iterations with reduced GA and budgets; the last one selects the
top-scored candidates with the stability gate on.  Use ``alchemloop run``
with the default configuration for the full desk-scale campaign.
"""

import json
import sys
import tempfile
from pathlib import Path

from alchemloop.cli import main

config = {
    "master_seed": 0,
    "seed_spec": {"count": 500},
    "ga": {"generations": 10, "population_size": 80, "exchange": 3},
    "plans": [
        {"index": 1, "oracle_budget": 60},
        {"index": 2, "oracle_budget": 60},
        {"index": 3, "oracle_budget": 100},
        {"index": 4, "oracle_budget": 60, "selection_policy": "TopK", "use_stability_gate": True},
    ],
    "train": {"epochs": 20},
}

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp()) / "run"
cfg = out.parent / "demo_config.json"
out.parent.mkdir(parents=True, exist_ok=True)
cfg.write_text(json.dumps(config))
if main(["run", "--config", str(cfg), "--out", str(out), "--quiet"]) != 0:
    sys.exit(1)

report = json.loads((out / "report" / "report.json").read_text())
print(f"run directory: {out}")
print(f"{'source':14s} {'n':>5s} {'%stable':>8s} {'top score':>10s}")
for row in report["table1"]:
    best = "-" if row["top_score"] is None else f"{row['top_score']:.2f}"
    print(f"{row['source']:14s} {row['valid']:5d} {row['pct_stable']:8.1f} {best:>10s}")
for m in report["models"]:
    print(f"MPNN{m['version']}: rmse density {m.get('rmse_density', float('nan')):.4f}, "
          f"rmse hof {m.get('rmse_hof', float('nan')):.2f}")
