"""Run the two-population genetic algorithm against the oracle score.

Here the GA is scored by the oracle itself, which is the upper bound of
what a surrogate-guided search can reach.
"""

import numpy as np

from alchemloop.dataset import SeedSpec, generate_seed_molecules
from alchemloop.generator import GAConfig, run
from alchemloop.oracle import SyntheticOracle
from alchemloop.scoring import PropertyStats, oracle_score

rng = np.random.default_rng(1)
oracle = SyntheticOracle()
seeds = generate_seed_molecules(SeedSpec(count=300), rng)
labels = oracle.evaluate_many(seeds)
stats = PropertyStats.from_values([r.density for r in labels if r.stable], [r.solid_hof for r in labels if r.stable])


def score(molecules):
    out = []
    for r in oracle.evaluate_many(molecules):
        out.append(oracle_score(r.density, r.solid_hof, stats) if r.stable else -10.0)
    return np.array(out)


seed_best = max(score(seeds))
archive = run(seeds, score, GAConfig(generations=15, population_size=60, exchange=3), rng,
              on_generation=lambda g, pops: print(f"gen {g:2d} best {max(m.score for m in pops[0].members):.2f}"))
top = sorted(archive, key=lambda e: -e.score)[:5]
print(f"seed best {seed_best:.2f}; {len(archive)} distinct molecules generated")
for e in top:
    print(f"  {e.score:6.2f}  {e.smiles}")
