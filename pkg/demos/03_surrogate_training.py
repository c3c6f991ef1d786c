"""Train the fold-ensemble surrogate on oracle labels of random seeds.

Shows the regression RMSE on a held-out split and the stability
classifier's AUC.
"""

import numpy as np

from alchemloop.dataset import SeedSpec, generate_seed_molecules
from alchemloop.molgraph import FeatureStats, featurize_many
from alchemloop.oracle import SyntheticOracle
from alchemloop.surrogate import TrainConfig, evaluate_regression, roc_auc, train

rng = np.random.default_rng(0)
oracle = SyntheticOracle()
# without motif filtering some seeds are unstable, which the classifier needs
mols = generate_seed_molecules(SeedSpec(count=600, avoid_motifs=False), rng)
results = oracle.evaluate_many(mols)
stats = FeatureStats.from_molecules(mols)
X = featurize_many(mols, stats)

cut = 500
stable = np.array([r.stable for r in results])
rho = np.array([r.density if r.stable else np.nan for r in results])
cfg = TrainConfig(epochs=60)

train_idx = np.flatnonzero(stable[:cut])
test_idx = cut + np.flatnonzero(stable[cut:])
model = train(X[train_idx], rho[train_idx], cfg)
report = evaluate_regression(model.predict(X[test_idx]), rho[test_idx])
print(f"density RMSE on {len(test_idx)} held-out molecules: {report.rmse:.4f}"
      f" (std of targets {rho[test_idx].std():.4f})")

clf = train(X[:cut], stable[:cut].astype(float), cfg, task="classification")
print(f"stability AUC on held-out molecules: {roc_auc(clf.predict(X[cut:]), stable[cut:]):.3f}")
