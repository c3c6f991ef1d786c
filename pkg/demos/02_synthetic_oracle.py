"""Evaluate molecules with the synthetic oracle.

Stable molecules get a density and a solid-phase heat of formation (gas
heat of formation minus heat of sublimation); strained rings and
peroxide-like chains are reported unstable with a failure reason.
"""

from alchemloop.molgraph import parse_smiles
from alchemloop.oracle import SyntheticOracle, heat_of_sublimation, surface_props

oracle = SyntheticOracle()
print(f"sublimation fit: a={oracle.coeffs.a:.4f} b={oracle.coeffs.b:.4f} c={oracle.coeffs.c:.4f}")
for smi in ["CC", "C[N+](=O)[O-]", "NCCN", "C1CC1C1CC1", "OOO", "NNNC",
            "C1N([N+](=O)[O-])CN([N+](=O)[O-])CN1[N+](=O)[O-]"]:
    m = parse_smiles(smi)
    r = oracle.evaluate(m)
    if r.stable:
        h_sub = heat_of_sublimation(surface_props(m, oracle.config), oracle.coeffs)
        print(f"{m.smiles:40s} density {r.density:.3f}  hof {r.solid_hof:8.2f}  (dH_sub {h_sub:.2f})")
    else:
        print(f"{m.smiles:40s} unstable: {r.failure_reason.value}")
