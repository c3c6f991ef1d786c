"""Parse SMILES, canonicalize, and move between SMILES and SELFIES.

Run with ``python demos/01_molecules_and_selfies.py``.
"""

import numpy as np

from alchemloop.molgraph import DESCRIPTOR_NAMES, descriptors, parse_smiles, tanimoto
from alchemloop.selfies import ALPHABET, crossover, decode, encode, join_selfies, mutate

for smi in ["OCC", "C[N+](=O)[O-]", "C1CCCCC1", "NC(N)=O"]:
    m = parse_smiles(smi)
    s = encode(m)
    print(f"{smi:16s} canonical {m.smiles:16s} selfies {join_selfies(s)}")
    assert decode(s).smiles == m.smiles

# any token string decodes to a valid molecule
rng = np.random.default_rng(0)
for _ in range(5):
    tokens = tuple(ALPHABET[i] for i in rng.integers(len(ALPHABET), size=12))
    print(f"{join_selfies(tokens):90s} -> {decode(tokens).smiles}")

# descriptors of nitromethane
m = parse_smiles("C[N+](=O)[O-]")
for name, value in zip(DESCRIPTOR_NAMES, descriptors(m)):
    print(f"  {name:24s} {value:.4g}")

# mutation and path crossover
a, b = encode(parse_smiles("CCCCO")), encode(parse_smiles("NCC(=O)N"))
print("mutant   ", decode(mutate(a, rng)).smiles)
child = decode(crossover(a, b, rng))
print("crossover", child.smiles,
      f"sim to parents {tanimoto(child.fingerprint, decode(a).fingerprint):.2f}"
      f" / {tanimoto(child.fingerprint, decode(b).fingerprint):.2f}")
