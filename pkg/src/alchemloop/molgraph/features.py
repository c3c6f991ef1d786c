"""Descriptor featurization and hashed circular fingerprints."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from alchemloop.molgraph.graph import ELEMENT_INDEX, Molecule

DEFAULT_DIM = 32
FINGERPRINT_BITS = 1024
FINGERPRINT_RADIUS = 2

DESCRIPTOR_NAMES = (
    "heavy_atoms",
    "mol_weight",
    "frac_C",
    "frac_N",
    "frac_O",
    "h_per_heavy",
    "bonds_NO",
    "bonds_NN",
    "bonds_CN",
    "bonds_OO",
    "ring_count",
    "max_ring_size",
    "degree_1",
    "degree_2",
    "degree_3",
    "degree_4",
    "hbond_donors",
    "hbond_acceptors",
    "charged_atoms",
    "branching_index",
)


def _pair_count(m: Molecule, x: str, y: str) -> int:
    el = m.elements
    want = {x, y}
    return sum(1 for a, b, _ in m.bonds if {el[a], el[b]} == want)


def nitro_group_count(m: Molecule) -> int:
    """Count N atoms bonded to exactly two oxygens, one of them doubly (NO2 motif)."""
    count = 0
    for i, atom in enumerate(m.atoms):
        if atom.element != "N":
            continue
        oxygens = [(j, o) for j, o in m.adjacency[i] if m.atoms[j].element == "O"]
        if len(oxygens) == 2 and any(o == 2 for _, o in oxygens):
            count += 1
    return count


def descriptors(m: Molecule) -> np.ndarray:
    """Raw (unnormalized) descriptor values, ordered as ``DESCRIPTOR_NAMES``."""
    heavy = len(m.atoms)
    el = m.elements
    deg = [len(nb) for nb in m.adjacency]
    donors = sum(1 for a in m.atoms if a.element in ("N", "O") and a.hydrogens > 0)
    acceptors = sum(
        1 for a in m.atoms
        if a.element == "O" or (a.element == "N" and a.charge <= 0)
    )
    rings = m.rings
    values = [
        heavy,
        m.molecular_weight,
        el.count("C") / heavy,
        el.count("N") / heavy,
        el.count("O") / heavy,
        m.total_hydrogens / heavy,
        _pair_count(m, "N", "O"),
        _pair_count(m, "N", "N"),
        _pair_count(m, "C", "N"),
        _pair_count(m, "O", "O"),
        max(m.cyclomatic_number, 0),
        max((len(r) for r in rings), default=0),
        sum(1 for d in deg if d == 1) / heavy,
        sum(1 for d in deg if d == 2) / heavy,
        sum(1 for d in deg if d == 3) / heavy,
        sum(1 for d in deg if d == 4) / heavy,
        donors,
        acceptors,
        sum(1 for a in m.atoms if a.charge != 0),
        sum(1 for d in deg if d >= 3) / heavy,
    ]
    return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class FeatureStats:
    """Per-descriptor normalization constants, frozen for a run."""

    mean: tuple[float, ...]
    std: tuple[float, ...]
    dim: int = DEFAULT_DIM

    @classmethod
    def from_molecules(cls, molecules: Iterable[Molecule], dim: int = DEFAULT_DIM):
        raw = np.array([descriptors(m) for m in molecules])
        if raw.size == 0:
            raise ValueError("cannot compute feature statistics from zero molecules")
        return cls(tuple(raw.mean(axis=0).tolist()), tuple(raw.std(axis=0).tolist()), dim)

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std), "dim": self.dim}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["mean"]), tuple(d["std"]), int(d["dim"]))


def featurize(m: Molecule, stats: FeatureStats) -> np.ndarray:
    """Normalized, zero-padded feature vector of length ``stats.dim``.

    Each descriptor becomes ``(x - mean) / max(std, 1e-8)``; slots past the
    descriptor list are zero.  Descriptors that do not fit in ``dim`` are
    dropped from the end.
    """
    raw = descriptors(m)
    mean = np.asarray(stats.mean)
    std = np.maximum(np.asarray(stats.std), 1e-8)
    z = (raw - mean) / std
    out = np.zeros(stats.dim)
    k = min(stats.dim, z.size)
    out[:k] = z[:k]
    return out


def featurize_many(molecules: Sequence[Molecule], stats: FeatureStats) -> np.ndarray:
    if not molecules:
        return np.zeros((0, stats.dim))
    return np.vstack([featurize(m, stats) for m in molecules])


# ---------------------------------------------------------------------------
# fingerprints


@dataclass(frozen=True)
class Fingerprint:
    """Fixed-width bit set stored as a Python integer."""

    bits: int
    n_bits: int = FINGERPRINT_BITS

    def on_bits(self) -> list[int]:
        return [i for i in range(self.n_bits) if self.bits >> i & 1]

    def count(self) -> int:
        return self.bits.bit_count()


def fingerprint(m: Molecule, n_bits: int = FINGERPRINT_BITS,
                radius: int = FINGERPRINT_RADIUS) -> Fingerprint:
    """Hashed circular substructure fingerprint (Morgan-style, radius 2).

    Identifiers are Python hashes of integer tuples, which are stable
    across processes (only ``str``/``bytes`` hashing is salted).
    """
    adj = m.adjacency
    ids = [
        hash((ELEMENT_INDEX[a.element], a.charge, a.hydrogens, len(adj[i])))
        for i, a in enumerate(m.atoms)
    ]
    bits = 0
    for x in ids:
        bits |= 1 << (x % n_bits)
    for _ in range(radius):
        ids = [
            hash((ids[i], tuple(sorted((o, ids[j]) for j, o in adj[i]))))
            for i in range(len(ids))
        ]
        for x in ids:
            bits |= 1 << (x % n_bits)
    return Fingerprint(bits, n_bits)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """Jaccard similarity of two bit sets; two empty fingerprints score 1."""
    union = (a.bits | b.bits).bit_count()
    if union == 0:
        return 1.0
    return (a.bits & b.bits).bit_count() / union
