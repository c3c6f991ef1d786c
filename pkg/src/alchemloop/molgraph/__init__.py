"""Molecular graphs, SMILES I/O, canonical form, descriptors and fingerprints."""

from alchemloop.molgraph.features import (
    DEFAULT_DIM,
    DESCRIPTOR_NAMES,
    FeatureStats,
    Fingerprint,
    descriptors,
    featurize,
    featurize_many,
    fingerprint,
    nitro_group_count,
    tanimoto,
)
from alchemloop.molgraph.graph import (
    ATOMIC_MASS,
    Atom,
    Bond,
    Molecule,
    is_chon,
    net_formal_charge,
    relabel,
    valence,
)
from alchemloop.molgraph.smiles import canonical_ranks, canonical_smiles, parse_smiles, write_smiles

__all__ = [
    "ATOMIC_MASS",
    "Atom",
    "Bond",
    "DEFAULT_DIM",
    "DESCRIPTOR_NAMES",
    "FeatureStats",
    "Fingerprint",
    "Molecule",
    "canonical_ranks",
    "canonical_smiles",
    "descriptors",
    "featurize",
    "featurize_many",
    "fingerprint",
    "is_chon",
    "net_formal_charge",
    "nitro_group_count",
    "parse_smiles",
    "relabel",
    "tanimoto",
    "valence",
    "write_smiles",
]
