"""Seed-dataset generation and labeled-molecule records."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from alchemloop.errors import Inexpressible
from alchemloop.molgraph import Molecule, is_chon, net_formal_charge, parse_smiles
from alchemloop.oracle import FailureReason, OracleResult, SyntheticOracleConfig, instability_reason
from alchemloop.selfies import ALPHABET, ATOM_TOKENS, decode, encode


@dataclass(frozen=True)
class SeedSpec:
    count: int = 2000
    require_no_bond: bool = True
    avoid_motifs: bool = True
    min_tokens: int = 4
    max_tokens: int = 18
    min_heavy_atoms: int = 3
    min_carbon_fraction: float = 0.34

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("seed count must be >= 1")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        if not 0.0 <= self.min_carbon_fraction <= 1.0:
            raise ValueError("min_carbon_fraction must lie in [0, 1]")


def has_no_bond(m: Molecule) -> bool:
    el = m.elements
    return any({el[a], el[b]} == {"N", "O"} for a, b, _ in m.bonds)


def generate_seed_molecules(spec: SeedSpec, rng: np.random.Generator,
                            oracle_config: SyntheticOracleConfig | None = None,
                            max_draws: int | None = None) -> list[Molecule]:
    """Rejection-sample distinct neutral CHON molecules from random SELFIES.

    A draw is kept when it decodes to an unseen molecule with at least
    ``min_heavy_atoms`` heavy atoms, zero net charge, an N-O bond (if
    required), none of the synthetic instability motifs (if requested),
    and an encoding back to SELFIES.  Molecules are returned in draw order.
    """
    found: dict[str, Molecule] = {}
    max_draws = max_draws or 2000 * spec.count
    draws = 0
    while len(found) < spec.count:
        draws += 1
        if draws > max_draws:
            raise RuntimeError(f"seed generation gave up after {max_draws} draws ({len(found)} found)")
        length = int(rng.integers(spec.min_tokens, spec.max_tokens + 1))
        tokens = tuple(ALPHABET[i] for i in rng.integers(len(ALPHABET), size=length))
        # necessary conditions on the raw tokens spare most decodes
        elements = [ATOM_TOKENS[t][1] for t in tokens if t in ATOM_TOKENS]
        if len(elements) < spec.min_heavy_atoms:
            continue
        if spec.require_no_bond and not ("N" in elements and "O" in elements):
            continue
        m = decode(tokens)
        # cheap structural filters first; canonical SMILES only for survivors
        if len(m.atoms) < spec.min_heavy_atoms:
            continue
        if m.elements.count("C") < spec.min_carbon_fraction * len(m.atoms):
            continue
        if not is_chon(m) or net_formal_charge(m) != 0:
            continue
        if spec.require_no_bond and not has_no_bond(m):
            continue
        if spec.avoid_motifs and instability_reason(m, oracle_config) is not FailureReason.NONE:
            continue
        if m.smiles in found:
            continue
        try:
            encode(m)
        except Inexpressible:
            continue
        found[m.smiles] = m
    return list(found.values())


def write_smiles_file(path, molecules: Sequence[Molecule]):
    with open(path, "w") as fh:
        for m in molecules:
            fh.write(m.smiles + "\n")


def read_smiles_file(path) -> list[Molecule]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(parse_smiles(line.split()[0]))
            except ValueError as err:
                raise ValueError(f"{path}:{lineno}: {err}") from err
    return out


_parse_cached = lru_cache(maxsize=1 << 17)(parse_smiles)


@dataclass(frozen=True)
class LabeledMolecule:
    """An oracle-evaluated molecule with its provenance.

    ``iteration`` is 0 for the seed dataset; ``holdout`` marks molecules kept
    out of every training set and used only for evaluation.
    """

    smiles: str
    result: OracleResult
    iteration: int
    policy: str = "seed"
    holdout: bool = False

    @property
    def molecule(self) -> Molecule:
        return _parse_cached(self.smiles)

    @property
    def stable(self) -> bool:
        return self.result.stable

    def to_dict(self):
        d = {"smiles": self.smiles, "iteration": self.iteration, "policy": self.policy,
             "holdout": self.holdout}
        d.update(self.result.to_dict())
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["smiles"], OracleResult.from_dict(d), int(d["iteration"]), d.get("policy", "seed"),
                   bool(d.get("holdout", False)))
