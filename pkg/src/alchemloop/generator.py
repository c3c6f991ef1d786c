"""Dual-population genetic algorithm over SELFIES strings.

The exploration population breeds by crossover and mutation and keeps the
best scorers of parents plus offspring.  The exploitation population only
mutates and keeps the offspring closest (Tanimoto) to their own parent.
After every generation each population hands its best few members to the
other.  All ties are broken by canonical SMILES so runs are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from alchemloop.errors import EmptySeed, Inexpressible
from alchemloop.molgraph import Molecule, is_chon, net_formal_charge, tanimoto
from alchemloop.selfies import SelfiesString, crossover, decode, encode, join_selfies, mutate

Scorer = Callable[[Sequence[Molecule]], np.ndarray]


@dataclass(frozen=True)
class GAConfig:
    generations: int = 200
    population_size: int = 500
    exchange: int = 5
    crossover_fraction: float = 0.5
    exploitation_mutants: int | None = None  # None: one mutant per member
    joint: str = "min"
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 1:
            raise ValueError("population_size must be >= 1")
        if not 0 <= self.exchange < self.population_size:
            raise ValueError("exchange count must be in [0, population_size)")
        if not 0.0 <= self.crossover_fraction <= 1.0:
            raise ValueError("crossover_fraction must lie in [0, 1]")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if self.joint not in ("min", "mean"):
            raise ValueError("joint must be 'min' or 'mean'")

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Member:
    selfies: SelfiesString
    smiles: str
    score: float

    @property
    def molecule(self) -> Molecule:
        return decode(self.selfies)


@dataclass
class Population:
    kind: str
    members: list[Member] = field(default_factory=list)

    def __len__(self):
        return len(self.members)

    def smiles_set(self):
        return {m.smiles for m in self.members}

    def best(self) -> Member:
        return self.members[0] if self.members else None


class CachedScorer:
    """Wrap a batched scorer with a canonical-SMILES cache."""

    def __init__(self, scorer: Scorer):
        self.scorer = scorer
        self.cache: dict[str, float] = {}

    def __call__(self, molecules: Sequence[Molecule]) -> np.ndarray:
        todo: dict[str, Molecule] = {}
        for m in molecules:
            if m.smiles not in self.cache and m.smiles not in todo:
                todo[m.smiles] = m
        if todo:
            values = np.asarray(self.scorer(list(todo.values())), dtype=float)
            for smi, v in zip(todo, values):
                self.cache[smi] = float(v)
        return np.array([self.cache[m.smiles] for m in molecules])


def _rank_key(member: Member):
    return (-member.score, member.smiles)


def _truncate(members: Iterable[Member], size: int) -> list[Member]:
    """Dedup by SMILES (first occurrence wins), then keep the top ``size``."""
    seen = set()
    unique = []
    for m in members:
        if m.smiles not in seen:
            seen.add(m.smiles)
            unique.append(m)
    unique.sort(key=_rank_key)
    return unique[:size]


def _make_members(strings: Sequence[SelfiesString], scorer) -> list[Member]:
    mols = [decode(s) for s in strings]
    scores = scorer(mols)
    return [Member(tuple(s), m.smiles, float(v)) for s, m, v in zip(strings, mols, scores)]


def init_populations(seed_molecules: Sequence[Molecule], cfg: GAConfig, scorer: Scorer,
                     rng: np.random.Generator) -> tuple[Population, Population]:
    """Both populations start from the top-scoring encodable seeds.

    With fewer distinct seeds than ``population_size`` the population is
    padded by mutating uniformly chosen members until it is full.

    Raises
    ------
    EmptySeed
        If no seed molecule can be encoded.
    """
    by_smiles: dict[str, SelfiesString] = {}
    for m in seed_molecules:
        if m.smiles in by_smiles:
            continue
        try:
            by_smiles[m.smiles] = encode(m)
        except Inexpressible:
            continue
    if not by_smiles:
        raise EmptySeed("no encodable seed molecules")
    smiles = sorted(by_smiles)
    members = _make_members([by_smiles[s] for s in smiles], scorer)
    members = _truncate(members, cfg.population_size)
    seen = {m.smiles for m in members}
    attempts = 0
    while len(members) < cfg.population_size:
        attempts += 1
        if attempts > 1000 * cfg.population_size:
            raise EmptySeed("could not pad the population with distinct mutants")
        parent = members[rng.integers(len(members))]
        child = mutate(parent.selfies, rng)
        mol = decode(child)
        if mol.smiles in seen:
            continue
        seen.add(mol.smiles)
        members.extend(_make_members([child], scorer))
    members.sort(key=_rank_key)
    return Population("exploration", list(members)), Population("exploitation", list(members))


def _explore(pop: Population, scorer, cfg: GAConfig, rng) -> tuple[list[Member], list[Member]]:
    size = len(pop)
    n_cross = int(round(cfg.crossover_fraction * size)) if size > 1 else 0
    children = []
    for _ in range(n_cross):
        i, j = rng.choice(size, size=2, replace=False)
        children.append(crossover(pop.members[i].selfies, pop.members[j].selfies, rng, cfg.joint))
    for _ in range(size - n_cross):
        children.append(mutate(pop.members[rng.integers(size)].selfies, rng))
    offspring = _make_members(children, scorer)
    return _truncate(pop.members + offspring, size), offspring


def _exploit(pop: Population, scorer, cfg: GAConfig, rng) -> tuple[list[Member], list[Member]]:
    size = len(pop)
    n_mut = cfg.exploitation_mutants or size
    parents = [pop.members[rng.integers(size)] for _ in range(n_mut)]
    mutants = [mutate(p.selfies, rng) for p in parents]
    offspring = _make_members(mutants, scorer)
    ranked = []
    for parent, child in zip(parents, offspring):
        sim = tanimoto(parent.molecule.fingerprint, child.molecule.fingerprint)
        ranked.append((-sim, -child.score, child.smiles, child))
    ranked.sort(key=lambda t: t[:3])
    survivors, seen = [], set()
    for *_, child in ranked:
        if child.smiles not in seen and len(survivors) < size:
            seen.add(child.smiles)
            survivors.append(child)
    # too few distinct mutants: keep the best parents
    for m in pop.members:
        if len(survivors) >= size:
            break
        if m.smiles not in seen:
            seen.add(m.smiles)
            survivors.append(m)
    survivors.sort(key=_rank_key)
    return survivors, offspring


def exchange(a: Population, b: Population, count: int) -> tuple[Population, Population]:
    """Offer each population's top ``count`` members to the other.

    Each side keeps the best ``len`` members of itself plus the offers, so
    sizes are conserved and no duplicate is introduced.
    """
    if count <= 0:
        return a, b
    top_a, top_b = a.members[:count], b.members[:count]
    new_a = _truncate(a.members + top_b, len(a))
    new_b = _truncate(b.members + top_a, len(b))
    return Population(a.kind, new_a), Population(b.kind, new_b)


def step_generation(pops: tuple[Population, Population], scorer: Scorer, cfg: GAConfig,
                    rng: np.random.Generator) -> tuple[tuple[Population, Population], list[Member]]:
    """Advance both populations one generation.

    Returns the new populations and the distinct offspring (by canonical
    SMILES, in creation order) produced this generation.
    """
    explore_pop, exploit_pop = pops
    explore_members, explore_kids = _explore(explore_pop, scorer, cfg, rng)
    exploit_members, exploit_kids = _exploit(exploit_pop, scorer, cfg, rng)
    new_explore, new_exploit = exchange(
        Population(explore_pop.kind, explore_members),
        Population(exploit_pop.kind, exploit_members),
        cfg.exchange,
    )
    seen, new = set(), []
    for m in explore_kids + exploit_kids:
        if m.smiles not in seen:
            seen.add(m.smiles)
            new.append(m)
    return (new_explore, new_exploit), new


@dataclass(frozen=True)
class ArchiveEntry:
    smiles: str
    selfies: SelfiesString
    generation: int
    score: float

    def to_dict(self):
        return {"smiles": self.smiles, "selfies": join_selfies(self.selfies),
                "generation": self.generation, "score": self.score}


@dataclass
class GenerationArchive:
    """Distinct generated molecules ordered by (generation, SMILES)."""

    entries: list[ArchiveEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def molecules(self) -> list[Molecule]:
        return [decode(e.selfies) for e in self.entries]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.entries)


def run(seeds: Sequence[Molecule], scorer: Scorer, cfg: GAConfig,
        rng: np.random.Generator | None = None, on_generation=None) -> GenerationArchive:
    """Run the GA and collect every distinct molecule it generated.

    The archive drops duplicates, non-CHON molecules and molecules with a
    nonzero net formal charge.  Scores are the (cached) scorer values.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if cfg.generations == 0:
        return GenerationArchive()
    cached = scorer if isinstance(scorer, CachedScorer) else CachedScorer(scorer)
    pops = init_populations(seeds, cfg, cached, rng)
    first_seen: dict[str, ArchiveEntry] = {}
    for gen in range(1, cfg.generations + 1):
        pops, new = step_generation(pops, cached, cfg, rng)
        for m in new:
            if m.smiles not in first_seen:
                first_seen[m.smiles] = ArchiveEntry(m.smiles, m.selfies, gen, m.score)
        if on_generation is not None:
            on_generation(gen, pops)
    entries = []
    for e in first_seen.values():
        mol = decode(e.selfies)
        if is_chon(mol) and net_formal_charge(mol) == 0:
            entries.append(e)
    entries.sort(key=lambda e: (e.generation, e.smiles))
    return GenerationArchive(entries)
