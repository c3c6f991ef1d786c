"""Ground-truth evaluators: the oracle interface, a deterministic synthetic
oracle, and the heat-of-sublimation / Hess's-law conversion.

The synthetic oracle is a structure-driven stand-in for a quantum-chemistry
pipeline.  Its constants are arbitrary and collected in
:class:`SyntheticOracleConfig`; they are chosen so that stability depends on
a few local motifs and both properties reward nitrogen/oxygen-rich,
hydrogen-poor structures, not to match any experimental number.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from alchemloop.errors import OracleFailure, RankDeficient
from alchemloop.molgraph import Molecule, net_formal_charge, nitro_group_count, parse_smiles


class FailureReason(str, Enum):
    NONE = "None"
    GEOMETRY_FAILED = "GeometryFailed"
    CONNECTIVITY_CHANGED = "ConnectivityChanged"
    IMAGINARY_FREQUENCY = "ImaginaryFrequency"


@dataclass(frozen=True)
class OracleResult:
    """Verdict for one molecule; properties are present iff it is stable."""

    stable: bool
    density: float | None = None
    solid_hof: float | None = None
    failure_reason: FailureReason = FailureReason.NONE

    def __post_init__(self):
        reason = FailureReason(self.failure_reason)
        object.__setattr__(self, "failure_reason", reason)
        has_props = self.density is not None and self.solid_hof is not None
        if self.stable != (reason is FailureReason.NONE) or self.stable != has_props:
            raise ValueError("stable, failure_reason and properties disagree")
        if self.stable:
            if not (math.isfinite(self.density) and math.isfinite(self.solid_hof)):
                raise ValueError("oracle properties must be finite")
            if self.density <= 0:
                raise ValueError("density must be positive")
        elif self.density is not None or self.solid_hof is not None:
            raise ValueError("unstable results carry no properties")

    def to_dict(self):
        return {
            "stable": self.stable,
            "density": self.density,
            "hof": self.solid_hof,
            "reason": self.failure_reason.value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(bool(d["stable"]), d.get("density"), d.get("hof"), FailureReason(d.get("reason", "None")))


# ---------------------------------------------------------------------------
# heat of sublimation


@dataclass(frozen=True)
class SurfaceProps:
    """Surface descriptors of the sublimation model.

    Attributes
    ----------
    sa : float
        Surface area (arbitrary units), strictly positive.
    sigma_tot_sq : float
        Variability of the surface electrostatic potential, non-negative.
    nu : float
        Balance between positive and negative surface charge, in [0, 0.25].
    """

    sa: float
    sigma_tot_sq: float
    nu: float

    def __post_init__(self):
        if not self.sa > 0:
            raise ValueError(f"surface area must be positive, got {self.sa}")
        if not self.sigma_tot_sq >= 0:
            raise ValueError(f"sigma_tot_sq must be non-negative, got {self.sigma_tot_sq}")
        if not 0.0 <= self.nu <= 0.25:
            raise ValueError(f"nu must lie in [0, 0.25], got {self.nu}")


@dataclass(frozen=True)
class SublimationCoeffs:
    a: float
    b: float
    c: float
    rss: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.a, self.b, self.c)):
            raise ValueError("sublimation coefficients must be finite")


def _basis(p: SurfaceProps) -> tuple[float, float, float]:
    return (p.sa, math.sqrt(p.sigma_tot_sq * p.nu), 1.0)


def heat_of_sublimation(p: SurfaceProps, k: SublimationCoeffs) -> float:
    """a * SA + b * sqrt(sigma_tot^2 * nu) + c  (kcal/mol)."""
    return k.a * p.sa + k.b * math.sqrt(p.sigma_tot_sq * p.nu) + k.c


def solid_hof(gas_hof: float, h_sub: float) -> float:
    """Hess's law: solid heat of formation = gas heat of formation - sublimation."""
    return gas_hof - h_sub


def fit_sublimation_coeffs(records: Sequence[tuple[SurfaceProps, float]]) -> SublimationCoeffs:
    """Ordinary least squares over the basis ``{SA, sqrt(sigma^2 nu), 1}``.

    Raises
    ------
    RankDeficient
        With fewer than three records or collinear basis columns.
    """
    if len(records) < 3:
        raise RankDeficient(f"need at least 3 records, got {len(records)}")
    X = np.array([_basis(p) for p, _ in records], dtype=float)
    y = np.array([h for _, h in records], dtype=float)
    if np.linalg.matrix_rank(X) < 3:
        raise RankDeficient("surface-property design matrix has rank < 3")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    rss = float(np.sum((X @ coef - y) ** 2))
    return SublimationCoeffs(float(coef[0]), float(coef[1]), float(coef[2]), rss)


# ---------------------------------------------------------------------------
# synthetic oracle

# (element pair, order) -> gas-phase contribution in kcal/mol; H handled separately
_DEFAULT_BOND_TERMS = {
    "CC1": -2.0, "CC2": 12.0, "CC3": 27.0,
    "CN1": 4.0, "CN2": 10.0, "CN3": 25.0,
    "CO1": -22.0, "CO2": -28.0,
    "NN1": 45.0, "NN2": 20.0, "NN3": 30.0,
    "NO1": 10.0, "NO2": 10.0,
    "OO1": 40.0,
}
_DEFAULT_H_TERMS = {"C": -4.0, "N": 2.0, "O": -10.0}
_DEFAULT_RING_STRAIN = {3: 45.0, 4: 40.0, 5: 10.0, 6: 0.0, 7: 8.0}

# reference molecules for the sublimation fit, with arbitrary target values
CALIBRATION_SET = (
    ("C[N+](=O)[O-]", 9.9),
    ("CCO", 10.2),
    ("CC(=O)C", 9.6),
    ("NC(N)=O", 21.0),
    ("OC(=O)C(O)=O", 23.5),
    ("C1N([N+](=O)[O-])CN([N+](=O)[O-])CN1[N+](=O)[O-]", 32.0),
    ("CCCCCC", 11.9),
    ("CC(C)(C)C", 5.3),
    ("NCCN", 15.0),
    ("OCC(O)CO", 22.5),
    ("C(C(CO[N+](=O)[O-])O[N+](=O)[O-])O[N+](=O)[O-]", 24.0),
    ("CN=[N+]=N", 8.0),
)


@dataclass(frozen=True)
class SyntheticOracleConfig:
    """Every constant of the synthetic oracle.  All values are arbitrary."""

    volumes: dict = field(default_factory=lambda: {"C": 13.9, "H": 6.8, "N": 11.8, "O": 10.4})
    reference_density: float = 0.9  # methane lands here
    nitro_density_bonus: float = 0.02
    bond_terms: dict = field(default_factory=lambda: dict(_DEFAULT_BOND_TERMS))
    h_terms: dict = field(default_factory=lambda: dict(_DEFAULT_H_TERMS))
    ring_strain: dict = field(default_factory=lambda: dict(_DEFAULT_RING_STRAIN))
    large_ring_strain: float = 9.7
    strain_threshold: float = 50.0
    vicinal_term: float = 0.0  # per pair of hetero-hetero bonds sharing an atom
    sa_per_heavy: float = 12.0
    sa_per_h: float = 3.0
    sigma_scale: float = 400.0

    def to_dict(self):
        d = asdict(self)
        d["ring_strain"] = {str(k): v for k, v in self.ring_strain.items()}
        return d


def strain_score(m: Molecule, cfg: SyntheticOracleConfig | None = None) -> float:
    """Sum of per-ring strain penalties over the smallest cycles."""
    cfg = cfg or SyntheticOracleConfig()
    return sum(cfg.ring_strain.get(len(r), cfg.large_ring_strain) for r in m.rings)


def has_peroxide_chain(m: Molecule) -> bool:
    """An O-O bond where either oxygen has a further oxygen neighbor."""
    el = m.elements
    for a, b, _ in m.bonds:
        if el[a] == "O" and el[b] == "O":
            for x in (a, b):
                other = b if x == a else a
                if any(el[j] == "O" and j != other for j, _ in m.adjacency[x]):
                    return True
    return False


def longest_nn_single_chain(m: Molecule) -> int:
    """Number of bonds in the longest simple path of N-N single bonds."""
    el = m.elements
    nbrs = {
        i: [j for j, o in m.adjacency[i] if o == 1 and el[j] == "N"]
        for i in range(len(m.atoms)) if el[i] == "N"
    }
    best = 0
    # N-N subgraphs are tiny, so exhaustive path search is cheap
    for start in nbrs:
        stack = [(start, 0, frozenset([start]))]
        while stack:
            u, length, seen = stack.pop()
            best = max(best, length)
            for v in nbrs[u]:
                if v not in seen:
                    stack.append((v, length + 1, seen | {v}))
    return best


def vicinal_hetero_pairs(m: Molecule) -> int:
    """Pairs of N/O-N/O bonds that share an atom (a second-order group term)."""
    el = m.elements
    total = 0
    for i in range(len(m.atoms)):
        if el[i] == "C":
            continue
        k = sum(1 for j, _ in m.adjacency[i] if el[j] != "C")
        total += k * (k - 1) // 2
    return total


def surface_props(m: Molecule, cfg: SyntheticOracleConfig | None = None) -> SurfaceProps:
    """Descriptor proxies for the surface quantities.

    SA grows with heavy atoms (and hydrogens); sigma^2 is the scaled square
    of a polarity index (heteroatom fraction plus formal-charge separation);
    nu is p*q/(p+q)^2 for positive sites p (hydrogens, cations) and negative
    sites q (O, neutral or anionic N).
    """
    cfg = cfg or SyntheticOracleConfig()
    heavy = len(m.atoms)
    n_o = sum(1 for a in m.atoms if a.element == "O")
    n_n = sum(1 for a in m.atoms if a.element == "N")
    charged = sum(abs(a.charge) for a in m.atoms)
    sa = cfg.sa_per_heavy * heavy + cfg.sa_per_h * m.total_hydrogens
    polarity = (n_o + 0.6 * n_n + 0.5 * charged) / heavy
    sigma_sq = cfg.sigma_scale * polarity ** 2
    p = m.total_hydrogens + sum(1 for a in m.atoms if a.charge > 0)
    q = n_o + sum(1 for a in m.atoms if a.element == "N" and a.charge <= 0)
    nu = p * q / (p + q) ** 2 if p + q else 0.0
    return SurfaceProps(sa, sigma_sq, nu)


def gas_hof(m: Molecule, cfg: SyntheticOracleConfig | None = None) -> float:
    """Bond-additivity gas-phase heat of formation plus ring strain."""
    cfg = cfg or SyntheticOracleConfig()
    el = m.elements
    total = 0.0
    for a, b, order in m.bonds:
        pair = "".join(sorted((el[a], el[b]), key="CNO".index))
        total += cfg.bond_terms.get(f"{pair}{order}", 0.0)
    for atom in m.atoms:
        total += cfg.h_terms.get(atom.element, 0.0) * atom.hydrogens
    if cfg.vicinal_term:
        total += cfg.vicinal_term * vicinal_hetero_pairs(m)
    return total + strain_score(m, cfg)


def density(m: Molecule, cfg: SyntheticOracleConfig | None = None) -> float:
    """K * MW / sum(volumes) * (1 + bonus * nitro groups), K fixed by methane."""
    cfg = cfg or SyntheticOracleConfig()
    v = cfg.volumes
    k = cfg.reference_density * (v["C"] + 4 * v["H"]) / (12.011 + 4 * 1.008)
    el = m.elements
    volume = sum(v[e] * el.count(e) for e in sorted(set(el))) + v["H"] * m.total_hydrogens
    return k * m.molecular_weight / volume * (1 + cfg.nitro_density_bonus * nitro_group_count(m))


def instability_reason(m: Molecule, cfg: SyntheticOracleConfig | None = None) -> FailureReason:
    """First motif rule that fires, or ``FailureReason.NONE``."""
    cfg = cfg or SyntheticOracleConfig()
    if has_peroxide_chain(m) or longest_nn_single_chain(m) >= 3:
        return FailureReason.IMAGINARY_FREQUENCY
    if net_formal_charge(m) != 0:
        return FailureReason.CONNECTIVITY_CHANGED
    if strain_score(m, cfg) > cfg.strain_threshold:
        return FailureReason.GEOMETRY_FAILED
    return FailureReason.NONE


class SyntheticOracle:
    """Deterministic structure-driven oracle.

    The sublimation coefficients are fitted once, at construction, on
    :data:`CALIBRATION_SET`.
    """

    name = "synthetic"

    def __init__(self, config: SyntheticOracleConfig | None = None):
        self.config = config or SyntheticOracleConfig()
        records = [(surface_props(parse_smiles(s), self.config), h) for s, h in CALIBRATION_SET]
        self.coeffs = fit_sublimation_coeffs(records)

    def evaluate(self, m: Molecule) -> OracleResult:
        reason = instability_reason(m, self.config)
        if reason is not FailureReason.NONE:
            return OracleResult(False, failure_reason=reason)
        h_sub = heat_of_sublimation(surface_props(m, self.config), self.coeffs)
        return OracleResult(True, density(m, self.config), solid_hof(gas_hof(m, self.config), h_sub))

    __call__ = evaluate

    def evaluate_many(self, molecules: Iterable[Molecule]) -> list[OracleResult]:
        return [self.evaluate(m) for m in molecules]


def synthetic_evaluate(m: Molecule) -> OracleResult:
    return _default_oracle().evaluate(m)


_DEFAULT = None


def _default_oracle():
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = SyntheticOracle()
    return _DEFAULT


class ExternalOracle:
    """Oracle backed by a child process speaking JSON lines.

    Each request line is ``{"id": int, "smiles": str}``; each reply line is
    ``{"id", "stable", "density", "hof", "reason"}``.  A batch is sent in one
    go and the replies are matched back by id, so the child may answer in
    any order.
    """

    name = "external"

    def __init__(self, command: str | Sequence[str], timeout: float = 600.0):
        self.command = command
        self.timeout = timeout

    def evaluate(self, m: Molecule) -> OracleResult:
        return self.evaluate_many([m])[0]

    __call__ = evaluate

    def evaluate_many(self, molecules: Iterable[Molecule]) -> list[OracleResult]:
        molecules = list(molecules)
        if not molecules:
            return []
        payload = "".join(
            json.dumps({"id": i, "smiles": m.smiles}) + "\n" for i, m in enumerate(molecules)
        )
        try:
            proc = subprocess.run(
                self.command, input=payload, capture_output=True, text=True,
                timeout=self.timeout, shell=isinstance(self.command, str),
            )
        except (OSError, subprocess.TimeoutExpired) as err:
            raise OracleFailure(f"external oracle did not complete: {err}") from err
        if proc.returncode != 0:
            raise OracleFailure(f"external oracle exited with {proc.returncode}: {proc.stderr.strip()}")
        results: dict[int, OracleResult] = {}
        for lineno, line in enumerate(proc.stdout.splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                results[int(d["id"])] = OracleResult.from_dict(d)
            except (ValueError, KeyError, TypeError) as err:
                raise OracleFailure(f"bad oracle reply on line {lineno}: {err}") from err
        missing = [i for i in range(len(molecules)) if i not in results]
        if missing:
            raise OracleFailure(f"external oracle gave no verdict for ids {missing[:5]}")
        return [results[i] for i in range(len(molecules))]
