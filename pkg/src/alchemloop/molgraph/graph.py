"""Kekulé molecular graphs over C, H, N, O with an explicit valence model."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

from alchemloop.errors import InvalidMolecule, ValenceError

ELEMENTS = ("C", "N", "O", "H")
ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}
ATOMIC_MASS = {"C": 12.011, "H": 1.008, "N": 14.007, "O": 15.999}
_BASE_VALENCE = {"C": 4, "N": 3, "O": 2, "H": 1}


def valence(element: str, charge: int = 0) -> int:
    """Total bond order (including hydrogens) an atom must carry.

    N and O gain one bond per positive charge and lose one per negative
    charge ([N+] -> 4, [O-] -> 1); C and H lose one per unit of either sign.

    Raises
    ------
    ValenceError
        If the element is unknown or the charge leaves no valid valence.
    """
    try:
        base = _BASE_VALENCE[element]
    except KeyError:
        raise ValenceError(f"unsupported element {element!r}") from None
    if element in ("N", "O"):
        v = base + charge
    else:
        v = base - abs(charge)
    if v < 0:
        raise ValenceError(f"no valence for {element} with charge {charge:+d}")
    return v


class Atom(NamedTuple):
    element: str
    charge: int = 0
    hydrogens: int = 0


class Bond(NamedTuple):
    a: int
    b: int
    order: int = 1


@dataclass(frozen=True)
class Molecule:
    """Connected heavy-atom graph with implicit hydrogen counts.

    Bonds are stored with ``a < b`` and sorted, so two ``Molecule`` values
    compare equal only when they have the same atom numbering.  Use
    :func:`alchemloop.molgraph.canonical_smiles` for isomorphism-level
    identity.
    """

    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...] = ()

    def __post_init__(self):
        atoms = tuple(Atom(*a) for a in self.atoms)
        bonds = []
        for bond in self.bonds:
            a, b, order = Bond(*bond)
            if a > b:
                a, b = b, a
            bonds.append(Bond(a, b, order))
        bonds.sort()
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "bonds", tuple(bonds))
        self._validate()

    def _validate(self):
        n = len(self.atoms)
        if n == 0:
            raise InvalidMolecule("molecule has no atoms")
        used = [0] * n
        seen = set()
        for a, b, order in self.bonds:
            if not (0 <= a < n and 0 <= b < n):
                raise InvalidMolecule(f"bond ({a}, {b}) out of range for {n} atoms")
            if a == b:
                raise InvalidMolecule(f"self-loop on atom {a}")
            if (a, b) in seen:
                raise InvalidMolecule(f"duplicate bond ({a}, {b})")
            if order not in (1, 2, 3):
                raise InvalidMolecule(f"bond order {order} not in 1..3")
            seen.add((a, b))
            used[a] += order
            used[b] += order
        for i, atom in enumerate(self.atoms):
            if atom.hydrogens < 0:
                raise ValenceError(f"atom {i} has negative hydrogen count")
            expected = valence(atom.element, atom.charge)
            if used[i] + atom.hydrogens != expected:
                raise ValenceError(
                    f"atom {i} ({atom.element}{atom.charge:+d}) carries "
                    f"{used[i]} bond order + {atom.hydrogens} H, expected {expected}"
                )
        if n > 1 and len(self._reachable_from_zero()) != n:
            raise InvalidMolecule("molecular graph is disconnected")

    def _reachable_from_zero(self):
        adj = self.adjacency
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    def __len__(self):
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Per-atom tuple of ``(neighbor, bond_order)`` pairs."""
        adj = [[] for _ in self.atoms]
        for a, b, order in self.bonds:
            adj[a].append((b, order))
            adj[b].append((a, order))
        return tuple(tuple(sorted(x)) for x in adj)

    @cached_property
    def bond_orders(self) -> dict[tuple[int, int], int]:
        return {(a, b): o for a, b, o in self.bonds}

    def bond_order(self, i: int, j: int) -> int:
        """Order of the bond between ``i`` and ``j``; 0 when unbonded."""
        if i > j:
            i, j = j, i
        return self.bond_orders.get((i, j), 0)

    @property
    def elements(self) -> tuple[str, ...]:
        return tuple(a.element for a in self.atoms)

    @cached_property
    def total_hydrogens(self) -> int:
        return sum(a.hydrogens for a in self.atoms)

    @cached_property
    def molecular_weight(self) -> float:
        # per-element counts keep the sum independent of atom order
        el = self.elements
        w = sum(ATOMIC_MASS[e] * el.count(e) for e in sorted(set(el)))
        return w + ATOMIC_MASS["H"] * self.total_hydrogens

    @cached_property
    def ring_bonds(self) -> frozenset[tuple[int, int]]:
        """Bonds that lie on at least one cycle (i.e. are not bridges)."""
        return frozenset((a, b) for a, b, _ in self.bonds if self._cycle_through(a, b))

    def _cycle_through(self, a, b):
        return self._shortest_path_avoiding(a, b) is not None

    def _shortest_path_avoiding(self, a, b):
        # BFS from a to b without using the direct a-b edge
        adj = self.adjacency
        prev = {a: None}
        queue = deque([a])
        while queue:
            u = queue.popleft()
            for v, _ in adj[u]:
                if v in prev or (u == a and v == b):
                    continue
                prev[v] = u
                if v == b:
                    path = [b]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path
                queue.append(v)
        return None

    @cached_property
    def rings(self) -> tuple[tuple[int, ...], ...]:
        """Distinct smallest cycles through each ring bond, as sorted atom tuples."""
        found = set()
        for a, b, _ in self.bonds:
            path = self._shortest_path_avoiding(a, b)
            if path is not None:
                found.add(tuple(sorted(path)))
        return tuple(sorted(found, key=lambda r: (len(r), r)))

    @property
    def cyclomatic_number(self) -> int:
        return len(self.bonds) - len(self.atoms) + 1

    @cached_property
    def smiles(self) -> str:
        """Canonical SMILES (computed once per instance)."""
        from alchemloop.molgraph.smiles import write_smiles

        return write_smiles(self)

    @cached_property
    def fingerprint(self):
        from alchemloop.molgraph.features import fingerprint

        return fingerprint(self)


def net_formal_charge(m: Molecule) -> int:
    return sum(a.charge for a in m.atoms)


def is_chon(m: Molecule) -> bool:
    return all(a.element in _BASE_VALENCE for a in m.atoms)


def relabel(m: Molecule, permutation) -> Molecule:
    """Return ``m`` with atom ``i`` moved to position ``permutation[i]``."""
    n = len(m.atoms)
    atoms = [None] * n
    for old, new in enumerate(permutation):
        atoms[new] = m.atoms[old]
    bonds = [Bond(permutation[a], permutation[b], o) for a, b, o in m.bonds]
    return Molecule(tuple(atoms), tuple(bonds))
