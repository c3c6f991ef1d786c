"""Closed CHON SELFIES alphabet: total decoding, encoding, and GA operators.

Decoding follows the SELFIES 2.x derivation rules restricted to the
alphabet below, so any string over these tokens means the same molecule
here as in the reference ``selfies`` package.  Tokens that appear as
branch/ring length operands use the reference index code; tokens outside
that code count as 0.
"""

from __future__ import annotations

import re
from functools import lru_cache
from typing import Sequence

import numpy as np

from alchemloop.errors import Inexpressible, UnknownToken
from alchemloop.molgraph import Atom, Bond, Molecule, tanimoto

SelfiesString = tuple[str, ...]

# token -> (bond order into the atom, element, charge, bonding capacity)
ATOM_TOKENS = {
    "[C]": (1, "C", 0, 4),
    "[=C]": (2, "C", 0, 4),
    "[#C]": (3, "C", 0, 4),
    "[N]": (1, "N", 0, 3),
    "[=N]": (2, "N", 0, 3),
    "[#N]": (3, "N", 0, 3),
    "[O]": (1, "O", 0, 2),
    "[=O]": (2, "O", 0, 2),
    "[N+1]": (1, "N", 1, 4),
    "[O-1]": (1, "O", -1, 1),
}
# token -> (bond order, number of index operands)
BRANCH_TOKENS = {
    f"[{b}Branch{n}]": (order, n) for n in (1, 2, 3) for b, order in (("", 1), ("=", 2), ("#", 3))
}
RING_TOKENS = {
    f"[{b}Ring{n}]": (order, n) for n in (1, 2, 3) for b, order in (("", 1), ("=", 2), ("#", 3))
}
ALPHABET: tuple[str, ...] = tuple(ATOM_TOKENS) + tuple(BRANCH_TOKENS) + tuple(RING_TOKENS)

INDEX_ALPHABET = (
    "[C]", "[Ring1]", "[Ring2]",
    "[Branch1]", "[=Branch1]", "[#Branch1]",
    "[Branch2]", "[=Branch2]", "[#Branch2]",
    "[O]", "[N]", "[=N]", "[=C]", "[#C]", "[S]", "[P]",
)
INDEX_CODE = {t: i for i, t in enumerate(INDEX_ALPHABET)}

_ATOM_FOR = {(e, q, o): t for t, (o, e, q, _) in ATOM_TOKENS.items()}
_TOKEN_RE = re.compile(r"\[[^\[\]]*\]")


def split_selfies(text: str) -> SelfiesString:
    """``"[C][=O]"`` -> ``("[C]", "[=O]")``; validates against the alphabet."""
    tokens = tuple(_TOKEN_RE.findall(text))
    if "".join(tokens) != text.strip():
        raise UnknownToken(f"malformed SELFIES text {text!r}")
    for t in tokens:
        if t not in ALPHABET:
            raise UnknownToken(f"unknown SELFIES token {t!r}")
    return tokens


def join_selfies(s: Sequence[str]) -> str:
    return "".join(s)


def _index_value(tokens: Sequence[str | None]) -> int:
    value = 0
    for t in tokens:
        value = value * 16 + INDEX_CODE.get(t, 0)
    return value


# ---------------------------------------------------------------------------
# decoding


def decode(s: Sequence[str]) -> Molecule:
    """Decode a token sequence into a valence-valid molecule.

    Never fails on alphabet tokens: bond orders are capped by the remaining
    capacity of both ends, inert symbols are skipped, and an empty
    derivation yields methane.

    Raises
    ------
    UnknownToken
        If any token is outside :data:`ALPHABET`.
    """
    return _decode_cached(tuple(s))


@lru_cache(maxsize=262144)
def _decode_cached(s: SelfiesString) -> Molecule:
    for t in s:
        if t not in ATOM_TOKENS and t not in BRANCH_TOKENS and t not in RING_TOKENS:
            raise UnknownToken(f"unknown SELFIES token {t!r}")
    atoms: list[list] = []  # [element, charge, capacity, used]
    bonds: dict[tuple[int, int], int] = {}
    rings: list[tuple[int, int, int]] = []
    pos = _derive(s, 0, atoms, bonds, rings, float("inf"), 0, None)
    assert pos <= len(s)

    for left, right, order in rings:
        if left == right:
            continue
        lfree = atoms[left][2] - atoms[left][3]
        rfree = atoms[right][2] - atoms[right][3]
        if lfree <= 0 or rfree <= 0:
            continue
        order = min(order, lfree, rfree)
        key = (min(left, right), max(left, right))
        if key in bonds:
            new = min(bonds[key] + order, 3)
            delta = new - bonds[key]
            bonds[key] = new
        else:
            bonds[key] = order
            delta = order
        atoms[left][3] += delta
        atoms[right][3] += delta

    if not atoms:
        return Molecule((Atom("C", 0, 4),))
    mol_atoms = tuple(Atom(e, q, cap - used) for e, q, cap, used in atoms)
    mol_bonds = tuple(Bond(a, b, o) for (a, b), o in bonds.items())
    return Molecule(mol_atoms, mol_bonds)


def _derive(s, pos, atoms, bonds, rings, max_derive, state, prev):
    """Derive one chain starting at ``pos``; returns the new position.

    ``state`` is the remaining bonding capacity of ``prev`` (0 before the
    first atom; ``None`` once the chain is saturated).
    """
    n_derived = 0
    n = len(s)
    while state is not None and n_derived < max_derive:
        if pos >= n:
            break
        token = s[pos]
        pos += 1
        n_derived += 1
        if token in BRANCH_TOKENS:
            btype, n_idx = BRANCH_TOKENS[token]
            if state <= 1:
                next_state = state
            else:
                binit = min(state - 1, btype)
                next_state = state - binit
                idx_tokens = [s[pos + k] if pos + k < n else None for k in range(n_idx)]
                pos = min(pos + n_idx, n)
                q = _index_value(idx_tokens)
                before = pos
                pos = _derive(s, pos, atoms, bonds, rings, q + 1, binit, prev)
                n_derived += n_idx + (pos - before)
        elif token in RING_TOKENS:
            rtype, n_idx = RING_TOKENS[token]
            if state == 0:
                next_state = state
            else:
                order = min(rtype, state)
                left = state - order
                next_state = None if left == 0 else left
                idx_tokens = [s[pos + k] if pos + k < n else None for k in range(n_idx)]
                pos = min(pos + n_idx, n)
                n_derived += n_idx
                q = _index_value(idx_tokens)
                target = max(0, prev - (q + 1))
                rings.append((target, prev, order))
        else:
            order, element, charge, cap = ATOM_TOKENS[token]
            if state == 0:
                order = 0
            order = min(order, state, cap)
            left = cap - order
            next_state = None if left == 0 else left
            idx = len(atoms)
            atoms.append([element, charge, cap, order])
            if order > 0:
                bonds[(prev, idx)] = order
                atoms[prev][3] += order
            prev = idx
        if next_state is None:
            break
        state = next_state
    # the remainder of a bounded branch is consumed even when unused
    while n_derived < max_derive and pos < n:
        pos += 1
        n_derived += 1
    return pos


# ---------------------------------------------------------------------------
# encoding


def _index_tokens(q: int) -> list[str]:
    if q < 0:
        raise Inexpressible("negative index operand")
    digits = []
    while True:
        digits.append(q % 16)
        q //= 16
        if q == 0:
            break
    if len(digits) > 3:
        raise Inexpressible("index operand needs more than three symbols")
    tokens = [INDEX_ALPHABET[d] for d in reversed(digits)]
    for t in tokens:
        if t not in ATOM_TOKENS and t not in BRANCH_TOKENS and t not in RING_TOKENS:
            raise Inexpressible(f"index digit {t} has no CHON token")
    return tokens


def encode(m: Molecule) -> SelfiesString:
    """Encode a molecule as SELFIES tokens that decode back to it.

    Several depth-first orderings are tried (each atom as root, neighbor
    order ascending then descending) because some branch lengths and ring
    spans need index digits that the CHON alphabet lacks.

    Raises
    ------
    Inexpressible
        When no tried ordering can be written (e.g. a ring spanning more
        atoms than three index symbols can address).
    """
    for atom in m.atoms:
        if (atom.element, atom.charge, 1) not in _ATOM_FOR:
            raise Inexpressible(f"no SELFIES token for {atom.element}{atom.charge:+d}")
    n = len(m.atoms)
    # [N+1] only has a single-bond token, so an N+ carrying a multiple bond
    # must be the root (or close that bond as a ring); try those first
    def root_key(i):
        multi = m.atoms[i].charge != 0 and any(o > 1 for _, o in m.adjacency[i])
        return (not multi, len(m.adjacency[i]) != 1, i)

    roots = sorted(range(n), key=root_key)
    last_error: Inexpressible | None = None
    attempts = 0
    for root in roots:
        for reverse in (False, True):
            attempts += 1
            try:
                return _encode_from(m, root, reverse)
            except Inexpressible as err:
                last_error = err
            if attempts >= 16:
                break
        if attempts >= 16:
            break
    raise Inexpressible(str(last_error))


def _bond_prefix(order: int) -> str:
    return {1: "", 2: "=", 3: "#"}[order]


def _encode_from(m: Molecule, root: int, reverse: bool) -> SelfiesString:
    adj = m.adjacency
    n = len(m.atoms)
    nbrs = [sorted((j for j, _ in adj[i]), reverse=reverse) for i in range(n)]

    # DFS discovery order == derivation order: branch children first, the
    # last child continues the chain
    order = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    closings: list[list[int]] = [[] for _ in range(n)]
    seen_edges = set()
    postorder = []
    counter = 0
    order[root] = 0
    stack = [(root, iter(nbrs[root]))]
    while stack:
        u, it = stack[-1]
        for v in it:
            key = (min(u, v), max(u, v))
            if order[v] < 0:
                counter += 1
                order[v] = counter
                children[u].append(v)
                seen_edges.add(key)
                stack.append((v, iter(nbrs[v])))
                break
            if key not in seen_edges:
                seen_edges.add(key)
                closings[u].append(v)
        else:
            postorder.append(u)
            stack.pop()

    ring_tokens: list[list[str]] = [[] for _ in range(n)]
    for u in range(n):
        for v in sorted(closings[u], key=order.__getitem__):
            idx = _index_tokens(order[u] - order[v] - 1)
            ring_tokens[u].append(f"[{_bond_prefix(m.bond_order(u, v))}Ring{len(idx)}]")
            ring_tokens[u].extend(idx)

    # token count of each subtree, bottom-up
    size = [0] * n
    headers: dict[int, list[str]] = {}
    for u in postorder:
        total = 1 + len(ring_tokens[u])
        kids = children[u]
        for v in kids[:-1]:
            idx = _index_tokens(size[v] - 1)
            headers[v] = [f"[{_bond_prefix(m.bond_order(u, v))}Branch{len(idx)}]"] + idx
            total += len(headers[v]) + size[v]
        if kids:
            total += size[kids[-1]]
        size[u] = total

    out: list[str] = []
    tasks: list = [(root, 0)]
    while tasks:
        u, bond = tasks.pop()
        if u < 0:
            out.extend(headers[~u])
            continue
        atom = m.atoms[u]
        key = (atom.element, atom.charge, bond or 1)
        if key not in _ATOM_FOR:
            raise Inexpressible(f"no token for {atom.element}{atom.charge:+d} with bond order {bond}")
        out.append(_ATOM_FOR[key])
        out.extend(ring_tokens[u])
        kids = children[u]
        if not kids:
            continue
        tasks.append((kids[-1], m.bond_order(u, kids[-1])))
        for v in reversed(kids[:-1]):
            tasks.append((v, m.bond_order(u, v)))
            tasks.append((~v, 0))
    result = tuple(out)
    if decode(result).smiles != m.smiles:
        raise Inexpressible("derivation does not reproduce the molecule")
    return result


# ---------------------------------------------------------------------------
# variation operators

MUTATION_KINDS = ("delete", "insert", "replace")


def mutate(s: Sequence[str], rng: np.random.Generator) -> SelfiesString:
    """Apply exactly one token edit: delete, insert, or replace.

    The edit kind, position, and new token are drawn uniformly.  Deleting
    the only token is re-rolled so the genotype never becomes empty, and a
    replacement always picks a token different from the current one.
    """
    s = tuple(s)
    if not s:
        raise ValueError("cannot mutate an empty SELFIES string")
    while True:
        kind = MUTATION_KINDS[rng.integers(3)]
        if not (kind == "delete" and len(s) == 1):
            break
    if kind == "delete":
        i = int(rng.integers(len(s)))
        return s[:i] + s[i + 1:]
    if kind == "insert":
        i = int(rng.integers(len(s) + 1))
        return s[:i] + (ALPHABET[rng.integers(len(ALPHABET))],) + s[i:]
    i = int(rng.integers(len(s)))
    choices = [t for t in ALPHABET if t != s[i]]
    return s[:i] + (choices[rng.integers(len(choices))],) + s[i + 1:]


def crossover_path(a: Sequence[str], b: Sequence[str],
                   rng: np.random.Generator) -> list[SelfiesString]:
    """Token-edit path from ``a`` to ``b``, endpoints included.

    Strings are aligned by position.  Each position where they differ is
    one pending edit (replace, delete the surplus of ``a``, or append from
    ``b``); edits are applied one per step in a random order.
    """
    a, b = tuple(a), tuple(b)
    width = max(len(a), len(b))
    slots = [a[i] if i < len(a) else None for i in range(width)]
    target = [b[i] if i < len(b) else None for i in range(width)]
    pending = [i for i in range(width) if slots[i] != target[i]]
    path = [a]
    for k in rng.permutation(len(pending)):
        i = pending[k]
        slots[i] = target[i]
        path.append(tuple(t for t in slots if t is not None))
    return path


def joint_similarity(child: Molecule, pa: Molecule, pb: Molecule, joint: str = "min") -> float:
    sa = tanimoto(child.fingerprint, pa.fingerprint)
    sb = tanimoto(child.fingerprint, pb.fingerprint)
    if joint == "min":
        return min(sa, sb)
    if joint == "mean":
        return 0.5 * (sa + sb)
    raise ValueError(f"unknown joint similarity {joint!r}")


def crossover(a: Sequence[str], b: Sequence[str], rng: np.random.Generator,
              joint: str = "min") -> SelfiesString:
    """Path crossover: the path intermediate most similar to both parents.

    Every intermediate of :func:`crossover_path` is decoded and scored by
    its joint Tanimoto similarity to the two parent molecules; the first
    (earliest on the path) maximizer is returned.
    """
    path = crossover_path(a, b, rng)
    pa, pb = decode(path[0]), decode(path[-1])
    best, best_sim = path[0], -1.0
    for s in path:
        sim = joint_similarity(decode(s), pa, pb, joint)
        if sim > best_sim:
            best, best_sim = s, sim
    return best
