"""SMILES subset reader and canonical writer.

Supported subset: organic atoms ``C N O``; bracket atoms over C, N, O with
optional hydrogen count and charge (``[N+]``, ``[O-]``, ``[NH3+]``,
``[N+1]``); bonds ``- = #``; branches; ring closures ``0-9`` and ``%nn``.
Aromatic lowercase atoms, stereo marks, isotopes, atom classes, dots and
any other element raise :class:`UnsupportedFeature`.
"""

from __future__ import annotations

from alchemloop.errors import SmilesSyntaxError, UnsupportedFeature, ValenceError
from alchemloop.molgraph.graph import ELEMENT_INDEX, Atom, Bond, Molecule, valence

_ORGANIC = {"C", "N", "O"}
_BOND_CHARS = {"-": 1, "=": 2, "#": 3}
_BOND_SYMBOL = {1: "", 2: "=", 3: "#"}
_UNSUPPORTED_CHARS = set(":/\\$.*@")

# Hard ceiling on individualization-refinement leaves; see canonical_ranks.
MAX_CANON_LEAVES = 2048


def parse_smiles(text: str) -> Molecule:
    """Parse a SMILES string into a valence-checked :class:`Molecule`.

    Organic-subset atoms receive the smallest hydrogen count that closes
    their valence; bracket atoms carry exactly the hydrogens written.

    Raises
    ------
    SmilesSyntaxError
        Malformed text, unbalanced branches, unclosed ring bonds.
    UnsupportedFeature
        Aromatic atoms, stereo, isotopes, other elements, dot-disconnected parts.
    ValenceError
        No hydrogen count satisfies an atom's valence.
    """
    specs, bonds = _parse_skeleton(text)
    used = [0] * len(specs)
    for a, b, order in bonds:
        used[a] += order
        used[b] += order
    atoms = []
    for i, (element, charge, hcount) in enumerate(specs):
        if hcount is None:
            hcount = valence(element, charge) - used[i]
            if hcount < 0:
                raise ValenceError(
                    f"atom {i} ({element}) has bond order {used[i]} > valence "
                    f"{valence(element, charge)} in {text!r}"
                )
        atoms.append(Atom(element, charge, hcount))
    return Molecule(tuple(atoms), tuple(Bond(a, b, o) for a, b, o in bonds))


def _parse_skeleton(text):
    """Return ``(atom_specs, bonds)``; hydrogen counts are ``None`` for organic atoms."""
    s = text.strip()
    if not s:
        raise SmilesSyntaxError("empty SMILES")
    atoms: list[tuple[str, int, int | None]] = []
    bonds: list[tuple[int, int, int]] = []
    bonded: set[tuple[int, int]] = set()
    branch_stack: list[int] = []
    rings: dict[int, tuple[int, int | None]] = {}
    prev: int | None = None
    pending: int | None = None
    branch_open = False
    i = 0
    n = len(s)

    def add_bond(a, b, order):
        key = (min(a, b), max(a, b))
        if a == b:
            raise SmilesSyntaxError(f"ring closure onto the same atom at position {i}")
        if key in bonded:
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}")
        bonded.add(key)
        bonds.append((key[0], key[1], order))

    def add_atom(spec):
        nonlocal prev, pending, branch_open
        idx = len(atoms)
        atoms.append(spec)
        if prev is not None:
            add_bond(prev, idx, pending or 1)
        elif pending is not None:
            raise SmilesSyntaxError("bond symbol before the first atom")
        prev = idx
        pending = None
        branch_open = False

    while i < n:
        c = s[i]
        if c in _ORGANIC:
            if i + 1 < n and s[i + 1].islower():
                raise UnsupportedFeature(f"element {s[i:i + 2]!r} is not supported")
            add_atom((c, 0, None))
            i += 1
        elif c == "[":
            j = s.find("]", i)
            if j < 0:
                raise SmilesSyntaxError(f"unclosed bracket atom at position {i}")
            add_atom(_parse_bracket(s[i + 1:j]))
            i = j + 1
        elif c in _BOND_CHARS:
            if pending is not None:
                raise SmilesSyntaxError(f"consecutive bond symbols at position {i}")
            if prev is None:
                raise SmilesSyntaxError("bond symbol before the first atom")
            pending = _BOND_CHARS[c]
            i += 1
        elif c == "(":
            if prev is None or pending is not None:
                raise SmilesSyntaxError(f"misplaced branch at position {i}")
            branch_stack.append(prev)
            branch_open = True
            i += 1
        elif c == ")":
            if not branch_stack:
                raise SmilesSyntaxError(f"unmatched ')' at position {i}")
            if branch_open or pending is not None:
                raise SmilesSyntaxError(f"empty or dangling branch at position {i}")
            prev = branch_stack.pop()
            i += 1
        elif c.isdigit() or c == "%":
            if c == "%":
                digits = s[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesSyntaxError(f"bad %nn ring label at position {i}")
                label = int(digits)
                i += 3
            else:
                label = int(c)
                i += 1
            if prev is None:
                raise SmilesSyntaxError("ring closure before the first atom")
            if label in rings:
                other, order = rings.pop(label)
                if order is not None and pending is not None and order != pending:
                    raise SmilesSyntaxError(f"conflicting bond orders on ring {label}")
                add_bond(other, prev, pending or order or 1)
            else:
                rings[label] = (prev, pending)
            pending = None
        elif c.islower():
            raise UnsupportedFeature(f"aromatic or unsupported atom {c!r}")
        elif c.isupper():
            raise UnsupportedFeature(f"element {c!r} is not supported")
        elif c in _UNSUPPORTED_CHARS:
            raise UnsupportedFeature(f"SMILES feature {c!r} is not supported")
        else:
            raise SmilesSyntaxError(f"unexpected character {c!r} at position {i}")
    if pending is not None:
        raise SmilesSyntaxError("dangling bond at end of SMILES")
    if branch_stack:
        raise SmilesSyntaxError("unclosed branch")
    if rings:
        raise SmilesSyntaxError(f"unclosed ring bond(s) {sorted(rings)}")
    if not atoms:
        raise SmilesSyntaxError("SMILES contains no atoms")
    return atoms, bonds


def _parse_bracket(body: str):
    if not body:
        raise SmilesSyntaxError("empty bracket atom")
    i = 0
    if body[0].isdigit():
        raise UnsupportedFeature("isotopes are not supported")
    if body[0].islower():
        raise UnsupportedFeature(f"aromatic atom [{body}] is not supported")
    element = body[0]
    i = 1
    if i < len(body) and body[i].islower():
        element += body[i]
        i += 1
    if element not in _ORGANIC:
        raise UnsupportedFeature(f"element {element!r} is not supported")
    if i < len(body) and body[i] == "@":
        raise UnsupportedFeature("stereochemistry is not supported")
    hcount = 0
    if i < len(body) and body[i] == "H":
        i += 1
        j = i
        while j < len(body) and body[j].isdigit():
            j += 1
        hcount = int(body[i:j]) if j > i else 1
        i = j
    charge = 0
    if i < len(body) and body[i] in "+-":
        sign = 1 if body[i] == "+" else -1
        j = i + 1
        while j < len(body) and body[j] == body[i]:
            j += 1
        k = j
        while k < len(body) and body[k].isdigit():
            k += 1
        if k > j:
            if j - i > 1:
                raise SmilesSyntaxError(f"malformed charge in [{body}]")
            charge = sign * int(body[j:k])
        else:
            charge = sign * (j - i)
        i = k
    if i < len(body):
        if body[i] == ":":
            raise UnsupportedFeature("atom classes are not supported")
        raise SmilesSyntaxError(f"malformed bracket atom [{body}]")
    return element, charge, hcount


# ---------------------------------------------------------------------------
# canonical writer


def _dense_rank(keys):
    order = sorted(set(keys))
    lookup = {k: r for r, k in enumerate(order)}
    return [lookup[k] for k in keys]


def _refine(adj, ranks):
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((ranks[j], o) for j, o in adj[i])))
            for i in range(len(ranks))
        ]
        new = _dense_rank(keys)
        k = len(set(new))
        if k == n_classes:
            return new
        ranks, n_classes = new, k


def _initial_ranks(m: Molecule):
    ring_atoms = {x for bond in m.ring_bonds for x in bond}
    keys = []
    for i, atom in enumerate(m.atoms):
        keys.append((
            ELEMENT_INDEX[atom.element],
            len(m.adjacency[i]),
            atom.hydrogens,
            atom.charge,
            i in ring_atoms,
        ))
    return _dense_rank(keys)


def _twins(adj, u, v):
    nu = {(j, o) for j, o in adj[u] if j != v}
    nv = {(j, o) for j, o in adj[v] if j != u}
    return nu == nv


def canonical_ranks(m: Molecule) -> list[int]:
    """Discrete canonical atom ranking (0 = first atom written).

    Morgan-style refinement of atom invariants; remaining ties are split by
    individualization-refinement over every member of the target cell and
    the ranking that writes the lexicographically smallest SMILES wins.
    Interchangeable twin atoms are explored once.  The search stops after
    ``MAX_CANON_LEAVES`` leaves, which only highly symmetric graphs reach.
    """
    return _canonical_search(m)[1]


def _canonical_search(m):
    adj = m.adjacency
    n = len(m.atoms)
    best: list = [None, None]
    leaves = 0

    def search(ranks):
        nonlocal leaves
        ranks = _refine(adj, ranks)
        if len(set(ranks)) == n:
            leaves += 1
            s = _write_with_ranks(m, ranks)
            if best[0] is None or s < best[0]:
                best[0], best[1] = s, ranks
            return
        cells: dict[int, list[int]] = {}
        for i, r in enumerate(ranks):
            cells.setdefault(r, []).append(i)
        target_rank, cell = min(
            ((r, c) for r, c in cells.items() if len(c) > 1),
            key=lambda rc: (len(rc[1]), rc[0]),
        )
        candidates = []
        for v in cell:
            if not any(_twins(adj, u, v) for u in candidates):
                candidates.append(v)
        for v in candidates:
            if leaves >= MAX_CANON_LEAVES:
                return
            split = [2 * r + (1 if (r == target_rank and i != v) else 0)
                     for i, r in enumerate(ranks)]
            search(_dense_rank(split))

    search(_initial_ranks(m))
    return best[0], best[1]


def write_smiles(m: Molecule) -> str:
    """Canonical SMILES: isomorphic molecules give byte-identical strings."""
    if len(m.atoms) == 1:
        return _atom_symbol(m.atoms[0])
    return _canonical_search(m)[0]


canonical_smiles = write_smiles


def _atom_symbol(atom: Atom) -> str:
    if atom.charge == 0 and atom.element in _ORGANIC:
        # organic atoms always carry valence-filling hydrogens
        return atom.element
    h = ""
    if atom.hydrogens == 1:
        h = "H"
    elif atom.hydrogens > 1:
        h = f"H{atom.hydrogens}"
    q = ""
    if atom.charge:
        sign = "+" if atom.charge > 0 else "-"
        q = sign if abs(atom.charge) == 1 else f"{sign}{abs(atom.charge)}"
    return f"[{atom.element}{h}{q}]"


def _ring_label(d):
    return str(d) if d < 10 else f"%{d:02d}"


def _write_with_ranks(m: Molecule, ranks) -> str:
    """Write SMILES by rank-ordered depth-first traversal from the rank-0 atom."""
    adj = m.adjacency
    n = len(m.atoms)
    nbrs = [sorted(adj[i], key=lambda jo: ranks[jo[0]]) for i in range(n)]
    start = min(range(n), key=ranks.__getitem__)

    # pass 1: spanning tree and ring-closure edges
    parent = [-1] * n
    pos = [-1] * n
    children: list[list[int]] = [[] for _ in range(n)]
    openings: list[list[int]] = [[] for _ in range(n)]
    closings: list[list[int]] = [[] for _ in range(n)]
    seen_edges = set()
    counter = 0
    pos[start] = counter
    stack = [(start, iter(nbrs[start]))]
    while stack:
        u, it = stack[-1]
        advanced = False
        for v, _ in it:
            if pos[v] < 0:
                counter += 1
                pos[v] = counter
                parent[v] = u
                children[u].append(v)
                seen_edges.add((min(u, v), max(u, v)))
                stack.append((v, iter(nbrs[v])))
                advanced = True
                break
            key = (min(u, v), max(u, v))
            if key not in seen_edges:
                seen_edges.add(key)
                # v is an ancestor of u: the ring opens at v and closes at u
                openings[v].append(u)
                closings[u].append(v)
        if not advanced:
            stack.pop()

    # pass 2: emit text; ring digits are allocated in emission order
    out: list[str] = []
    free_digits = list(range(1, 100))
    open_digit: dict[tuple[int, int], int] = {}
    tasks: list = [("atom", start, 0)]
    while tasks:
        task = tasks.pop()
        if task[0] == "text":
            out.append(task[1])
            continue
        _, u, order = task
        out.append(_BOND_SYMBOL[order] if order else "")
        out.append(_atom_symbol(m.atoms[u]))
        released = []
        for v in sorted(closings[u], key=pos.__getitem__):
            d = open_digit.pop((v, u))
            out.append(_ring_label(d))
            released.append(d)
        for v in sorted(openings[u], key=ranks.__getitem__):
            d = free_digits.pop(0)
            open_digit[(u, v)] = d
            out.append(_BOND_SYMBOL[m.bond_order(u, v)] + _ring_label(d))
        for d in released:
            free_digits.append(d)
        free_digits.sort()
        kids = children[u]
        if not kids:
            continue
        # push in reverse so the first branch is emitted first
        last = kids[-1]
        tasks.append(("atom", last, m.bond_order(u, last)))
        for v in reversed(kids[:-1]):
            tasks.append(("text", ")"))
            tasks.append(("atom", v, m.bond_order(u, v)))
            tasks.append(("text", "("))
    return "".join(out)
