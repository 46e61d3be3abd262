"""SMILES subset: parsing, writing, valence validity, scalar properties.

The grammar covers what kekulized QM9/ZINC-style corpora need: organic and
bracket atom symbols drawn from the vocabulary, bond symbols ``- = #``
(single by default), branches, ring closures ``1``-``9`` and ``%nn``, and
``.`` as component separator. Hydrogens stay implicit and never become
nodes; aromatic lowercase forms are out of the grammar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphdata import (
    AtomVocab,
    BondVocab,
    CategoricalGraph,
    DEFAULT_BONDS,
    DuplicateBond,
    HYDROGEN_MASS,
    SelfLoop,
    decode_graph,
    encode_graph,
)


class SmilesError(ValueError):
    """Base class for malformed SMILES input."""


class EmptyInput(SmilesError):
    pass


class UnknownAtom(SmilesError):
    pass


class UnbalancedParenthesis(SmilesError):
    pass


class UnclosedRing(SmilesError):
    pass


class BondConflict(SmilesError):
    """Two different bond symbols attached to one ring closure."""


class UnknownProperty(ValueError):
    pass


_BOND_CHAR_TO_ORDER = {"-": 1, "=": 2, "#": 3}


@dataclass(frozen=True)
class MoleculeSpec:
    """Parsed molecule: atom labels, (i, j, bond-label) triples, source text."""

    atoms: tuple[str, ...]
    bonds: tuple[tuple[int, int, str], ...]
    source_text: str = ""


@dataclass(frozen=True)
class ValidityReport:
    """Valence bookkeeping: valid iff no violations and the graph is connected."""

    valid: bool
    violations: tuple[tuple[int, int, int], ...]  # (atom index, used order, max valence)
    connected: bool


def _bond_label(order: int, bond_vocab: BondVocab) -> str:
    try:
        return bond_vocab.labels[bond_vocab.bond_order.index(order)]
    except ValueError:
        raise SmilesError(f"bond order {order} not in bond vocabulary") from None


def parse_smiles(text: str, atom_vocab: AtomVocab,
                 bond_vocab: BondVocab = DEFAULT_BONDS) -> MoleculeSpec:
    """Parse one molecule. Raises a SmilesError subclass on malformed input."""
    source = text
    text = text.strip()
    if not text:
        raise EmptyInput("empty SMILES string")

    # Longest-first plain symbols so "Cl" wins over "C". Charged labels only
    # via brackets.
    plain = sorted((s for s in atom_vocab.symbols if s.isalpha()), key=len, reverse=True)

    atoms: list[str] = []
    bonds: list[tuple[int, int, str]] = []
    bonded: set[tuple[int, int]] = set()

    prev: int | None = None
    pending: int | None = None  # bond order of a pending bond symbol
    stack: list[int | None] = []
    rings: dict[int, tuple[int, int | None]] = {}  # label -> (atom, bond order or None)

    def add_bond(i: int, j: int, order: int | None):
        if i == j:
            raise SelfLoop(f"ring closure bonds atom {i} to itself")
        key = (min(i, j), max(i, j))
        if key in bonded:
            raise DuplicateBond(f"pair {key} bonded twice")
        bonded.add(key)
        bonds.append((key[0], key[1], _bond_label(1 if order is None else order, bond_vocab)))

    def add_atom(label: str):
        nonlocal prev, pending
        atoms.append(label)
        idx = len(atoms) - 1
        if prev is not None:
            add_bond(prev, idx, pending)
        elif pending is not None:
            raise SmilesError("bond symbol with no preceding atom")
        prev = idx
        pending = None

    def close_ring(label: int):
        nonlocal pending
        if prev is None:
            raise SmilesError("ring closure digit before any atom")
        if label in rings:
            other, opened_order = rings.pop(label)
            if opened_order is not None and pending is not None and opened_order != pending:
                raise BondConflict(
                    f"ring {label} opened with order {opened_order} but closed with {pending}")
            add_bond(other, prev, pending if pending is not None else opened_order)
        else:
            rings[label] = (prev, pending)
        pending = None

    pos = 0
    while pos < len(text):
        ch = text[pos]
        if ch in _BOND_CHAR_TO_ORDER:
            if pending is not None:
                raise SmilesError(f"two bond symbols in a row at position {pos}")
            pending = _BOND_CHAR_TO_ORDER[ch]
            pos += 1
        elif ch == "(":
            if prev is None:
                raise UnbalancedParenthesis("branch opened before any atom")
            stack.append(prev)
            pos += 1
        elif ch == ")":
            if not stack:
                raise UnbalancedParenthesis("unmatched ')'")
            if pending is not None:
                raise SmilesError("dangling bond symbol before ')'")
            prev = stack.pop()
            pos += 1
        elif ch == "[":
            end = text.find("]", pos)
            if end < 0:
                raise UnknownAtom("unterminated bracket atom")
            label = text[pos + 1:end]
            if label not in atom_vocab.symbols:
                raise UnknownAtom(f"unknown atom label {label!r}")
            add_atom(label)
            pos = end + 1
        elif ch.isdigit():
            close_ring(int(ch))
            pos += 1
        elif ch == "%":
            if len(text) < pos + 3 or not text[pos + 1:pos + 3].isdigit():
                raise SmilesError("'%' must be followed by two digits")
            close_ring(int(text[pos + 1:pos + 3]))
            pos += 3
        elif ch == ".":
            if pending is not None:
                raise SmilesError("bond symbol before '.'")
            prev = None
            pos += 1
        else:
            for sym in plain:
                if text.startswith(sym, pos):
                    add_atom(sym)
                    pos += len(sym)
                    break
            else:
                raise UnknownAtom(f"unknown atom symbol at position {pos}: {text[pos:pos+2]!r}")

    if stack:
        raise UnbalancedParenthesis(f"{len(stack)} unclosed '('")
    if rings:
        raise UnclosedRing(f"unclosed ring labels {sorted(rings)}")
    if pending is not None:
        raise SmilesError("dangling bond symbol at end of input")
    return MoleculeSpec(atoms=tuple(atoms), bonds=tuple(bonds), source_text=source)


def write_smiles(spec: MoleculeSpec, bond_vocab: BondVocab = DEFAULT_BONDS) -> str:
    """Deterministic writer: DFS from the lowest-index atom, neighbors in
    index order, disconnected components dot-separated."""
    n = len(spec.atoms)
    if n == 0:
        return ""
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]  # (peer, order)
    for i, j, label in spec.bonds:
        order = bond_vocab.bond_order[bond_vocab.index(label)]
        adj[i].append((j, order))
        adj[j].append((i, order))
    for lst in adj:
        lst.sort()

    # Classify edges: walk once to find which ones close rings.
    tree: set[tuple[int, int]] = set()
    ring_edges: set[tuple[int, int]] = set()
    visited = [False] * n
    roots = []
    for root in range(n):
        if visited[root]:
            continue
        roots.append(root)
        todo = [root]
        visited[root] = True
        while todo:
            u = todo.pop()
            for v, _ in adj[u]:
                key = (min(u, v), max(u, v))
                if visited[v]:
                    if key not in tree and key not in ring_edges:
                        ring_edges.add(key)
                else:
                    visited[v] = True
                    tree.add(key)
                    todo.append(v)

    ring_number: dict[tuple[int, int], int] = {}
    free = list(range(1, 100))
    out: list[str] = []

    def bond_str(order: int) -> str:
        return {1: "", 2: "=", 3: "#"}[order]

    def atom_str(label: str) -> str:
        return label if label.isalpha() else f"[{label}]"

    def emit(u: int, parent: int):
        out.append(atom_str(spec.atoms[u]))
        children = []
        for v, order in adj[u]:
            key = (min(u, v), max(u, v))
            if key in ring_edges:
                if key in ring_number:
                    num = ring_number.pop(key)
                    free.append(num)
                    free.sort()
                else:
                    num = free.pop(0)
                    ring_number[key] = num
                out.append(bond_str(order) + (str(num) if num < 10 else f"%{num:02d}"))
            elif v != parent and key in tree:
                # tree edges found during classification expand away from u
                # only if u reached v first
                children.append((v, order))
        children = [(v, o) for v, o in children if not _emitted[v]]
        for k, (v, order) in enumerate(children):
            _emitted[v] = True
        for k, (v, order) in enumerate(children):
            last = k == len(children) - 1
            if not last:
                out.append("(")
            out.append(bond_str(order))
            emit(v, u)
            if not last:
                out.append(")")

    _emitted = [False] * n
    for k, root in enumerate(roots):
        if k:
            out.append(".")
        _emitted[root] = True
        emit(root, -1)
    return "".join(out)


def graph_to_smiles(g: CategoricalGraph, atom_vocab: AtomVocab,
                    bond_vocab: BondVocab = DEFAULT_BONDS) -> str:
    atoms, bonds = decode_graph(g, atom_vocab, bond_vocab)
    return write_smiles(MoleculeSpec(atoms=tuple(atoms), bonds=tuple(bonds)), bond_vocab)


def smiles_to_graph(text: str, atom_vocab: AtomVocab,
                    bond_vocab: BondVocab = DEFAULT_BONDS) -> CategoricalGraph:
    spec = parse_smiles(text, atom_vocab, bond_vocab)
    return encode_graph(spec.atoms, spec.bonds, atom_vocab, bond_vocab)


def _used_valence(g: CategoricalGraph, bond_vocab: BondVocab) -> np.ndarray:
    orders = np.asarray(bond_vocab.bond_order, dtype=np.float64)
    per_pair = orders[g.edge_types]
    np.fill_diagonal(per_pair, 0)
    return per_pair.sum(axis=1)


def check_valence(g: CategoricalGraph, atom_vocab: AtomVocab,
                  bond_vocab: BondVocab = DEFAULT_BONDS) -> ValidityReport:
    """Valence-capacity and connectivity check; a report, never a failure."""
    used = _used_valence(g, bond_vocab)
    caps = np.asarray(atom_vocab.max_valence)[g.node_types]
    violations = tuple(
        (int(i), int(used[i]), int(caps[i])) for i in range(g.n) if used[i] > caps[i]
    )
    connected = _connected(g)
    return ValidityReport(valid=not violations and connected,
                          violations=violations, connected=connected)


def _connected(g: CategoricalGraph) -> bool:
    if g.n <= 1:
        return True
    types = g.edge_types
    seen = {0}
    todo = [0]
    while todo:
        u = todo.pop()
        for v in range(g.n):
            if v not in seen and v != u and types[u, v] != 0:
                seen.add(v)
                todo.append(v)
    return len(seen) == g.n


def molecular_weight(g: CategoricalGraph, atom_vocab: AtomVocab,
                     bond_vocab: BondVocab = DEFAULT_BONDS) -> float:
    """Mass in daltons with unused valence filled by implicit hydrogens."""
    if g.n == 0:
        return 0.0
    used = _used_valence(g, bond_vocab)
    kinds = g.node_types
    masses = np.asarray(atom_vocab.atomic_mass)[kinds]
    caps = np.asarray(atom_vocab.max_valence)[kinds]
    h_fill = np.maximum(0.0, caps - used)
    return float(masses.sum() + HYDROGEN_MASS * h_fill.sum())


PROPERTY_IDS = ("mw", "heavy_atom_count", "bond_count", "hetero_fraction")


def graph_property(g: CategoricalGraph, which: str, atom_vocab: AtomVocab,
                   bond_vocab: BondVocab = DEFAULT_BONDS) -> float:
    """Scalar conditioning properties recomputable on generated graphs."""
    if which == "mw":
        return molecular_weight(g, atom_vocab, bond_vocab)
    if which == "heavy_atom_count":
        return float(g.n)
    if which == "bond_count":
        types = g.edge_types
        count = 0
        for i in range(g.n):
            for j in range(i + 1, g.n):
                if types[i, j] != 0:
                    count += 1
        return float(count)
    if which == "hetero_fraction":
        symbols = [atom_vocab.symbols[k] for k in g.node_types]
        return sum(1 for s in symbols if s != "C") / g.n
    raise UnknownProperty(f"unknown property {which!r}")


def property_vector(g: CategoricalGraph, which: tuple[str, ...] | list[str],
                    atom_vocab: AtomVocab,
                    bond_vocab: BondVocab = DEFAULT_BONDS) -> np.ndarray:
    return np.array([graph_property(g, w, atom_vocab, bond_vocab) for w in which])
