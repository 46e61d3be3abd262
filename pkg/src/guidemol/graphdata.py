"""Categorical molecular graphs over atom/bond vocabularies.

A graph is a pair (X, E): X holds one-hot atom types per node, E holds
one-hot bond types per ordered node pair, with "no bond" as an explicit
bond type. E is symmetric and its diagonal is pinned to no-bond. All
containers are immutable after construction; functions here are pure.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class UnknownLabel(ValueError):
    """Atom or bond label not present in the vocabulary."""


class DuplicateBond(ValueError):
    """The same unordered node pair was listed twice."""


class SelfLoop(ValueError):
    """A bond from a node to itself was requested."""


class EmptyDataset(ValueError):
    """Marginals requested for an empty graph collection."""


@dataclass(frozen=True)
class AtomVocab:
    """Ordered atom-type alphabet with per-type valence caps and masses."""

    symbols: tuple[str, ...]
    max_valence: tuple[int, ...]
    atomic_mass: tuple[float, ...]

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise ValueError("atom vocabulary must be non-empty")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("atom symbols must be unique")
        if not (len(self.symbols) == len(self.max_valence) == len(self.atomic_mass)):
            raise ValueError("symbols, max_valence, atomic_mass must have equal length")
        if any(v < 1 for v in self.max_valence):
            raise ValueError("every max_valence must be >= 1")
        if any(m <= 0 for m in self.atomic_mass):
            raise ValueError("every atomic_mass must be > 0")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise UnknownLabel(f"unknown atom label {symbol!r}") from None


@dataclass(frozen=True)
class BondVocab:
    """Ordered bond-type alphabet; index 0 is the explicit no-bond type."""

    labels: tuple[str, ...]
    bond_order: tuple[int, ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise ValueError("bond vocabulary needs no-bond plus at least one bond type")
        if len(self.labels) != len(self.bond_order):
            raise ValueError("labels and bond_order must have equal length")
        if self.bond_order[0] != 0:
            raise ValueError("index 0 must be the no-bond type (order 0)")

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def no_bond(self) -> int:
        return 0

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"unknown bond label {label!r}") from None


#: Standard atomic weights (IUPAC 2021, rounded to published precision).
#: Charged entries keep the mass of the neutral element.
_MASS = {
    "H": 1.008, "C": 12.011, "N": 14.007, "O": 15.999, "F": 18.998,
    "P": 30.974, "S": 32.06, "Cl": 35.45, "Br": 79.904, "I": 126.904,
    "N+": 14.007, "O-": 15.999,
}

HYDROGEN_MASS = _MASS["H"]

DEFAULT_BONDS = BondVocab(
    labels=("none", "single", "double", "triple"),
    bond_order=(0, 1, 2, 3),
)

#: QM9-style heavy-atom alphabet.
QM9_ATOMS = AtomVocab(
    symbols=("C", "N", "O", "F"),
    max_valence=(4, 3, 2, 1),
    atomic_mass=tuple(_MASS[s] for s in ("C", "N", "O", "F")),
)

#: ZINC-style alphabet with the two charged species kept as standalone types.
ZINC_ATOMS = AtomVocab(
    symbols=("C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "N+", "O-"),
    max_valence=(4, 3, 2, 1, 5, 6, 1, 1, 1, 4, 1),
    atomic_mass=tuple(_MASS[s] for s in ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "N+", "O-")),
)

VOCABS: dict[str, tuple[AtomVocab, BondVocab]] = {
    "qm9": (QM9_ATOMS, DEFAULT_BONDS),
    "zinc": (ZINC_ATOMS, DEFAULT_BONDS),
}


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CategoricalGraph:
    """One-hot node matrix X (n, a) and symmetric one-hot edge tensor E (n, n, b)."""

    X: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        X = _freeze(self.X)
        E = _freeze(self.E)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "E", E)
        n = X.shape[0]
        if X.ndim != 2 or E.shape[:2] != (n, n) or E.ndim != 3:
            raise ValueError(f"inconsistent shapes X{X.shape} E{E.shape}")
        for arr, what in ((X, "X row"), (E.reshape(n * n, -1), "E entry")):
            if not np.all((arr == 0.0) | (arr == 1.0)):
                raise ValueError(f"{what} entries must be 0 or 1")
            if not np.all(arr.sum(axis=-1) == 1.0):
                raise ValueError(f"every {what} must be one-hot")
        if not np.array_equal(E, E.transpose(1, 0, 2)):
            raise ValueError("E must be symmetric in its first two indices")
        if not np.all(E[np.arange(n), np.arange(n), 0] == 1.0):
            raise ValueError("diagonal of E must be the no-bond one-hot")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def a(self) -> int:
        """Number of node classes."""
        return self.X.shape[1]

    @property
    def b(self) -> int:
        """Number of edge classes."""
        return self.E.shape[2]

    @property
    def node_types(self) -> np.ndarray:
        return np.argmax(self.X, axis=1)

    @property
    def edge_types(self) -> np.ndarray:
        return np.argmax(self.E, axis=2)

    @classmethod
    def from_types(cls, node_types: Sequence[int], edge_types: np.ndarray,
                   a: int, b: int) -> "CategoricalGraph":
        node_types = np.asarray(node_types, dtype=np.int64)
        edge_types = np.asarray(edge_types, dtype=np.int64)
        n = node_types.shape[0]
        X = np.zeros((n, a))
        X[np.arange(n), node_types] = 1.0
        E = np.zeros((n, n, b))
        ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        E[ii, jj, edge_types] = 1.0
        return cls(X, E)


@dataclass(frozen=True)
class Guide:
    """Target-property vector conditioning generation (standardized units)."""

    values: np.ndarray

    def __post_init__(self):
        v = _freeze(np.atleast_1d(self.values))
        if v.ndim != 1:
            raise ValueError("guide must be a flat vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("guide entries must be finite")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DatasetMarginals:
    """Empirical node-type, edge-type, and graph-size distributions."""

    m_X: np.ndarray
    m_E: np.ndarray
    m_n: np.ndarray  # m_n[k] is the mass of size k+1; length n_max

    def __post_init__(self):
        for name in ("m_X", "m_E", "m_n"):
            v = _freeze(getattr(self, name))
            object.__setattr__(self, name, v)
            if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a distribution (sum 1 within 1e-12)")

    @property
    def n_max(self) -> int:
        return self.m_n.shape[0]


def encode_graph(atoms: Sequence[str],
                 bonds: Iterable[tuple[int, int, str]],
                 atom_vocab: AtomVocab,
                 bond_vocab: BondVocab = DEFAULT_BONDS) -> CategoricalGraph:
    """Build a CategoricalGraph from atom labels and (i, j, bond-label) triples.

    Unlisted pairs get the no-bond type; listed bonds are mirrored. Raises
    UnknownLabel, SelfLoop, or DuplicateBond on malformed input.
    """
    n = len(atoms)
    node_types = [atom_vocab.index(s) for s in atoms]
    edge_types = np.zeros((n, n), dtype=np.int64)
    seen: set[tuple[int, int]] = set()
    for i, j, label in bonds:
        if i == j:
            raise SelfLoop(f"self-loop on atom {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise UnknownLabel(f"bond ({i}, {j}) references a missing atom")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateBond(f"duplicate bond for pair {key}")
        seen.add(key)
        k = bond_vocab.index(label)
        edge_types[i, j] = k
        edge_types[j, i] = k
    return CategoricalGraph.from_types(node_types, edge_types, atom_vocab.size, bond_vocab.size)


def decode_graph(g: CategoricalGraph, atom_vocab: AtomVocab,
                 bond_vocab: BondVocab = DEFAULT_BONDS) -> tuple[list[str], list[tuple[int, int, str]]]:
    """Inverse of encode_graph: atom labels plus (i, j, label) with i < j."""
    atoms = [atom_vocab.symbols[k] for k in g.node_types]
    types = g.edge_types
    bonds = []
    for i in range(g.n):
        for j in range(i + 1, g.n):
            k = types[i, j]
            if k != bond_vocab.no_bond:
                bonds.append((i, j, bond_vocab.labels[k]))
    return atoms, bonds


def compute_marginals(graphs: Sequence[CategoricalGraph], a: int, b: int,
                      n_max: int | None = None) -> DatasetMarginals:
    """Empirical marginals of a training split.

    Node types are counted per node; edge types over ordered off-diagonal
    pairs only (diagonals are structurally no-bond and never diffuse). If
    the split contains no multi-node graph, m_E degenerates to the no-bond
    point mass, which is the only stationary choice available.
    """
    if len(graphs) == 0:
        raise EmptyDataset("cannot compute marginals of an empty split")
    node_counts = np.zeros(a)
    edge_counts = np.zeros(b)
    sizes = [g.n for g in graphs]
    if n_max is None:
        n_max = max(sizes)
    elif max(sizes) > n_max:
        raise ValueError(f"graph of size {max(sizes)} exceeds n_max={n_max}")
    size_counts = np.zeros(n_max)
    for g in graphs:
        node_counts += g.X.sum(axis=0)
        off = g.E.sum(axis=(0, 1)) - g.E[np.arange(g.n), np.arange(g.n)].sum(axis=0)
        edge_counts += off
        size_counts[g.n - 1] += 1
    m_X = node_counts / node_counts.sum()
    if edge_counts.sum() == 0:
        m_E = np.zeros(b)
        m_E[0] = 1.0
    else:
        m_E = edge_counts / edge_counts.sum()
    m_n = size_counts / size_counts.sum()
    return DatasetMarginals(m_X=m_X, m_E=m_E, m_n=m_n)


def wl_hash(g: CategoricalGraph, rounds: int = 3) -> int:
    """Permutation-invariant 64-bit fingerprint via color refinement.

    Node colors start from the atom type and are refined `rounds` times by
    the sorted multiset of (bond type, neighbor color) over real bonds.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    n = g.n
    types = g.edge_types
    colors = [int(t) for t in g.node_types]
    neighbors = [[(int(types[i, j]), j) for j in range(n) if j != i and types[i, j] != 0]
                 for i in range(n)]
    for _ in range(rounds):
        colors = [
            _digest64(repr((colors[i], sorted((bt, colors[j]) for bt, j in neighbors[i]))))
            for i in range(n)
        ]
    return _digest64(repr(sorted(colors)))


def _digest64(text: str) -> int:
    h = hashlib.blake2b(text.encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")
