"""Datasets of molecular graphs with scalar property vectors.

File format, one molecule per line::

    SMILES<TAB>p1,p2,...

Blank lines and lines starting with ``#`` are skipped. Properties are
stored raw; standardization statistics always come from the training
split so held-out data never leaks into them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphdata import (
    AtomVocab,
    BondVocab,
    CategoricalGraph,
    DEFAULT_BONDS,
    DatasetMarginals,
    compute_marginals,
    encode_graph,
)
from .smiles import graph_to_smiles, parse_smiles, property_vector


class DatasetError(ValueError):
    """Unreadable dataset file or malformed line."""


@dataclass(frozen=True)
class Standardization:
    """Per-property affine map to zero mean, unit variance."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardization":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)  # constant columns pass through
        return cls(mean=mean, std=std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def invert(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass(frozen=True)
class GraphDataset:
    """Aligned graphs and raw property rows."""

    graphs: tuple[CategoricalGraph, ...]
    properties: np.ndarray  # (N, d) float64, raw units
    property_names: tuple[str, ...] = ()

    def __post_init__(self):
        props = np.asarray(self.properties, dtype=np.float64)
        if props.ndim != 2:
            raise DatasetError(f"properties must be 2-D, got shape {props.shape}")
        if props.shape[0] != len(self.graphs):
            raise DatasetError(
                f"{len(self.graphs)} graphs but {props.shape[0]} property rows")
        if self.property_names and len(self.property_names) != props.shape[1]:
            raise DatasetError(
                f"{len(self.property_names)} names for {props.shape[1]} columns")
        props.setflags(write=False)
        object.__setattr__(self, "properties", props)

    def __len__(self) -> int:
        return len(self.graphs)

    @property
    def property_dim(self) -> int:
        return int(self.properties.shape[1])

    def subset(self, indices) -> "GraphDataset":
        indices = list(indices)
        return GraphDataset(
            graphs=tuple(self.graphs[i] for i in indices),
            properties=np.array(self.properties[indices]),
            property_names=self.property_names,
        )

    def split(self) -> tuple["GraphDataset", "GraphDataset", "GraphDataset"]:
        """Positional 80/10/10 train/validation/test split."""
        n = len(self)
        n_train = int(0.8 * n)
        n_val = int(0.1 * n)
        return (self.subset(range(n_train)),
                self.subset(range(n_train, n_train + n_val)),
                self.subset(range(n_train + n_val, n)))

    def marginals(self, atom_vocab: AtomVocab,
                  bond_vocab: BondVocab = DEFAULT_BONDS,
                  n_max: int | None = None) -> DatasetMarginals:
        return compute_marginals(self.graphs, atom_vocab.size, bond_vocab.size,
                                 n_max=n_max)


def load_dataset(path, atom_vocab: AtomVocab,
                 bond_vocab: BondVocab = DEFAULT_BONDS,
                 property_names: tuple[str, ...] = ()) -> GraphDataset:
    """Read a tab-separated SMILES/property file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    graphs: list[CategoricalGraph] = []
    rows: list[list[float]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetError(f"{path}:{lineno}: expected SMILES<TAB>props")
        smiles, props = parts
        try:
            spec = parse_smiles(smiles, atom_vocab, bond_vocab)
            graph = encode_graph(spec.atoms, spec.bonds, atom_vocab, bond_vocab)
            row = [float(v) for v in props.split(",")]
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
        graphs.append(graph)
        rows.append(row)
    if not graphs:
        raise DatasetError(f"{path}: no molecules")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DatasetError(f"{path}: inconsistent property counts {sorted(widths)}")
    return GraphDataset(graphs=tuple(graphs),
                        properties=np.array(rows, dtype=np.float64),
                        property_names=property_names)


def save_dataset(path, dataset: GraphDataset, atom_vocab: AtomVocab,
                 bond_vocab: BondVocab = DEFAULT_BONDS) -> None:
    lines = []
    for graph, row in zip(dataset.graphs, dataset.properties):
        smiles = graph_to_smiles(graph, atom_vocab, bond_vocab)
        lines.append(smiles + "\t" + ",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def random_valid_graph(rng: np.random.Generator, atom_vocab: AtomVocab,
                       bond_vocab: BondVocab = DEFAULT_BONDS,
                       n_lo: int = 2, n_hi: int = 8,
                       hetero_prob: float | None = None,
                       ring_prob: float = 0.25,
                       upgrade_prob: float = 0.2) -> CategoricalGraph:
    """Connected random graph that always satisfies valence caps.

    A spanning tree guarantees connectivity; extra ring edges and bond-order
    upgrades are only applied where spare valence remains. ``hetero_prob``
    sets the per-atom chance of a non-carbon label (drawn uniformly per call
    when None), which spreads composition widely across a generated corpus.
    """
    carbon = atom_vocab.index("C")
    others = [k for k in range(atom_vocab.size) if k != carbon]
    single = bond_vocab.bond_order.index(1)
    upgrades = [k for k, o in enumerate(bond_vocab.bond_order) if o > 1]

    while True:
        n = int(rng.integers(n_lo, n_hi + 1))
        p_het = float(rng.uniform(0.0, 0.8)) if hetero_prob is None else hetero_prob
        kinds = [carbon if rng.uniform() >= p_het or not others
                 else int(rng.choice(others)) for _ in range(n)]
        spare = [atom_vocab.max_valence[k] for k in kinds]
        bonds: dict[tuple[int, int], int] = {}
        ok = True
        for i in range(1, n):
            open_parents = [j for j in range(i) if spare[j] > 0]
            if not open_parents or spare[i] < 1:
                ok = False
                break
            j = int(rng.choice(open_parents))
            bonds[(j, i)] = single
            spare[i] -= 1
            spare[j] -= 1
        if not ok:
            continue  # saturated too early (e.g. all-fluorine draw); redraw

        if n >= 3:
            for _ in range(int(rng.integers(0, n))):
                if rng.uniform() >= ring_prob:
                    continue
                open_atoms = [i for i in range(n) if spare[i] > 0]
                if len(open_atoms) < 2:
                    break
                i, j = sorted(rng.choice(open_atoms, size=2, replace=False).tolist())
                if i == j or (i, j) in bonds:
                    continue
                bonds[(i, j)] = single
                spare[i] -= 1
                spare[j] -= 1

        if upgrades:
            for (i, j) in list(bonds):
                while (spare[i] > 0 and spare[j] > 0
                       and rng.uniform() < upgrade_prob):
                    order = bond_vocab.bond_order[bonds[(i, j)]]
                    higher = [k for k in upgrades if bond_vocab.bond_order[k] == order + 1]
                    if not higher:
                        break
                    bonds[(i, j)] = higher[0]
                    spare[i] -= 1
                    spare[j] -= 1

        atoms = [atom_vocab.symbols[k] for k in kinds]
        triples = [(i, j, bond_vocab.labels[b]) for (i, j), b in bonds.items()]
        return encode_graph(atoms, triples, atom_vocab, bond_vocab)
