import numpy as np
import pytest
from hypothesis import given, strategies as st

from guidemol.graphdata import (AtomVocab, CategoricalGraph, DEFAULT_BONDS,
                                DatasetMarginals, DuplicateBond, EmptyDataset,
                                Guide, QM9_ATOMS, SelfLoop, UnknownLabel,
                                ZINC_ATOMS, compute_marginals, decode_graph,
                                encode_graph, wl_hash)


def random_graph(rng, n, a=4, b=4):
    nodes = rng.integers(0, a, size=n)
    edges = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            edges[i, j] = edges[j, i] = int(rng.integers(0, b))
    return CategoricalGraph.from_types(nodes, edges, a, b)


class TestVocab:
    def test_qm9_lookup(self):
        assert QM9_ATOMS.size == 4
        assert QM9_ATOMS.index("C") == 0
        assert QM9_ATOMS.max_valence[QM9_ATOMS.index("F")] == 1

    def test_zinc_includes_charged_labels(self):
        assert "N+" in ZINC_ATOMS.symbols
        assert "O-" in ZINC_ATOMS.symbols
        assert ZINC_ATOMS.max_valence[ZINC_ATOMS.index("N+")] == 4

    def test_unknown_symbol(self):
        with pytest.raises(UnknownLabel):
            QM9_ATOMS.index("Xe")

    def test_bond_orders(self):
        assert DEFAULT_BONDS.no_bond == 0
        assert DEFAULT_BONDS.bond_order == (0, 1, 2, 3)


class TestCategoricalGraph:
    def test_one_hot_validation(self):
        X = np.zeros((2, 3))
        X[0, 0] = 1.0  # second row is all-zero, not one-hot
        E = np.zeros((2, 2, 4))
        E[:, :, 0] = 1.0
        with pytest.raises(ValueError):
            CategoricalGraph(X=X, E=E)

    def test_symmetry_validation(self):
        g = random_graph(np.random.default_rng(0), 3)
        E = np.array(g.E)
        E[0, 1] = np.roll(E[0, 1], 1)  # breaks symmetry
        with pytest.raises(ValueError):
            CategoricalGraph(X=np.array(g.X), E=E)

    def test_diagonal_validation(self):
        E = np.zeros((2, 2, 4))
        E[:, :, 1] = 1.0  # diagonal must be the no-bond class
        X = np.zeros((2, 3))
        X[:, 0] = 1.0
        with pytest.raises(ValueError):
            CategoricalGraph(X=X, E=E)

    def test_arrays_read_only(self):
        g = random_graph(np.random.default_rng(1), 4)
        with pytest.raises(ValueError):
            g.X[0, 0] = 5.0

    def test_shape_accessors(self):
        g = random_graph(np.random.default_rng(2), 5, a=3, b=2)
        assert (g.n, g.a, g.b) == (5, 3, 2)

    def test_types_round_trip(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 6)
        again = CategoricalGraph.from_types(g.node_types, g.edge_types, g.a, g.b)
        assert np.array_equal(g.X, again.X) and np.array_equal(g.E, again.E)


class TestEncodeDecode:
    def test_round_trip(self):
        atoms = ["C", "O", "N", "C"]
        bonds = [(0, 1, "single"), (1, 2, "double"), (0, 3, "triple")]
        g = encode_graph(atoms, bonds, QM9_ATOMS)
        atoms2, bonds2 = decode_graph(g, QM9_ATOMS)
        assert list(atoms2) == atoms
        assert sorted(bonds2) == sorted(bonds)

    def test_self_loop(self):
        with pytest.raises(SelfLoop):
            encode_graph(["C", "C"], [(0, 0, "single")], QM9_ATOMS)

    def test_duplicate_bond(self):
        with pytest.raises(DuplicateBond):
            encode_graph(["C", "C"], [(0, 1, "single"), (1, 0, "double")],
                         QM9_ATOMS)

    def test_unknown_labels(self):
        with pytest.raises(UnknownLabel):
            encode_graph(["C", "Xe"], [], QM9_ATOMS)
        with pytest.raises(UnknownLabel):
            encode_graph(["C", "C"], [(0, 1, "quadruple")], QM9_ATOMS)


class TestMarginals:
    def test_hand_counted(self):
        # two graphs: C-O (single) and C=C plus isolated N (sizes 2 and 3)
        g1 = encode_graph(["C", "O"], [(0, 1, "single")], QM9_ATOMS)
        g2 = encode_graph(["C", "C", "N"], [(0, 1, "double")], QM9_ATOMS)
        m = compute_marginals([g1, g2], 4, 4)
        # nodes: 3 C, 1 N, 1 O out of 5
        assert np.allclose(m.m_X, [3 / 5, 1 / 5, 1 / 5, 0.0])
        # ordered off-diagonal pairs: g1 has 2 (1 bond mirrored), g2 has 6;
        # bonds: single x2, double x2, none x4
        assert np.allclose(m.m_E, [4 / 8, 2 / 8, 2 / 8, 0.0])
        assert np.allclose(m.m_n, [0.0, 0.5, 0.5])
        assert m.n_max == 3

    def test_empty_dataset(self):
        with pytest.raises(EmptyDataset):
            compute_marginals([], 4, 4)

    def test_distribution_validation(self):
        with pytest.raises(ValueError):
            DatasetMarginals(m_X=np.array([0.5, 0.6]), m_E=np.array([1.0]),
                             m_n=np.array([1.0]))

    def test_guide_requires_finite(self):
        with pytest.raises(ValueError):
            Guide(values=np.array([1.0, np.inf]))


class TestWlHash:
    @given(st.integers(2, 8), st.integers(0, 10_000))
    def test_permutation_invariant(self, n, seed):
        rng = np.random.default_rng(seed)
        g = random_graph(rng, n)
        perm = rng.permutation(n)
        inv = np.argsort(perm)
        permuted = CategoricalGraph.from_types(
            g.node_types[perm], g.edge_types[perm][:, perm], g.a, g.b)
        assert wl_hash(g) == wl_hash(permuted)
        # sanity: the permuted adjacency describes the same bonds
        assert np.array_equal(permuted.edge_types[inv][:, inv], g.edge_types)

    def test_sensitive_to_node_label(self):
        g1 = encode_graph(["C", "C", "O"], [(0, 1, "single"), (1, 2, "single")],
                          QM9_ATOMS)
        g2 = encode_graph(["C", "O", "C"], [(0, 1, "single"), (1, 2, "single")],
                          QM9_ATOMS)
        assert wl_hash(g1) != wl_hash(g2)

    def test_sensitive_to_bond_order(self):
        g1 = encode_graph(["C", "C"], [(0, 1, "single")], QM9_ATOMS)
        g2 = encode_graph(["C", "C"], [(0, 1, "double")], QM9_ATOMS)
        assert wl_hash(g1) != wl_hash(g2)
