"""重み行列と 4 種類の抽出のテスト"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rng import make_rng
from weights import (
    SampleConfig, SymWeights, degree, effective_kappa, link_resample, link_sample, load_weights,
    mcca_weights, node_resample, node_sample, pairing_weights, save_weights,
)


@st.composite
def sym_weights(draw):
    n = draw(st.integers(1, 12))
    pairs = draw(st.sets(
        st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).map(lambda t: (max(t), min(t))),
        max_size=30,
    ))
    pairs = sorted(pairs)
    values = draw(st.lists(st.floats(0.1, 10.0), min_size=len(pairs), max_size=len(pairs)))
    return SymWeights.from_triplets(n, [(i, j, v) for (i, j), v in zip(pairs, values)])


def _keys(w):
    return set(zip(w.rows.tolist(), w.cols.tolist()))


class TestSymWeights:

    def test_rejects_upper_triangle_entry(self):
        with pytest.raises(ValueError, match="i >= j"):
            SymWeights(3, np.array([0]), np.array([1]), np.array([1.0]))

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError, match="duplicate"):
            SymWeights(3, np.array([1, 1]), np.array([0, 0]), np.array([1.0, 2.0]))

    @pytest.mark.parametrize("value", [0.0, -1.0, np.inf])
    def test_rejects_non_positive_values(self, value):
        with pytest.raises(ValueError):
            SymWeights(2, np.array([1]), np.array([0]), np.array([value]))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            SymWeights(2, np.array([2]), np.array([0]), np.array([1.0]))

    def test_dense_round_trip(self):
        dense = np.array([[1.0, 2.0, 0.0], [2.0, 0.0, 3.0], [0.0, 3.0, 0.0]])
        w = SymWeights.from_dense(dense)
        np.testing.assert_array_equal(w.to_dense(), dense)
        assert not w.is_hollow
        assert w.total() == pytest.approx(1.0 + 2 * 2.0 + 2 * 3.0)

    def test_frozen_arrays(self):
        w = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        with pytest.raises(ValueError):
            w.values[0] = 5.0


class TestDegree:

    @pytest.mark.parametrize("n, entries, expected", [
        (2, [(1, 0, 1.0)], [1.0, 1.0]),
        (3, [(1, 0, 2.0), (2, 1, 1.0)], [2.0, 3.0, 1.0]),
        (4, [], [0.0, 0.0, 0.0, 0.0]),
    ])
    def test_row_sums(self, n, entries, expected):
        w = SymWeights.from_triplets(n, entries)
        np.testing.assert_array_equal(degree(w), expected)

    def test_diagonal_counted_once(self):
        w = SymWeights.from_triplets(2, [(0, 0, 3.0), (1, 0, 1.0)])
        np.testing.assert_array_equal(degree(w), [4.0, 1.0])
        assert degree(w).sum() == pytest.approx(w.total())

    @given(sym_weights())
    def test_total_matches_degree(self, w):
        assert degree(w).sum() == pytest.approx(w.total())


class TestLinkSample:

    def test_epsilon_one_is_identity(self):
        wbar = SymWeights.from_triplets(4, [(1, 0, 1.0), (3, 2, 2.0), (2, 2, 0.5)])
        w = link_sample(wbar, 1.0, 5)
        assert _keys(w) == _keys(wbar)
        np.testing.assert_array_equal(degree(w), degree(wbar))

    def test_retention_frequency(self):
        wbar = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        seeds = 10000
        hits = sum(len(link_sample(wbar, 0.2, make_rng(7, s))) for s in range(seeds))
        assert abs(hits / seeds - 0.2) < 3 * np.sqrt(0.2 * 0.8 / seeds)

    @pytest.mark.parametrize("epsilon", [0.0, -0.1, 1.5])
    def test_rejects_bad_probability(self, epsilon):
        with pytest.raises(ValueError, match="epsilon"):
            link_sample(SymWeights.empty(2), epsilon, 0)


class TestNodeSample:

    def test_xi_one_is_identity(self):
        wbar = SymWeights.from_triplets(3, [(1, 0, 1.0), (2, 1, 1.0)])
        assert _keys(node_sample(wbar, 1.0, 0)) == _keys(wbar)

    def test_shared_node_coupling(self):
        # (1,0) と (2,0) はノード 0 を共有: 同時に残る確率は ξ³
        wbar = SymWeights.from_triplets(3, [(1, 0, 1.0), (2, 0, 1.0)])
        xi, seeds = 0.5, 10000
        both = sum(len(node_sample(wbar, xi, make_rng(3, s))) == 2 for s in range(seeds))
        expected = xi ** 3
        assert abs(both / seeds - expected) < 3 * np.sqrt(expected * (1 - expected) / seeds)

    def test_single_link_frequency(self):
        wbar = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        xi, seeds = 0.3, 10000
        hits = sum(len(node_sample(wbar, xi, make_rng(1, s))) for s in range(seeds))
        expected = xi ** 2
        assert abs(hits / seeds - expected) < 3 * np.sqrt(expected * (1 - expected) / seeds)


class TestSampleConfig:

    @pytest.mark.parametrize("kwargs, message", [
        ({"scheme": "edge", "prob": 0.5, "seed": 0}, "scheme"),
        ({"scheme": "link", "prob": 0.0, "seed": 0}, "prob"),
        ({"scheme": "node", "prob": 1.5, "seed": 0}, "prob"),
    ])
    def test_rejects(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            SampleConfig(**kwargs)

    def test_matches_stream(self):
        wbar = pairing_weights(30)
        cfg = SampleConfig("node", 0.5, seed=4)
        np.testing.assert_array_equal(
            cfg.sample(wbar, stream=2).rows, node_sample(wbar, 0.5, make_rng(4, 2)).rows
        )
        split = SampleConfig("link", 0.3, seed=4).resample(wbar)
        assert len(split.star) == len(link_resample(wbar, 0.3, make_rng(4, 0)).star)


class TestResample:

    @settings(max_examples=60, deadline=None)
    @given(sym_weights(), st.floats(0.05, 0.95), st.integers(0, 2 ** 32))
    def test_link_partition(self, w, kappa, seed):
        split = link_resample(w, kappa, seed)
        assert _keys(split.star) | _keys(split.rest) == _keys(w)
        assert not _keys(split.star) & _keys(split.rest)
        np.testing.assert_allclose(degree(split.star) + degree(split.rest), degree(w))
        assert split.kappa == kappa

    @settings(max_examples=60, deadline=None)
    @given(sym_weights(), st.floats(0.05, 0.95), st.integers(0, 2 ** 32))
    def test_node_partition(self, w, nu, seed):
        split = node_resample(w, nu, seed)
        assert _keys(split.star) | _keys(split.rest) == _keys(w)
        assert not _keys(split.star) & _keys(split.rest)
        assert split.kappa == pytest.approx(1 - (1 - nu) ** 2)

    def test_link_test_fraction(self):
        w = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        seeds = 10000
        hits = sum(len(link_resample(w, 0.1, make_rng(2, s)).star) for s in range(seeds))
        assert abs(hits / seeds - 0.1) < 3 * np.sqrt(0.1 * 0.9 / seeds)

    def test_node_test_fraction(self):
        w = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        nu, seeds = 0.1, 10000
        hits = sum(len(node_resample(w, nu, make_rng(4, s)).star) for s in range(seeds))
        kappa = effective_kappa(nu)
        assert abs(hits / seeds - kappa) < 3 * np.sqrt(kappa * (1 - kappa) / seeds)

    @pytest.mark.parametrize("fn", [link_resample, node_resample])
    def test_rejects_probability_one(self, fn):
        with pytest.raises(ValueError):
            fn(SymWeights.empty(2), 1.0, 0)

    def test_same_seed_same_split(self):
        w = SymWeights.from_triplets(5, [(i, j, 1.0) for i in range(5) for j in range(i)])
        a = link_resample(w, 0.3, make_rng(9, 4))
        b = link_resample(w, 0.3, make_rng(9, 4))
        assert _keys(a.star) == _keys(b.star)


class TestSpecialWeights:

    def test_pairing(self):
        w = pairing_weights(3)
        dense = w.to_dense()
        np.testing.assert_array_equal(dense[3:, :3], np.eye(3))
        np.testing.assert_array_equal(dense[:3, :3], 0)
        assert w.is_hollow

    def test_mcca_blocks(self):
        c = [[0.0, 1.0, 2.0], [1.0, 0.0, 0.5], [2.0, 0.5, 0.0]]
        dense = mcca_weights(2, c).to_dense()
        np.testing.assert_array_equal(dense[4:, :2], 2.0 * np.eye(2))
        np.testing.assert_array_equal(dense[4:, 2:4], 0.5 * np.eye(2))
        np.testing.assert_array_equal(dense[:2, :2], 0)

    def test_mcca_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            mcca_weights(2, [[0.0, 1.0], [2.0, 0.0]])


class TestWeightFiles:

    def test_round_trip(self, tmp_path):
        w = SymWeights.from_triplets(5, [(1, 0, 0.1), (4, 2, 1 / 3), (3, 3, 2.0)])
        loaded = load_weights(save_weights(w, tmp_path / "w.txt"))
        assert loaded.n == 5
        np.testing.assert_array_equal(loaded.to_dense(), w.to_dense())

    def test_comments_and_zero_weights(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("# comment\n1 0 1.5\n2 1 0\n")
        w = load_weights(path, 3)
        assert len(w) == 1

    @pytest.mark.parametrize("body, message", [
        ("0 1 1.0\n", "i >= j"),
        ("1 0 1.0\n1 0 2.0\n", "duplicate"),
        ("1 0 -1.0\n", "negative"),
    ])
    def test_rejects_bad_files(self, tmp_path, body, message):
        path = tmp_path / "w.txt"
        path.write_text(body)
        with pytest.raises(ValueError, match=message):
            load_weights(path, 3)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("# n=4\n1 0 1.0\n")
        with pytest.raises(ValueError, match="header"):
            load_weights(path, 3)

    def test_missing_file_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nowhere.txt"):
            load_weights(tmp_path / "nowhere.txt")
