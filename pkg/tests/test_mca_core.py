"""固有値問題、再スケール、マッチング誤差、モデルの保存と変換のテスト"""

from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg as la

from conftest import random_problem
from domains import MultiDomainData, Regularizer, domain_regularizer
from exceptions import SingularGramError
from mca_core import (
    GAMMA_M_FLOOR, GramPair, McaModel, build_gram, eigen_signature, fit, inverse_sqrt,
    matching_correlation, matching_error, matching_error_matrix, omega, prepare,
    rescale, solve,
)
from rng import make_rng
from weights import SymWeights, degree, mcca_weights, pairing_weights


def _unit_fit(data, w, reg=None):
    a, lambdas = solve(build_gram(data, w, reg))
    _, emb = rescale(a, data, degree(w), "weighted", scaled=False)
    return a, lambdas, emb


def _tiny():
    data = MultiDomainData.from_blocks([[[1.0], [1.0]]])
    return data, SymWeights.from_triplets(2, [(1, 0, 1.0)])


class TestBuildGram:

    def test_hand_example(self):
        gp = build_gram(*_tiny())
        np.testing.assert_allclose(gp.g, [[2.0]])
        np.testing.assert_allclose(gp.h, [[2.0]])

    def test_empty_weights(self, problem):
        data, _ = problem
        gp = build_gram(data, SymWeights.empty(data.layout.N))
        assert np.all(gp.g == 0) and np.all(gp.h == 0)

    def test_exactly_symmetric(self, problem):
        gp = build_gram(*problem)
        assert np.array_equal(gp.h, gp.h.T)
        assert np.array_equal(gp.g, gp.g.T)

    def test_node_count_mismatch(self, problem):
        data, _ = problem
        with pytest.raises(ValueError, match="nodes"):
            build_gram(data, SymWeights.empty(data.layout.N + 1))


class TestSolve:

    def test_scalar(self):
        a, lambdas = solve(GramPair(np.array([[4.0]]), np.array([[2.0]])))
        np.testing.assert_allclose(lambdas, [0.5])
        np.testing.assert_allclose(a, [[0.5]])

    def test_identity_metric(self):
        h = np.array([[2.0, 1.0, 0.0], [1.0, 0.0, 0.5], [0.0, 0.5, -1.0]])
        a, lambdas = solve(GramPair(np.eye(3), h))
        np.testing.assert_allclose(lambdas, np.sort(la.eigvalsh(h))[::-1], atol=1e-12)
        np.testing.assert_allclose(a.T @ a, np.eye(3), atol=1e-12)

    def test_matches_generalized_eigensolver(self):
        rng = make_rng(5)
        b = rng.standard_normal((4, 4))
        g = b @ b.T + 4 * np.eye(4)
        h = rng.standard_normal((4, 4))
        h = h + h.T
        a, lambdas = solve(GramPair(g, h))
        expected, vectors = la.eigh(h, g)
        order = np.argsort(expected)[::-1]
        np.testing.assert_allclose(lambdas, expected[order], atol=1e-10)
        for k, j in enumerate(order):
            cos = abs(a[:, k] @ vectors[:, j]) / (la.norm(a[:, k]) * la.norm(vectors[:, j]))
            assert cos == pytest.approx(1.0, abs=1e-10)

    def test_constraint_identities(self):
        for seed in range(200):
            data, w = random_problem(seed)
            gamma = (1e-6, 0.01, 0.1)[seed % 3]
            centered, _ = prepare(data, w)
            reg = domain_regularizer(centered, degree(w), gamma)
            gp = build_gram(centered, w, reg)
            a, lambdas = solve(gp)
            assert np.abs(a.T @ gp.g @ a - np.eye(a.shape[1])).max() < 1e-8, seed
            assert np.abs(a.T @ gp.h @ a - np.diag(lambdas)).max() < 1e-8, seed
            assert np.all(np.diff(lambdas) <= 0)

    def test_sign_convention(self, problem):
        gp = build_gram(*problem, Regularizer.identity(problem[0].layout.P, 0.1))
        a, _ = solve(gp)
        u = la.inv(inverse_sqrt(gp.g)) @ a
        for k in range(u.shape[1]):
            first = u[np.flatnonzero(np.abs(u[:, k]) > 1e-10)[0], k]
            assert first > 0

    def test_eigenvalues_bounded_without_regularizer(self, problem):
        _, lambdas, _ = _unit_fit(*problem)
        assert np.all(np.abs(lambdas) <= 1 + 1e-10)

    def test_singular_gram(self):
        with pytest.raises(SingularGramError, match="gamma_M > 0"):
            inverse_sqrt(np.diag([1.0, 0.0]))

    def test_singular_gram_from_empty_weights(self, problem):
        data, _ = problem
        with pytest.raises(SingularGramError):
            solve(build_gram(data, SymWeights.empty(data.layout.N)))


class TestReductions:

    def test_cca(self):
        rng = make_rng(21)
        n = 50
        z = rng.standard_normal((n, 2))
        x1 = z @ rng.standard_normal((2, 3)) + rng.standard_normal((n, 3))
        x2 = z @ rng.standard_normal((2, 4)) + rng.standard_normal((n, 4))
        x1 -= x1.mean(axis=0)
        x2 -= x2.mean(axis=0)
        data = MultiDomainData.from_blocks([x1, x2])
        _, lambdas = solve(build_gram(data, pairing_weights(n)))

        q1, _ = la.qr(x1, mode="economic")
        q2, _ = la.qr(x2, mode="economic")
        canonical = la.svdvals(q1.T @ q2)
        np.testing.assert_allclose(lambdas[:3], canonical, atol=1e-8)
        np.testing.assert_allclose(lambdas[-3:], -canonical[::-1], atol=1e-8)
        assert abs(lambdas[3]) < 1e-8

    def test_pca_of_scalar_domains(self):
        rng = make_rng(8)
        n, D = 40, 3
        z = rng.standard_normal((n, D)) @ rng.standard_normal((D, D))
        data = MultiDomainData.from_blocks([z[:, [d]] for d in range(D)])
        w = mcca_weights(n, np.ones((D, D)) - np.eye(D))
        _, lambdas = solve(build_gram(data, w))

        norms = np.sqrt(np.sum(z ** 2, axis=0))
        cosine = (z.T @ z) / np.outer(norms, norms)
        expected = (np.sort(la.eigvalsh(cosine))[::-1] - 1.0) / (D - 1)
        np.testing.assert_allclose(lambdas, expected, atol=1e-10)


class TestRescale:

    def test_unweighted_identity(self):
        n = 4
        data = MultiDomainData.from_blocks([np.eye(n)])
        b, _ = rescale(np.eye(n), data, np.ones(n), "unweighted")
        np.testing.assert_allclose(b, np.sqrt(n))

    def test_modes_enforce_their_own_constraint(self):
        data = MultiDomainData.from_blocks([[[1.0], [2.0]]])
        m = np.array([1.0, 2.0])
        _, weighted = rescale(np.array([[1.0]]), data, m, "weighted")
        _, unweighted = rescale(np.array([[1.0]]), data, m, "unweighted")
        assert m @ weighted.y[:, 0] ** 2 == pytest.approx(3.0)
        assert np.sum(unweighted.y[:, 0] ** 2) == pytest.approx(2.0)
        assert m @ unweighted.y[:, 0] ** 2 != pytest.approx(3.0)

    def test_weighted_scaled_constraint(self, problem):
        data, w = problem
        a, _ = solve(build_gram(data, w))
        m = degree(w)
        _, emb = rescale(a, data, m, "weighted")
        np.testing.assert_allclose(m @ emb.y ** 2, m.sum(), rtol=1e-10)

    def test_degenerate_component(self, caplog):
        data = MultiDomainData.from_blocks([[[1.0, 0.0], [2.0, 0.0]]])
        b, emb = rescale(np.eye(2), data, np.ones(2), "weighted")
        assert emb.degenerate.tolist() == [False, True]
        assert b[1] == 0.0
        assert "正規化因子" in caplog.text

    def test_k_too_large(self, problem):
        data, w = problem
        a, _ = solve(build_gram(data, w))
        with pytest.raises(ValueError, match="exceeds"):
            rescale(a, data, degree(w), k=a.shape[1] + 1)


class TestMatchingError:

    def test_constant_component(self, problem):
        data, w = problem
        np.testing.assert_allclose(matching_error(np.full(data.layout.N, 3.0), w), 0.0)

    def test_hand_example(self):
        w = SymWeights.from_triplets(2, [(1, 0, 1.0)])
        y = np.array([1.0, -1.0]) / np.sqrt(2)
        np.testing.assert_allclose(matching_error(y, w), [2.0])
        np.testing.assert_allclose(matching_correlation(y[:, None], w), [[-1.0]])

    def test_brute_force(self):
        rng = make_rng(2)
        dense = np.triu(rng.random((6, 6)) < 0.5) * rng.uniform(0.5, 2.0, (6, 6))
        dense = dense + np.triu(dense, 1).T
        w = SymWeights.from_dense(dense)
        y = rng.standard_normal((6, 2))
        expected = [
            0.5 * sum(dense[i, j] * (y[i, k] - y[j, k]) ** 2 for i in range(6) for j in range(6))
            for k in range(2)
        ]
        np.testing.assert_allclose(matching_error(y, w), expected, atol=1e-12)

    def test_normalized(self, problem):
        data, w = problem
        y = make_rng(1).standard_normal((data.layout.N, 2))
        np.testing.assert_allclose(
            matching_error(y, w, normalize=True), matching_error(y, w) / w.total()
        )

    def test_normalize_empty_weights(self):
        with pytest.raises(ValueError, match="sum to zero"):
            matching_error(np.ones(3), SymWeights.empty(3), normalize=True)

    def test_unit_convention_gives_one_minus_lambda(self, problem):
        _, lambdas, emb = _unit_fit(*problem)
        np.testing.assert_allclose(matching_error(emb.y, problem[1]), 1.0 - lambdas, atol=1e-10)

    def test_correlation_is_diagonal(self, problem):
        _, lambdas, emb = _unit_fit(*problem)
        corr = matching_correlation(emb.y, problem[1])
        np.testing.assert_allclose(np.diag(corr), lambdas, atol=1e-10)
        np.testing.assert_allclose(corr - np.diag(np.diag(corr)), 0.0, atol=1e-10)

    def test_correlation_of_empty_weights(self, problem):
        data, _ = problem
        y = np.ones((data.layout.N, 2))
        np.testing.assert_array_equal(matching_correlation(y, SymWeights.empty(data.layout.N)), 0)

    def test_error_matrix(self, problem):
        _, _, emb = _unit_fit(*problem)
        w = problem[1]
        em = matching_error_matrix(emb.y, w)
        np.testing.assert_allclose(np.diag(em), matching_error(emb.y, w), atol=1e-10)
        np.testing.assert_allclose(em, 1.0 - matching_correlation(emb.y, w), atol=1e-10)

    def test_random_components_average_one(self):
        # 各ノードの次数が 2 の閉路（M = 2I、対角なし）
        n = 50
        idx = np.arange(1, n)
        w = SymWeights(n, np.append(idx, n - 1), np.append(idx - 1, 0), np.ones(n))
        m = degree(w)
        phis = []
        for seed in range(500):
            y = make_rng(13, seed).standard_normal(n)
            y /= np.sqrt(m @ y ** 2)
            phis.append(matching_error(y, w)[0])
        phis = np.array(phis)
        assert abs(phis.mean() - 1.0) < 3 * phis.std(ddof=1) / np.sqrt(phis.size)


class TestOmega:

    def test_hand_example(self):
        np.testing.assert_allclose(omega(*_tiny()), [[4.0]])

    def test_empty(self, problem):
        data, _ = problem
        assert np.all(omega(data, SymWeights.empty(data.layout.N)) == 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_equals_g_plus_h(self, seed):
        data, w = random_problem(seed)
        rng = make_rng(seed, 1)
        # 自己ループも含める
        loops = rng.choice(data.layout.N, size=3, replace=False)
        entries = list(zip(w.rows, w.cols, w.values)) + [(i, i, 0.7) for i in loops]
        w = SymWeights.from_triplets(w.n, entries)
        scaled = MultiDomainData.from_blocks(
            [b / np.sqrt(data.layout.N) for b in data.blocks]
        )
        gp = build_gram(scaled, w)
        assert np.abs(omega(scaled, w) - (gp.g + gp.h)).max() < 1e-12


class TestSignature:

    def test_counts(self):
        assert eigen_signature([0.9, 1e-12, 0.0, -0.3]) == (1, 2, 1)


class TestModel:

    @pytest.fixture
    def fitted(self, problem):
        data, w = problem
        model, emb = fit(data, w, gamma_m=0.1, k=3)
        return data, w, model, emb

    def test_training_vectors_reproduce_embedding(self, fitted):
        data, _, model, emb = fitted
        np.testing.assert_allclose(model.embed(data), emb.y, atol=1e-10)
        for d in range(data.layout.D):
            coords = model.transform(data.blocks[d], d)
            np.testing.assert_allclose(coords, emb.y[data.layout.row_slice(d)], atol=1e-10)

    def test_transform_is_affine(self, fitted):
        data, _, model, _ = fitted
        d = data.layout.D - 1
        x = make_rng(3).standard_normal(data.layout.dims[d])
        zero = model.transform(np.zeros_like(x), d)
        expected = -(model.centering.offsets[d] @ model.a[data.layout.col_slice(d)]) * model.b
        np.testing.assert_allclose(zero[0], expected, atol=1e-12)
        np.testing.assert_allclose(
            model.transform(2.5 * x, d) - zero, 2.5 * (model.transform(x, d) - zero), atol=1e-10
        )

    def test_transform_dimension_mismatch(self, fitted):
        data, _, model, _ = fitted
        with pytest.raises(ValueError, match="columns"):
            model.transform(np.zeros(data.layout.dims[0] + 1), 0)

    def test_truncation_matches_direct_fit(self, problem, fitted):
        data, w, model, emb = fitted
        full, full_emb = fit(data, w, gamma_m=0.1)
        assert full.k == data.layout.P
        np.testing.assert_allclose(full.truncate(3).a, model.a)
        np.testing.assert_allclose(full_emb.y[:, :3], emb.y)
        np.testing.assert_allclose(full.lambdas, model.lambdas)

    def test_k_plus(self, fitted):
        _, _, model, _ = fitted
        assert model.k_plus == eigen_signature(model.lambdas)[0]

    def test_k_plus_ignores_numerical_zeros(self, fitted):
        _, _, model, _ = fitted
        noisy = replace(model, lambdas=np.array([0.5, 1e-15, -1e-15, -0.2]))
        assert noisy.k_plus == 1

    def test_save_load(self, fitted, tmp_path):
        data, _, model, _ = fitted
        loaded = McaModel.load(model.save(tmp_path / "model.npz"))
        assert loaded.layout == model.layout
        np.testing.assert_array_equal(loaded.a, model.a)
        np.testing.assert_array_equal(loaded.lambdas, model.lambdas)
        np.testing.assert_array_equal(loaded.reg.l_m, model.reg.l_m)
        assert loaded.reg.gamma_m == model.reg.gamma_m
        np.testing.assert_array_equal(loaded.embed(data), model.embed(data))

    def test_load_missing(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            McaModel.load(tmp_path / "none.npz")

    def test_zero_gamma_substituted(self, problem, caplog):
        model, _ = fit(*problem, gamma_m=0.0)
        assert model.reg.gamma_m == GAMMA_M_FLOOR
        assert "1e-06" in caplog.text

    def test_k_out_of_range(self, problem):
        data, w = problem
        with pytest.raises(ValueError, match="K must be"):
            fit(data, w, k=data.layout.P + 1)

    def test_unknown_center_mode(self, problem):
        with pytest.raises(ValueError, match="center mode"):
            fit(*problem, center_mode="median")
