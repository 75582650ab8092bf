import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cpca.errors import CPCAError, DimensionError, SingularBlockError
from cpca.graph import (build_knn_graph, cumulative_coherence, graph_from_weights, knn_indices,
                        kron_reduce, laplacian, spectral_gap)
from cpca.linalg import sym_eig

from conftest import complete_laplacian, dense_schur, path_laplacian, random_laplacian


def brute_force_knn(points, K):
    """Exhaustive oracle: K nearest by (distance, index), union symmetrised."""
    n = len(points)
    d2 = {(i, j): float(np.sum((points[i] - points[j]) ** 2)) for i in range(n) for j in range(n)}
    edges = {}
    for i in range(n):
        nbrs = sorted((j for j in range(n) if j != i), key=lambda j: (d2[i, j], j))[:K]
        for j in nbrs:
            edges[i, j] = d2[i, j]
    sigma2 = np.mean(list(edges.values()))
    W = np.zeros((n, n))
    for (i, j), d in edges.items():
        w = np.exp(-d / sigma2) if sigma2 > 0 else 1.0
        W[i, j] = W[j, i] = w
    return W, sigma2


class TestKnnGraph:
    def test_default_k(self):
        import inspect
        assert inspect.signature(build_knn_graph).parameters["K"].default == 10

    def test_identical_points(self):
        G = build_knn_graph(np.array([[1.0, 1.0], [2.0, 2.0]]), axis="cols", K=1)
        assert G.W[0, 1] == 1.0

    def test_collinear(self):
        X = np.array([[0.0, 1.0, 10.0]])
        G = build_knn_graph(X, axis="cols", K=1)
        W = G.W.toarray()
        assert W[0, 2] == 0.0
        Wref, s2 = brute_force_knn(X.T, 1)
        np.testing.assert_allclose(W, Wref, atol=1e-15)
        assert G.sigma2 == pytest.approx(s2)
        assert G.sigma2 == pytest.approx((1 + 1 + 81) / 3)

    @given(st.integers(5, 25), st.integers(1, 4), st.integers(0, 2**31 - 1))
    def test_matches_brute_force(self, n, K, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((3, n))
        G = build_knn_graph(X, axis="cols", K=K)
        Wref, s2 = brute_force_knn(X.T, K)
        np.testing.assert_allclose(G.W.toarray(), Wref, atol=1e-12)
        assert G.sigma2 == pytest.approx(s2)

    @given(st.integers(5, 30), st.integers(0, 2**31 - 1))
    def test_graph_invariants(self, n, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((n, 4))
        G = build_knn_graph(X, axis="rows", K=3)
        W = G.W.toarray()
        assert np.allclose(W, W.T) and not np.diag(W).any()
        assert W.max() <= 1.0 and np.all(W[W != 0] > 0)
        np.testing.assert_allclose(G.degrees, W.sum(1))
        L = G.laplacian.toarray()
        assert np.abs(L.sum(1)).max() <= 1e-12
        assert np.linalg.eigvalsh(L)[0] >= -1e-10
        assert G.sigma2 > 0

    def test_tie_break_lower_index(self):
        pts = np.array([[0.0], [-1.0], [1.0], [5.0]])  # nodes 1 and 2 equidistant from 0
        assert knn_indices(pts, 1)[0, 0] == 1
        assert knn_indices(pts[[0, 2, 1, 3]], 1)[0, 0] == 1

    def test_too_few_points(self):
        with pytest.raises(CPCAError):
            build_knn_graph(np.zeros((2, 3)), axis="cols", K=3)

    def test_too_few_distinct(self):
        with pytest.raises(CPCAError, match="distinct"):
            build_knn_graph(np.zeros((2, 6)), axis="cols", K=3)

    def test_normalized_laplacian(self, rng):
        G = build_knn_graph(rng.standard_normal((3, 20)), K=4, kind="normalized")
        ev = np.linalg.eigvalsh(G.laplacian.toarray())
        assert ev[0] >= -1e-10 and ev[-1] <= 2 + 1e-10
        d = G.degrees
        ref = np.eye(20) - G.W.toarray() / np.sqrt(np.outer(d, d))
        np.testing.assert_allclose(G.laplacian.toarray(), ref, atol=1e-14)

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            laplacian(sp.identity(2), "random-walk")


class TestKronReduction:
    def test_path_endpoints(self):
        R = kron_reduce(path_laplacian(3), [0, 2]).toarray()
        np.testing.assert_allclose(R, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)

    def test_keep_all(self, rng):
        L = random_laplacian(8, 0.4, rng)
        np.testing.assert_array_equal(kron_reduce(L, np.arange(8)).toarray(), L.toarray())

    def test_two_components_one_node_each(self):
        L = sp.block_diag([path_laplacian(3), path_laplacian(4)], format="csr")
        R = kron_reduce(L, [1, 5]).toarray()
        np.testing.assert_allclose(R, np.zeros((2, 2)), atol=1e-12)

    def test_uncovered_component(self):
        L = sp.block_diag([path_laplacian(3), path_laplacian(4)], format="csr")
        with pytest.raises(SingularBlockError) as exc:
            kron_reduce(L, [0, 1])
        assert list(exc.value.components) == [1]

    def test_order_follows_keep(self):
        L = path_laplacian(4)
        R1 = kron_reduce(L, [3, 0]).toarray()
        R2 = kron_reduce(L, [0, 3]).toarray()
        np.testing.assert_allclose(R1, R2[::-1, ::-1])

    @given(st.integers(3, 50), st.integers(0, 2**31 - 1))
    def test_matches_dense_schur(self, n, seed):
        rng = np.random.default_rng(seed)
        L = random_laplacian(n, 0.15, rng)
        keep = np.sort(rng.choice(n, size=rng.integers(1, n + 1), replace=False))
        R = kron_reduce(L, keep).toarray()
        ref = dense_schur(L.toarray(), keep)
        ref[np.abs(ref) < 1e-12] = 0
        np.testing.assert_allclose(R, ref, atol=1e-10)
        assert np.abs(R.sum(1)).max() <= 1e-10
        assert np.allclose(R, R.T)

    @given(st.integers(2, 4), st.integers(0, 2**31 - 1))
    def test_preserves_component_count(self, c, seed):
        rng = np.random.default_rng(seed)
        blocks = [random_laplacian(int(rng.integers(3, 8)), 0.4, rng) for _ in range(c)]
        L = sp.block_diag(blocks, format="csr")
        starts = np.cumsum([0] + [b.shape[0] for b in blocks])
        keep = np.concatenate([s + rng.choice(b.shape[0], 2, replace=False)
                               for s, b in zip(starts, blocks)])
        R = kron_reduce(L, keep)
        ev = np.linalg.eigvalsh(R.toarray())
        assert np.sum(np.abs(ev) <= 1e-10) == c


class TestCoherence:
    def test_full_basis(self, rng):
        L = random_laplacian(9, 0.3, rng)
        rep = cumulative_coherence(sym_eig(L), 9)
        assert rep.nu == pytest.approx(3.0)

    def test_equal_components(self):
        L = sp.block_diag([path_laplacian(5)] * 3, format="csr")
        assert cumulative_coherence(sym_eig(L, 3), 3).nu == pytest.approx(np.sqrt(3))

    def test_matches_indicator_loop(self, rng):
        L = random_laplacian(8, 0.4, rng)
        B = np.linalg.eigh(L.toarray())[1][:, :3]
        ref = max(np.sqrt(8) * np.linalg.norm(B.T @ np.eye(8)[i]) for i in range(8))
        assert cumulative_coherence(sym_eig(L, 3), 3).nu == pytest.approx(ref)

    def test_order_too_large(self, rng):
        with pytest.raises(DimensionError):
            cumulative_coherence(sym_eig(random_laplacian(5, 0.5, rng), 2), 3)

    @given(st.integers(4, 20), st.integers(0, 2**31 - 1))
    def test_bounds_and_monotone(self, n, seed):
        rng = np.random.default_rng(seed)
        E = sym_eig(random_laplacian(n, 0.3, rng))
        nus = [cumulative_coherence(E, k).nu for k in range(1, n + 1)]
        for k, nu in enumerate(nus, start=1):
            assert np.sqrt(k) - 1e-9 <= nu <= np.sqrt(n) + 1e-9
        assert all(b >= a - 1e-12 for a, b in itertools.pairwise(nus))


class TestSpectralGap:
    def test_components(self):
        L = sp.block_diag([path_laplacian(4)] * 2, format="csr")
        g = spectral_gap(sym_eig(L, 3), 2)
        assert g.lambda_k == 0.0 and g.ratio == 0.0

    def test_path(self):
        g = spectral_gap(sym_eig(path_laplacian(3)), 2)
        assert g.ratio == pytest.approx(1 / 3)

    def test_complete(self):
        assert spectral_gap(sym_eig(complete_laplacian(4)), 2).ratio == pytest.approx(1.0)

    def test_undefined(self):
        L = sp.block_diag([path_laplacian(3)] * 3, format="csr")
        with pytest.raises(CPCAError, match="gap undefined"):
            spectral_gap(sym_eig(L, 3), 2)

    def test_needs_k_plus_one(self):
        with pytest.raises(DimensionError):
            spectral_gap(sym_eig(path_laplacian(3), 2), 2)


def test_graph_from_weights_drops_diagonal():
    G = graph_from_weights(sp.csr_matrix(np.array([[1.0, 0.5], [0.5, 1.0]])))
    assert G.W.diagonal().sum() == 0 and G.laplacian[0, 0] == 0.5
