import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from cpca.bounds import (alternate_bound, ideal_bound, label_bound, regularized_subspace_bound,
                         upsampling_bound)
from cpca.decoders import (DecoderConfig, alternate_decode, alternate_gammas, approx_decode,
                           approx_decode_onesided, detect_rank, graph_upsample, ideal_decode,
                           intermediate_uv_decode)
from cpca.errors import CPCAError, SingularBlockError
from cpca.graph import spectral_gap
from cpca.linalg import sym_eig
from cpca.sampling import SamplingPlan, draw_plan, rip_constant, subsample
from cpca.synth import component_graph, synth_lowrank

from conftest import path_laplacian, random_laplacian


def rel(A, B):
    return np.linalg.norm(A - B) / np.linalg.norm(B)


def balanced_plan(row_labels, col_labels, fr, fc, seed):
    """Plan sampling the same fraction of every block."""
    rng = np.random.default_rng(seed)

    def pick(labels, frac):
        out = []
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            out.append(rng.choice(idx, int(round(frac * idx.size)), replace=False))
        return np.concatenate(out)

    return SamplingPlan(pick(row_labels, fr), pick(col_labels, fc), row_labels.size, col_labels.size)


@pytest.fixture(scope="module")
def exact():
    syn = synth_lowrank(60, 90, 3, 3, seed=5, mixing="spread")
    plan = draw_plan(60, 90, 30, 45, seed=2)
    return syn, plan, subsample(syn.Y, plan)


class TestGraphUpsample:
    def test_all_known(self, rng):
        R = rng.standard_normal((5, 2))
        np.testing.assert_array_equal(graph_upsample(random_laplacian(5, 0.5, rng), np.arange(5), R), R)

    def test_path_harmonic(self):
        S = graph_upsample(path_laplacian(3), [0, 2], np.array([0.0, 2.0]))
        assert S[1] == pytest.approx(1.0, abs=1e-10)

    def test_constant_extension(self, rng):
        L = random_laplacian(20, 0.2, rng)
        S = graph_upsample(L, [3, 7, 11], np.full(3, 4.2))
        np.testing.assert_allclose(S, 4.2, atol=1e-8)

    def test_dense_oracle(self, rng):
        L = random_laplacian(15, 0.3, rng)
        known = np.array([0, 4, 9, 13])
        R = rng.standard_normal((4, 3))
        a = np.setdiff1d(np.arange(15), known)
        D = L.toarray()
        ref = -np.linalg.solve(D[np.ix_(a, a)], D[np.ix_(a, known)] @ R)
        np.testing.assert_allclose(graph_upsample(L, known, R)[a], ref, atol=1e-9)

    def test_uncovered(self):
        L = sp.block_diag([path_laplacian(3), path_laplacian(3)], format="csr")
        with pytest.raises(SingularBlockError, match=r"\[1\]"):
            graph_upsample(L, [0], np.ones(1))

    @given(st.integers(4, 40), st.integers(0, 2**32))
    def test_kkt_and_dirichlet_optimality(self, n, seed):
        rng = np.random.default_rng(seed)
        L = random_laplacian(n, 0.2, rng)
        known = rng.choice(n, int(rng.integers(1, n)), replace=False)
        R = rng.standard_normal((known.size, 2))
        S, info = graph_upsample(L, known, R, tol=1e-10, return_info=True)
        a = np.setdiff1d(np.arange(n), known)
        np.testing.assert_array_equal(S[known], R)
        D = L.toarray()
        rhs = D[np.ix_(a, known)] @ R
        kkt = D[np.ix_(a, a)] @ S[a] + rhs
        assert np.all(np.linalg.norm(kkt, axis=0) <= 1e-10 * np.linalg.norm(rhs, axis=0) + 1e-14)
        dS = np.zeros_like(S)
        dS[a] = rng.standard_normal((a.size, 2))
        e = lambda M: np.trace(M.T @ D @ M)
        assert e(S + dS) >= e(S) - 1e-10


class TestIntermediate:
    def test_limit_matches_upsampling(self, rng):
        G, _ = component_graph(40, 2, seed=1)
        plan = draw_plan(40, 5, 15, 5, seed=3)
        Rt = rng.standard_normal((15, 2))
        U, info = intermediate_uv_decode(Rt, plan, G.laplacian, 1e-8, tol=1e-14, max_iter=100000)
        ref = graph_upsample(G.laplacian, plan.omega_r, Rt)
        assert np.abs(U - ref).max() <= 1e-5

    def test_identity_sampling_is_lowpass(self, rng):
        L = random_laplacian(10, 0.4, rng)
        plan = SamplingPlan(np.arange(10), np.arange(3), 10, 3)
        Ut = rng.standard_normal((10, 2))
        U, _ = intermediate_uv_decode(Ut, plan, L, 0.7, tol=1e-13)
        np.testing.assert_allclose(U, np.linalg.solve(np.eye(10) + 0.7 * L.toarray(), Ut), atol=1e-10)

    def test_dense_oracle_v_side(self, rng):
        L = random_laplacian(12, 0.4, rng)
        plan = draw_plan(3, 12, 3, 5, seed=1)
        Vt = rng.standard_normal((5, 2))
        M = np.zeros((5, 12))
        M[np.arange(5), plan.omega_c] = 1
        ref = np.linalg.solve(M.T @ M + 0.3 * L.toarray(), M.T @ Vt)
        V, _ = intermediate_uv_decode(Vt, plan, L, 0.3, side="V", tol=1e-14)
        np.testing.assert_allclose(V, ref, atol=1e-10)

    def test_gammap_positive(self, rng):
        with pytest.raises(ValueError):
            intermediate_uv_decode(np.ones(2), draw_plan(4, 4, 2, 2), path_laplacian(4), 0.0)


class TestIdeal:
    def test_round_trip(self, exact):
        syn, plan, Xt = exact
        res = ideal_decode(Xt, plan, syn.P, syn.Q)
        assert rel(res.X, syn.Y) <= 1e-8

    def test_full_sampling_projects(self, rng):
        syn = synth_lowrank(20, 30, 2, 3, seed=1)
        plan = SamplingPlan(np.arange(20), np.arange(30), 20, 30)
        Xt = syn.Y + 0.1 * rng.standard_normal(syn.Y.shape)
        X = ideal_decode(Xt, plan, syn.P, syn.Q).X
        np.testing.assert_allclose(X, syn.P @ syn.P.T @ Xt @ syn.Q @ syn.Q.T, atol=1e-12)
        np.testing.assert_allclose(ideal_decode(syn.Y, plan, syn.P, syn.Q).X, syn.Y, atol=1e-12)

    def test_rank_deficient(self):
        syn = synth_lowrank(20, 30, 2, 2, seed=1)
        plan = SamplingPlan(np.arange(10), np.arange(30), 20, 30)  # misses row block 1
        with pytest.raises(CPCAError, match="rank deficient"):
            ideal_decode(subsample(syn.Y, plan), plan, syn.P, syn.Q)

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_bound(self, seed):
        rng = np.random.default_rng(seed)
        syn = synth_lowrank(60, 80, 3, 3, eta=0.05, seed=seed)
        plan = draw_plan(60, 80, 30, 40, seed=seed)
        E = 0.05 * rng.standard_normal((30, 40))
        X = ideal_decode(subsample(syn.Y, plan) + E, plan, syn.P, syn.Q).X
        delta = max(rip_constant(syn.P, plan.omega_r, 60), rip_constant(syn.Q, plan.omega_c, 80))
        # two-sided constant of the joint sampling
        delta2 = (1 + delta) ** 2 - 1
        assert np.linalg.norm(X - syn.Y) <= ideal_bound(80, 60, 30, 40, delta2, np.linalg.norm(E))


class TestAlternate:
    def test_zero_data(self, exact):
        syn, plan, _ = exact
        Pk, Qk = sym_eig(syn.Gr.laplacian, 4), sym_eig(syn.Gc.laplacian, 4)
        res = alternate_decode(np.zeros((30, 45)), plan, syn.Gr.laplacian, syn.Gc.laplacian,
                               (spectral_gap(Pk, 3), spectral_gap(Qk, 3)))
        assert not res.X.any()

    def test_zero_gap_exact(self, exact):
        syn, plan, Xt = exact
        Pk, Qk = sym_eig(syn.Gr.laplacian, 4), sym_eig(syn.Gc.laplacian, 4)
        res = alternate_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian,
                               (spectral_gap(Pk, 3), spectral_gap(Qk, 3)),
                               DecoderConfig(variant="alternate", pcg_tol=1e-12))
        assert res.converged and rel(res.X, syn.Y) <= 1e-6

    def test_dense_oracle(self, rng):
        p, n = 6, 7
        Lr, Lc = random_laplacian(p, 0.5, rng), random_laplacian(n, 0.5, rng)
        plan = draw_plan(p, n, 4, 5, seed=2)
        Xt = rng.standard_normal((4, 5))
        gaps = (spectral_gap(sym_eig(Lr), 2), spectral_gap(sym_eig(Lc), 2))
        gr, gc = alternate_gammas(1.0, *gaps)
        mask = np.zeros((p, n))
        mask[np.ix_(plan.omega_r, plan.omega_c)] = 1
        A = (np.diag(mask.ravel(order="F")) + gc * np.kron(Lc.toarray(), np.eye(p))
             + gr * np.kron(np.eye(n), Lr.toarray()))
        b = np.zeros((p, n))
        b[np.ix_(plan.omega_r, plan.omega_c)] = Xt
        ref = np.linalg.solve(A, b.ravel(order="F")).reshape((p, n), order="F")
        res = alternate_decode(Xt, plan, Lr, Lc, gaps, DecoderConfig(variant="alternate", pcg_tol=1e-14))
        np.testing.assert_allclose(res.X, ref, atol=1e-8)

    def test_gamma_scaling(self):
        gaps = (spectral_gap(sym_eig(path_laplacian(3)), 1), spectral_gap(sym_eig(path_laplacian(4)), 1))
        gr, gc = alternate_gammas(2.0, *gaps)
        assert gr == pytest.approx(2.0 / 1.0) and gc == pytest.approx(2.0 / gaps[1].lambda_k1)

    def test_nonconvergence_flagged(self, exact):
        syn, plan, Xt = exact
        Pk, Qk = sym_eig(syn.Gr.laplacian, 4), sym_eig(syn.Gc.laplacian, 4)
        res = alternate_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian,
                               (spectral_gap(Pk, 3), spectral_gap(Qk, 3)),
                               DecoderConfig(variant="alternate", pcg_max_iter=2))
        assert not res.converged

    def test_bound_on_perturbed_graphs(self):
        syn = synth_lowrank(60, 80, 3, 3, eta=0.05, seed=4)
        plan = draw_plan(60, 80, 40, 50, seed=4)
        Pk, Qk = sym_eig(syn.Gr.laplacian, 4), sym_eig(syn.Gc.laplacian, 4)
        gr_, gc_ = spectral_gap(Pk, 3), spectral_gap(Qk, 3)
        res = alternate_decode(subsample(syn.Y, plan), plan, syn.Gr.laplacian, syn.Gc.laplacian,
                               (gr_, gc_), DecoderConfig(variant="alternate", pcg_tol=1e-12))
        Xbar = syn.P @ syn.P.T @ res.X @ syn.Q @ syn.Q.T
        d = max(rip_constant(syn.P, plan.omega_r, 60), rip_constant(syn.Q, plan.omega_c, 80))
        in_model, resid = alternate_bound(80, 60, 40, 50, (1 + d) ** 2 - 1, 1.0, 0.0,
                                          gr_.ratio, gc_.ratio, np.linalg.norm(syn.Y))
        assert np.linalg.norm(Xbar - syn.Y) <= in_model
        assert np.linalg.norm(res.X - Xbar) <= resid


class TestApprox:
    def test_no_sampling(self, rng):
        syn = synth_lowrank(20, 30, 2, 2, seed=3, mixing="spread")
        plan = SamplingPlan(np.arange(20), np.arange(30), 20, 30)
        res = approx_decode(syn.Y, plan, syn.Gr.laplacian, syn.Gc.laplacian,
                            DecoderConfig(sigma_rule="constant"))
        np.testing.assert_allclose(res.X, syn.Y, atol=1e-12)
        f = res.factors
        assert f.k == 2 and np.all(np.diff(f.sigma) <= 0)
        np.testing.assert_allclose(np.linalg.norm(f.U, axis=0), 1, atol=1e-10)
        np.testing.assert_allclose(np.linalg.norm(f.V, axis=0), 1, atol=1e-10)

    def test_zero_gap_exact(self, exact):
        syn, plan, Xt = exact
        res = approx_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian)
        assert res.rank == 3 and rel(res.X, syn.Y) <= 1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_singular_value_transfer(self, seed):
        syn = synth_lowrank(60, 90, 3, 3, seed=seed, mixing="spread")
        plan = balanced_plan(syn.row_labels, syn.col_labels, 0.5, 0.4, seed)
        Xt = subsample(syn.Y, plan)
        st_ = np.linalg.svd(Xt, compute_uv=False)[:3]
        for rule in ("upsampled", "constant"):
            res = approx_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian, DecoderConfig(sigma_rule=rule))
            s = np.linalg.svd(res.X, compute_uv=False)[:3]
            np.testing.assert_allclose(s, np.sqrt(plan.norm_const) * st_, rtol=1e-6)
            assert rel(res.X, syn.Y) <= 1e-6

    def test_sign_alignment(self, exact):
        syn, plan, Xt = exact
        f = approx_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian).factors
        idx = np.argmax(np.abs(f.U), axis=0)
        assert np.all(f.U[idx, np.arange(f.k)] > 0)

    def test_rank_too_high_rejected(self, exact):
        syn, plan, Xt = exact
        with pytest.raises(CPCAError, match="zero column|rank"):
            # a component-constant matrix cannot carry more than 3 directions
            approx_decode(np.zeros_like(Xt), plan, syn.Gr.laplacian, syn.Gc.laplacian)

    def test_intermediate_variant_runs(self, exact):
        syn, plan, Xt = exact
        res = approx_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian,
                            DecoderConfig(gammap_r=1e-6, gammap_c=1e-6))
        assert rel(res.X, syn.Y) <= 1e-3


class TestOneSided:
    def test_in_span_fixed_point(self, exact):
        syn, plan, Xt = exact
        for side, L in (("U", syn.Gr.laplacian), ("V", syn.Gc.laplacian)):
            X = approx_decode_onesided(Xt, plan, L, syn.Y, side).X
            assert rel(X, syn.Y) <= 1e-8

    def test_no_sampling_best_rank_k(self, rng):
        syn = synth_lowrank(20, 30, 2, 2, seed=3)
        Y = syn.Y + 0.01 * rng.standard_normal(syn.Y.shape)
        plan = SamplingPlan(np.arange(20), np.arange(30), 20, 30)
        X = approx_decode_onesided(Y, plan, syn.Gr.laplacian, Y, "U", DecoderConfig(rank=2)).X
        U, s, Vt = np.linalg.svd(Y)
        np.testing.assert_allclose(X, (U[:, :2] * s[:2]) @ Vt[:2], atol=1e-10)

    def test_matches_approx(self, exact):
        syn, plan, Xt = exact
        a = approx_decode(Xt, plan, syn.Gr.laplacian, syn.Gc.laplacian).X
        for side, L in (("U", syn.Gr.laplacian), ("V", syn.Gc.laplacian)):
            assert rel(approx_decode_onesided(Xt, plan, L, syn.Y, side).X, a) <= 1e-6


class TestBounds:
    """Upsampling and label errors stay below their closed-form bounds."""

    @pytest.mark.parametrize("seed", range(10))
    def test_subspace_and_label_bounds(self, seed):
        rng = np.random.default_rng(seed)
        G, lab = component_graph(120, 3, eta=0.05, seed=seed)
        E = sym_eig(G.laplacian, 4)
        P, gap = E.eigenvectors[:, :3], spectral_gap(E, 3)
        plan = draw_plan(120, 4, 60, 4, seed=seed)
        om = plan.omega_r
        d = rip_constant(P, om, 120)
        Ub = P @ rng.standard_normal((3, 3))
        nU = np.linalg.norm(Ub)

        U = graph_upsample(G.laplacian, om, Ub[om])
        assert np.linalg.norm(P @ (P.T @ U) - Ub) <= upsampling_bound(120, 60, d, gap.ratio, nU)

        U4, _ = intermediate_uv_decode(Ub[om], plan, G.laplacian, 0.5)
        assert np.linalg.norm(P @ (P.T @ U4) - Ub) <= regularized_subspace_bound(
            120, 60, d, 0.5, gap.lambda_k, gap.lambda_k1, 0.0, nU)

        c = P @ (P.T @ (lab == 0).astype(float))
        cs = graph_upsample(G.laplacian, om, c[om])
        assert np.linalg.norm(P @ (P.T @ cs) - c) <= label_bound(120, 60, d, gap.ratio, np.linalg.norm(c))


def test_detect_rank():
    assert detect_rank(np.array([10.0, 5.0, 1.0, 0.99, 0.0])) == 3
    with pytest.raises(CPCAError):
        detect_rank(np.zeros(3))


def test_config_validation():
    with pytest.raises(ValueError):
        DecoderConfig(variant="magic")
    with pytest.raises(ValueError):
        DecoderConfig(rank_threshold=1.5)
    with pytest.raises(ValueError):
        DecoderConfig(gamma=0.0)
    with pytest.raises(ValueError):
        DecoderConfig(sigma_rule="guess")
