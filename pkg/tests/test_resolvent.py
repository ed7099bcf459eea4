import numpy as np
import pytest

from lplaw import (
    DomainError,
    IndexedMatrix,
    ModelConfig,
    PopulationCovariance,
    build_bundle,
    build_pi,
    green_identity_check,
    resolvent_identity_check,
    sample_data,
    solve_m,
    theta,
    top_trace_limit,
    trace_residual_bottom,
    trace_residual_top,
)
from lplaw.core import NumericError
from lplaw.resolvent import (
    companion_trace,
    entrywise_residual,
    entrywise_residuals_solve,
    sigma_weighted_trace,
    standard_vector_pairs,
)
from lplaw.mp import psi


def random_instance(seed, M=8, N=16, z=1 + 1j):
    rng = np.random.default_rng(seed)
    sigma = PopulationCovariance(rng.uniform(0.5, 5.0, M))
    X = sample_data(ModelConfig(M, N), seed)
    return sigma, X, build_bundle(z, X, sigma)


class TestBuildBundle:
    def test_scalar_hand_inversion(self):
        # M = N = 1, Sigma = [1]: G = [[-z, -x], [-x, -1]] / (z - x^2)
        sigma = PopulationCovariance(np.array([1.0]))
        X = sample_data(ModelConfig(1, 1), 4)
        x = float(X.entries[0, 0])
        z = 0.3 + 0.9j
        b = build_bundle(z, X, sigma)
        expected = np.array([[-z, -x], [-x, -1.0]]) / (z - x * x)
        np.testing.assert_allclose(b.G, expected, atol=1e-12)
        assert b.G[0, 0] == pytest.approx(z / (x * x - z))
        assert b.G[1, 1] == pytest.approx(1.0 / (x * x - z))

    def test_inverse_defect(self):
        for seed in range(5):
            _, _, b = random_instance(seed)
            assert b.defect_inverse <= 1e-8

    def test_block_crosschecks(self):
        for seed in range(10):
            _, _, b = random_instance(seed, M=8, N=16)
            assert b.defect_top_block <= 1e-9
            assert b.defect_bottom_block <= 1e-9

    def test_requires_upper_half_plane(self):
        sigma = PopulationCovariance(np.ones(2))
        X = sample_data(ModelConfig(2, 4), 0)
        with pytest.raises(DomainError):
            build_bundle(1.0 - 0.5j, X, sigma)

    def test_complex_field_blocks_hold(self):
        rng = np.random.default_rng(44)
        sigma = PopulationCovariance(rng.uniform(0.5, 5.0, 6))
        X = sample_data(ModelConfig(6, 12, field="complex"), 3)
        b = build_bundle(0.8 + 0.6j, X, sigma)
        assert b.defect_top_block <= 1e-9
        assert b.defect_bottom_block <= 1e-9
        assert green_identity_check(b, trials=5, seed=0) <= 1e-9


class TestBuildPi:
    def test_identity_population_reduction(self):
        sigma = PopulationCovariance(np.ones(4))
        m = 0.2 + 0.4j
        approx = build_pi(1j, m, sigma, 6)
        np.testing.assert_allclose(approx.top_diag, -1.0 / (1.0 + m) * np.ones(4))
        P = approx.matrix()
        np.testing.assert_allclose(P[4:, 4:], m * np.eye(6))

    def test_zero_m(self):
        sigma = PopulationCovariance(np.array([2.0, 1.0]))
        approx = build_pi(1j, 0.0, sigma, 3)
        np.testing.assert_allclose(approx.top_diag, [-2.0, -1.0])

    def test_singularity_guard(self):
        sigma = PopulationCovariance(np.array([2.0]))
        with pytest.raises(NumericError):
            build_pi(1j, -0.5 + 1e-16j, sigma, 2)

    def test_top_trace_mean_matches_rewrite(self, identity_psm):
        # with the solved m, M^-1 Tr(-Sigma(I+mSigma)^-1) equals z times
        # the deterministic limit of M^-1 Tr(R_M Sigma)
        z = 1j
        m = solve_m(z, identity_psm, 0.5).m
        sigma = PopulationCovariance(np.ones(10))
        approx = build_pi(z, m, sigma, 20)
        lhs = approx.top_trace_mean()
        assert lhs == pytest.approx(-1.0 / (1.0 + m), abs=1e-12)
        assert lhs == pytest.approx(z * top_trace_limit(z, m, 0.5), abs=1e-10)


class TestTheta:
    def test_scalar_case(self):
        sigma = PopulationCovariance(np.array([2.5]))
        S = np.array([[4.0]])
        z = 1 + 1j
        val = theta(z, S, sigma, np.sqrt)
        assert val == pytest.approx(np.sqrt(2.5) / (4.0 - z))

    def test_g_one_is_eigenvalue_comb_transform(self):
        sigma, X, b = random_instance(11)
        from lplaw import AtomicMeasure, stieltjes_transform
        from lplaw.sampling import sample_cov

        cov = sample_cov(sigma, X)
        z = 1 + 1j
        mu_unnorm = AtomicMeasure(cov.eigensystem.eigenvalues, np.ones(sigma.dim))
        assert theta(z, cov.S, sigma, lambda x: np.ones_like(x)) == pytest.approx(
            stieltjes_transform(mu_unnorm, z), abs=1e-10
        )

    def test_double_sum_oracle(self):
        sigma, X, _ = random_instance(12)
        from lplaw.sampling import sample_cov

        cov = sample_cov(sigma, X)
        lam, U = cov.eigensystem.eigenvalues, cov.eigensystem.vectors
        z = 0.5 + 0.8j
        for g in (lambda x: x, np.sqrt, lambda x: x**2 - 1):
            # double-sum definition with V = I (diagonal population)
            weights = np.abs(U.T) ** 2 @ g(sigma.eigenvalues)
            oracle = np.sum(weights / (lam - z))
            assert theta(z, cov.S, sigma, g) == pytest.approx(oracle, abs=1e-9)

    def test_g_identity_matches_weighted_trace(self):
        sigma, X, b = random_instance(13)
        from lplaw.sampling import sample_cov

        cov = sample_cov(sigma, X)
        z = 1 + 1j
        overlaps = sigma.quad_forms(cov.eigensystem.vectors)
        assert theta(z, cov.S, sigma, lambda x: x) == pytest.approx(
            sigma_weighted_trace(cov.eigensystem.eigenvalues, overlaps, z), abs=1e-9
        )


class TestTraceResiduals:
    def test_bottom_matches_spectrum_path(self):
        sigma, X, b = random_instance(21, M=12, N=24)
        lam = np.linalg.eigvalsh(b.R_M @ np.eye(12))  # placeholder to silence lint
        from lplaw.sampling import sample_cov

        cov = sample_cov(sigma, X)
        m = solve_m(b.z, sigma.psm(), 0.5).m
        direct = trace_residual_bottom(b, m)
        fast = companion_trace(cov.eigensystem.eigenvalues, 12, 24, b.z) - m
        assert direct == pytest.approx(fast, abs=1e-9)

    def test_top_matches_eigen_path(self):
        sigma, X, b = random_instance(22, M=12, N=24)
        from lplaw.sampling import sample_cov

        cov = sample_cov(sigma, X)
        m = solve_m(b.z, sigma.psm(), 0.5).m
        direct = trace_residual_top(b, m, sigma)
        overlaps = sigma.quad_forms(cov.eigensystem.vectors)
        tr = sigma_weighted_trace(cov.eigensystem.eigenvalues, overlaps, b.z)
        denom = 1.0 + m * sigma.eigenvalues
        fast = (b.z * tr + np.sum(sigma.eigenvalues / denom)) / 12
        assert direct == pytest.approx(fast, abs=1e-9)

    def test_cyclic_trace_invariant(self):
        sigma, X, b = random_instance(23)
        sqrt_sigma = sigma.apply_sqrt(np.eye(sigma.dim))
        lhs = np.trace(b.R_M @ sigma.matrix())
        rhs = np.trace(sqrt_sigma @ b.R_M @ sqrt_sigma)
        assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_finite_n_rewrite_identity(self):
        # the deterministic part of the top residual is forced by the
        # self-consistent equation once m is solved on the empirical
        # measure: M^-1 Tr(-Sigma(I+mSigma)^-1) = -z/phi (1/(zm) + 1)
        rng = np.random.default_rng(24)
        for _ in range(5):
            M, N = 20, 40
            sigma = PopulationCovariance(rng.uniform(0.5, 5.0, M))
            z = complex(rng.uniform(-1, 3), rng.uniform(0.2, 2))
            m = solve_m(z, sigma.psm(), M / N).m
            lhs = np.mean(-sigma.eigenvalues / (1 + m * sigma.eigenvalues))
            assert lhs == pytest.approx(z * top_trace_limit(z, m, M / N), abs=1e-11)

    def test_deep_spectral_region_small_residuals(self, identity_psm):
        z = 1 + 10j
        sigma = PopulationCovariance(np.ones(256))
        m = solve_m(z, identity_psm, 0.5).m
        for seed in range(3):
            X = sample_data(ModelConfig(256, 512), seed)
            b = build_bundle(z, X, sigma)
            assert abs(trace_residual_bottom(b, m)) <= 1e-3
            assert abs(trace_residual_top(b, m, sigma)) <= 2e-3

    def test_square_case_well_posed(self):
        sigma = PopulationCovariance(np.ones(16))
        X = sample_data(ModelConfig(16, 16), 1)
        b = build_bundle(1 + 1j, X, sigma)
        m = solve_m(1 + 1j, sigma.psm(), 1.0).m
        assert np.isfinite(abs(trace_residual_bottom(b, m)))


class TestEntrywise:
    def test_self_comparison_is_zero(self):
        sigma, X, b = random_instance(31)
        m = solve_m(b.z, sigma.psm(), 0.5).m
        approx = build_pi(b.z, m, sigma, 16)
        # replace Pi by G itself: the residual functional must vanish
        class _Self:
            def matrix(self):
                return b.G

        pairs = standard_vector_pairs(8, 16, n_random=2)
        assert entrywise_residual(b, _Self(), pairs) == 0.0

    def test_solve_path_matches_dense_path(self):
        sigma, X, b = random_instance(32)
        m = solve_m(b.z, sigma.psm(), 0.5).m
        approx = build_pi(b.z, m, sigma, 16)
        pairs = standard_vector_pairs(8, 16, n_random=3)
        dense = [
            abs(complex(np.vdot(v, (b.G - approx.matrix()) @ w))) for v, w in pairs
        ]
        fast = entrywise_residuals_solve(b.z, X, sigma, approx, pairs)
        np.testing.assert_allclose(fast, dense, atol=1e-10)

    def test_rejects_non_unit_vectors(self):
        sigma, X, b = random_instance(33)
        m = solve_m(b.z, sigma.psm(), 0.5).m
        approx = build_pi(b.z, m, sigma, 16)
        bad = np.ones(24)
        with pytest.raises(DomainError):
            entrywise_residual(b, approx, [(bad, bad)])

    def test_deep_stability_far_from_axis(self, identity_psm):
        # far above the real axis everything is nearly deterministic
        z = 1 + 100j
        M, N = 128, 256
        m = solve_m(z, identity_psm, 0.5).m
        sigma = PopulationCovariance(np.ones(M))
        pairs = standard_vector_pairs(M, N, n_random=2)
        for seed in range(3):
            X = sample_data(ModelConfig(M, N), seed)
            approx = build_pi(z, m, sigma, N)
            worst = max(entrywise_residuals_solve(z, X, sigma, approx, pairs))
            assert worst <= 1e-2

    def test_envelope_at_moderate_size(self, identity_psm):
        z = 1 + 1j
        M, N = 64, 128
        m = solve_m(z, identity_psm, 0.5).m
        bound = psi(z, m, N).psi
        sigma = PopulationCovariance(np.ones(M))
        pairs = standard_vector_pairs(M, N)
        hits = total = 0
        for seed in range(10):
            X = sample_data(ModelConfig(M, N), seed)
            approx = build_pi(z, m, sigma, N)
            for r in entrywise_residuals_solve(z, X, sigma, approx, pairs):
                total += 1
                hits += r <= 10 * bound
        assert hits / total >= 0.95


class TestIdentities:
    def test_diagonal_matrix_minor_exact(self):
        A = IndexedMatrix.from_dense(np.diag([2.0, 5.0]))
        assert resolvent_identity_check(A, trials=4, seed=0) < 1e-15

    def test_one_by_one_schur_degenerate(self):
        A = IndexedMatrix.from_dense(np.array([[3.0]]))
        # minor is empty: 1/S_11 = A_11 with an empty correction sum
        from lplaw.resolvent import _lemma_violations

        S = IndexedMatrix.from_dense(np.linalg.inv(A.values))
        assert _lemma_violations(A, S, 0) < 1e-15

    def test_random_complex_20x20(self):
        rng = np.random.default_rng(40)
        worst = 0.0
        for _ in range(20):
            A = IndexedMatrix.from_dense(
                rng.standard_normal((20, 20))
                + 1j * rng.standard_normal((20, 20))
                + 9.0 * np.eye(20)
            )
            worst = max(worst, resolvent_identity_check(A, trials=5, seed=1))
        assert worst <= 1e-10

    def test_green_function_identities(self):
        worst = 0.0
        for seed in range(10):
            _, _, b = random_instance(seed)
            worst = max(worst, green_identity_check(b, trials=5, seed=seed))
        assert worst <= 1e-9
