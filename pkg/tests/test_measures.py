import numpy as np
import pytest

from conftest import mp_cdf_S
from lplaw import (
    AtomicMeasure,
    DeterministicMeasure,
    DomainError,
    Interval,
    ModelConfig,
    PopulationCovariance,
    deterministic_mass,
    empirical_measures,
    interval_sup_distance,
    sample_cov,
    sample_data,
    vector_measure,
)
from lplaw.shrinkage import delta_curve


def sampled_system(seed, M=24, N=48, taus=None):
    rng = np.random.default_rng(seed)
    taus = rng.uniform(0.5, 5.0, M) if taus is None else np.asarray(taus)
    M = taus.size
    sigma = PopulationCovariance(taus)
    cov = sample_cov(sigma, sample_data(ModelConfig(M, max(N, 2 * M)), seed))
    return sigma, cov.eigensystem


class TestEmpiricalMeasures:
    def test_identity_population_measures_coincide(self):
        sigma, eigsys = sampled_system(0, taus=np.ones(16))
        mu_hat, nu_hat = empirical_measures(eigsys, sigma)
        np.testing.assert_allclose(nu_hat.weights, mu_hat.weights, atol=1e-12)
        np.testing.assert_array_equal(nu_hat.locations, mu_hat.locations)

    def test_masses(self):
        sigma, eigsys = sampled_system(1)
        mu_hat, nu_hat = empirical_measures(eigsys, sigma)
        assert mu_hat.total_mass == pytest.approx(1.0, abs=1e-12)
        assert nu_hat.total_mass == pytest.approx(sigma.trace() / sigma.dim, abs=1e-10)

    def test_two_dim_rotation_hand_case(self):
        # S whose eigenvectors sit at 45 degrees to a diag(1,3) population:
        # both sigma-weights are (1+3)/2 / M... i.e. 2/M each
        theta = np.pi / 4
        U = np.array(
            [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
        )
        S = (U * np.array([2.0, 1.0])) @ U.T
        from lplaw import SampleEigensystem

        eigsys = SampleEigensystem.from_matrix(S)
        sigma = PopulationCovariance(np.array([3.0, 1.0]))
        _, nu_hat = empirical_measures(eigsys, sigma)
        np.testing.assert_allclose(nu_hat.weights, [1.0, 1.0], atol=1e-12)


class TestVectorMeasure:
    def test_eigenvector_alignment(self):
        _, eigsys = sampled_system(2)
        x = eigsys.vectors[:, 0]
        fm = vector_measure(eigsys, x)
        k = np.argmax(fm.weights)
        assert fm.weights[k] == pytest.approx(1.0, abs=1e-12)
        assert fm.locations[k] == pytest.approx(eigsys.eigenvalues[0])

    def test_weights_sum_to_one(self):
        _, eigsys = sampled_system(3)
        rng = np.random.default_rng(9)
        x = rng.standard_normal(eigsys.dim)
        x /= np.linalg.norm(x)
        fm = vector_measure(eigsys, x)
        assert fm.total_mass == pytest.approx(1.0, abs=1e-10)

    def test_population_frame_average_recovers_both_combs(self):
        # averaging the vector measures over the population eigenvectors
        # with weights 1 resp. tau_j reproduces mu_hat resp. nu_hat
        sigma, eigsys = sampled_system(4, M=10, N=20)
        M = sigma.dim
        mu_hat, nu_hat = empirical_measures(eigsys, sigma)
        acc_mu = np.zeros(M)
        acc_nu = np.zeros(M)
        for j in range(M):
            e = np.zeros(M)
            e[j] = 1.0
            fm = vector_measure(eigsys, e)
            # vector measures sort atoms ascending; map back by location
            order = np.argsort(eigsys.eigenvalues, kind="stable")
            w = np.empty(M)
            w[order] = fm.weights
            acc_mu += w / M
            acc_nu += sigma.eigenvalues[j] * w / M
        order = np.argsort(eigsys.eigenvalues, kind="stable")
        np.testing.assert_allclose(acc_mu[order], mu_hat.weights, atol=1e-9)
        np.testing.assert_allclose(acc_nu[order], nu_hat.weights, atol=1e-9)

    def test_rejects_non_unit(self):
        _, eigsys = sampled_system(5)
        with pytest.raises(DomainError):
            vector_measure(eigsys, np.ones(eigsys.dim))


class TestDeterministicMass:
    def test_full_support_normalization(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        lo, hi = measure.support_low, measure.support_high
        total = deterministic_mass(measure, Interval(lo - 0.05, hi + 0.05))
        assert total == pytest.approx(1.0, abs=1e-3)

    def test_disjoint_interval_is_empty(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        assert deterministic_mass(measure, Interval(3.5, 4.0)) == pytest.approx(
            0.0, abs=1e-9
        )

    def test_against_analytic_antiderivative(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        lm = (1 - np.sqrt(0.5)) ** 2
        got = deterministic_mass(measure, Interval(lm, 1.0))
        assert got == pytest.approx(mp_cdf_S(1.0, 0.5), abs=1e-4)

    def test_companion_atom_counts(self, identity_profile):
        comp = DeterministicMeasure.from_profile(identity_profile, "companion")
        with_atom = deterministic_mass(comp, Interval(-1.0, 1.0))
        without = deterministic_mass(comp, Interval(1e-4, 1.0))
        assert with_atom - without == pytest.approx(0.5, abs=1e-6)

    def test_coverage_error(self):
        grid = np.linspace(0.0, 1.0, 50)
        m = DeterministicMeasure(grid, np.ones(50), 0.0, "esd_of_S", ((0.0, 1.0),))
        with pytest.raises(DomainError):
            deterministic_mass(m, Interval(0.5, 2.0))


class TestIntervalSupDistance:
    def test_self_distance_of_discretization(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        cum = measure.cumulative()
        grid = np.linspace(measure.support_low, measure.support_high, 4000)
        masses = np.diff(cum(grid))
        emp = AtomicMeasure(0.5 * (grid[1:] + grid[:-1]), masses)
        d = interval_sup_distance(emp, measure, grid_size=200)
        assert d <= 2e-3

    def test_atom_against_uniform_hand_value(self):
        # a vanishing interval [1, 1+h) captures the whole atom against
        # ~h/2 of uniform mass, so the interval sup tends to 1; the
        # half-line (Kolmogorov) sup of the same pair would be 0.5
        grid = np.linspace(0.0, 2.0, 201)
        uniform = DeterministicMeasure(
            grid, np.full(201, 0.5), 0.0, "esd_of_S", ((0.0, 2.0),)
        )
        atom = AtomicMeasure(np.array([1.0]), np.array([1.0]))
        d = interval_sup_distance(atom, uniform, grid_size=2001)
        assert d == pytest.approx(1.0, abs=0.01)
        cum_d = uniform.cumulative()
        kolmogorov = max(
            abs(atom.mass_below(x) - float(cum_d(x))) for x in np.linspace(0, 2, 2001)
        )
        assert kolmogorov == pytest.approx(0.5, abs=0.01)

    def test_weighted_distance_small_at_desk_scale(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        xs, vals = delta_curve(identity_profile)
        weight = lambda x: np.interp(x, xs, vals)
        sigma = PopulationCovariance(np.ones(512))
        for seed in (0, 1, 2):
            cov = sample_cov(sigma, sample_data(ModelConfig(512, 1024), seed))
            _, nu_hat = empirical_measures(cov.eigensystem, sigma)
            d = interval_sup_distance(nu_hat, measure, weight, grid_size=200)
            assert d <= 0.05

    def test_grid_size_validation(self, identity_profile):
        measure = DeterministicMeasure.from_profile(identity_profile)
        atom = AtomicMeasure(np.array([1.0]), np.array([1.0]))
        with pytest.raises(DomainError):
            interval_sup_distance(atom, measure, grid_size=1)


class TestNormalizationBridge:
    def test_companion_density_is_phi_times_sample_density(self, two_atom_profile):
        comp = DeterministicMeasure.from_profile(two_atom_profile, "companion")
        samp = DeterministicMeasure.from_profile(two_atom_profile, "esd_of_S")
        np.testing.assert_allclose(comp.density, 0.5 * samp.density, atol=1e-14)
        assert comp.atom_zero_mass == pytest.approx(0.5)
        assert samp.atom_zero_mass == 0.0

    def test_limit_trace_preservation(self, two_atom_profile, two_atom_psm):
        # integral of delta against the limit spectrum equals the
        # population mean (deterministic shadow of oracle trace identity)
        measure = DeterministicMeasure.from_profile(two_atom_profile)
        xs, vals = delta_curve(two_atom_profile)
        weight = lambda x: np.interp(x, xs, vals)
        lo, hi = measure.support_low, measure.support_high
        got = deterministic_mass(measure, Interval(lo - 0.01, hi + 0.01), weight)
        assert got == pytest.approx(two_atom_psm.mean(), rel=0.02)
