import numpy as np
import pytest

from sep_ergo.core import TorusLattice, replica_rng
from sep_ergo.ensembles import (
    Bernoulli,
    BlockFactor,
    DiffLawSpec,
    MarkovChain1d,
    block_xor,
    exact_difference_distribution,
    exact_state_distribution,
    measure_to_dict,
    pair_occupation_matrix,
    parse_measure,
)

CHAIN = ((0.7, 0.3), (0.4, 0.6))


class TestBernoulli:
    def test_moments(self):
        mu = Bernoulli(0.3)
        assert mu.density() == 0.3
        assert mu.covariance((0,)) == pytest.approx(0.21)
        assert mu.covariance((1,)) == 0.0
        assert mu.correlation_sum() == pytest.approx(0.21)

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            Bernoulli(1.5)


class TestMarkovChain:
    def test_closed_form_sums(self):
        # two-state chain with P01=0.3, P10=0.4: rho = 3/7 and the
        # correlation sums telescope to 156/343 and 240/343
        mu = MarkovChain1d(CHAIN)
        assert mu.density() == pytest.approx(3 / 7, abs=1e-14)
        assert mu.correlation_sum() == pytest.approx(156 / 343, abs=1e-12)
        diff = DiffLawSpec(mu, mu.density())
        assert diff.correlation_sum() == pytest.approx(240 / 343, abs=1e-12)

    def test_covariance_signs(self):
        mu = MarkovChain1d(CHAIN)
        lam = 1.0 - 0.3 - 0.4
        for k in range(1, 6):
            assert mu.covariance(k) == pytest.approx(
                (3 / 7) * (4 / 7) * lam**k, abs=1e-14)

    def test_rejects_degenerate_rows(self):
        with pytest.raises(ValueError):
            MarkovChain1d(((1.0, 0.0), (0.4, 0.6)))
        with pytest.raises(ValueError):
            MarkovChain1d(((0.7, 0.2), (0.4, 0.6)))


class TestBlockFactor:
    def test_xor_sums(self):
        mu = block_xor(1, 0.3)
        assert mu.density() == pytest.approx(0.42, abs=1e-14)
        assert mu.correlation_sum() == pytest.approx(0.3108, abs=1e-12)
        diff = DiffLawSpec(mu, mu.density())
        assert diff.correlation_sum() == pytest.approx(0.5544, abs=1e-12)

    def test_finite_range(self):
        mu = block_xor(1, 0.3)
        for k in range(2, 8):
            assert mu.covariance((k,)) == 0.0

    def test_2d_spec_needs_2d_lattice(self):
        mu = block_xor(2, 0.4)
        with pytest.raises(ValueError):
            mu.sample(TorusLattice(1, 8), 0)


class TestSampling:
    @pytest.mark.parametrize("mu", [Bernoulli(0.3), block_xor(1, 0.3),
                                    MarkovChain1d(CHAIN)])
    def test_empirical_density(self, mu):
        lat = TorusLattice(1, 64)
        reps = 400
        vals = np.stack([mu._sample(lat, replica_rng(42, r)).values
                         for r in range(reps)])
        est = vals.mean()
        se = vals.mean(axis=1).std(ddof=1) / np.sqrt(reps)
        assert abs(est - mu.density()) <= 5 * max(se, 1e-3)

    def test_sampling_deterministic_in_seed(self):
        mu = MarkovChain1d(CHAIN)
        lat = TorusLattice(1, 32)
        assert mu.sample(lat, 9) == mu.sample(lat, 9)
        assert mu.sample(lat, 9) != mu.sample(lat, 10)


class TestExactLaws:
    @pytest.mark.parametrize("mu", [Bernoulli(0.35), block_xor(1, 0.3),
                                    MarkovChain1d(CHAIN)])
    def test_exact_law_moments(self, mu):
        lat = TorusLattice(1, 6)
        dist = exact_state_distribution(mu, lat)
        assert dist.values.sum() == pytest.approx(1.0, abs=1e-12)
        m = pair_occupation_matrix(mu, lat)
        # the ring law of the chain is the closed bridge, whose marginal is
        # tilted away from the open-chain density by O(lambda^L)
        tol = 2 * 0.3**6 if isinstance(mu, MarkovChain1d) else 1e-12
        assert np.allclose(np.diag(m), mu.density(), atol=tol)
        # two-point values on the ring match the measure covariance away from
        # the wrap for the finite-range spec
        if isinstance(mu, (Bernoulli, BlockFactor)):
            got = m[0, 2] - mu.density() ** 2
            assert got == pytest.approx(mu.covariance((2,)), abs=1e-12)

    def test_exact_law_matches_sampler(self):
        mu = MarkovChain1d(CHAIN)
        lat = TorusLattice(1, 4)
        dist = exact_state_distribution(mu, lat)
        reps = 4000
        counts = np.zeros(16)
        pow2 = 2 ** np.arange(4)
        for r in range(reps):
            counts[int(mu._sample(lat, replica_rng(3, r)).values @ pow2)] += 1
        emp = counts / reps
        band = 4 * np.sqrt(dist.values * (1 - dist.values) / reps)
        assert (np.abs(emp - dist.values) <= band + 1e-12).all()


class TestDiffLaw:
    def test_density_mismatch_rejected(self):
        with pytest.raises(ValueError):
            DiffLawSpec(Bernoulli(0.3), 0.4)

    def test_sigma(self):
        diff = DiffLawSpec(Bernoulli(0.3), 0.3)
        assert diff.sigma == pytest.approx(0.21, abs=1e-14)

    def test_sample_alphabet(self):
        diff = DiffLawSpec(MarkovChain1d(CHAIN), 3 / 7)
        xi = diff._sample(TorusLattice(1, 32), replica_rng(1, 0))
        assert set(np.unique(xi.values)) <= {-1, 0, 1}

    def test_exact_difference_distribution(self):
        diff = DiffLawSpec(Bernoulli(0.5), 0.5)
        lat = TorusLattice(1, 3)
        dist = exact_difference_distribution(diff, lat)
        assert dist.values.sum() == pytest.approx(1.0, abs=1e-12)
        # site marginal: P(xi = +1) = P(xi = -1) = rho(1 - rho)
        digits = (np.arange(27)[:, None] // 3 ** np.arange(3)[None, :]) % 3
        for s in range(3):
            plus = dist.values[digits[:, s] == 2].sum()
            minus = dist.values[digits[:, s] == 0].sum()
            assert plus == pytest.approx(0.25, abs=1e-12)
            assert minus == pytest.approx(0.25, abs=1e-12)

    def test_exact_difference_matches_sampler(self):
        diff = DiffLawSpec(MarkovChain1d(CHAIN), 3 / 7)
        lat = TorusLattice(1, 3)
        dist = exact_difference_distribution(diff, lat)
        reps = 4000
        counts = np.zeros(27)
        pow3 = 3 ** np.arange(3)
        for r in range(reps):
            xi = diff._sample(lat, replica_rng(8, r))
            counts[int((xi.values + 1) @ pow3)] += 1
        emp = counts / reps
        band = 4 * np.sqrt(dist.values * (1 - dist.values) / reps)
        assert (np.abs(emp - dist.values) <= band + 1e-12).all()


class TestParsing:
    @pytest.mark.parametrize("mu", [Bernoulli(0.3), block_xor(2, 0.4),
                                    MarkovChain1d(CHAIN)])
    def test_roundtrip(self, mu):
        d = measure_to_dict(mu)
        back = parse_measure(d, d.get("dim", 1))
        assert measure_to_dict(back) == d

    def test_unknown_kind_and_keys(self):
        with pytest.raises(ValueError):
            parse_measure({"kind": "nosuch"}, 1)
        with pytest.raises(ValueError):
            parse_measure({"kind": "bernoulli", "rho": 0.3, "junk": 1}, 1)
        with pytest.raises(ValueError):
            parse_measure({"rho": 0.3}, 1)


def test_fuzz_chain_sums_consistent():
    # random well-mixed chains: B - A = sigma must hold to round-off
    rng = np.random.default_rng(2718)
    for _ in range(25):
        a, b = rng.uniform(0.05, 0.95, size=2)
        mu = MarkovChain1d(((1 - a, a), (b, 1 - b)))
        diff = DiffLawSpec(mu, mu.density())
        sigma = mu.density() * (1 - mu.density())
        assert diff.correlation_sum() - mu.correlation_sum() == pytest.approx(
            sigma, abs=1e-9)
