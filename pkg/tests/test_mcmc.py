import logging

import numpy as np
import pytest
from scipy.stats import kstest

from gpinv.errors import InitializationError
from gpinv.gp import TrainingSet
from gpinv.mcmc import (
    BoxPrior,
    WalkerEnsemble,
    run_chain,
    run_sampler,
    sample_hyperposterior,
    stretch_step,
    vectorize_rows,
)


def flat(points):
    return np.zeros(np.atleast_2d(points).shape[0])


def gaussian(points):
    return -0.5 * np.sum(np.atleast_2d(points) ** 2, axis=1)


class TestBoxPrior:
    def test_validation(self):
        with pytest.raises(ValueError):
            BoxPrior([0.0, 0.0], [1.0])
        with pytest.raises(ValueError):
            BoxPrior([1.0], [1.0])

    def test_contains_and_sample(self):
        prior = BoxPrior([-1.0, 0.0], [1.0, 2.0])
        rng = np.random.default_rng(0)
        pts = prior.sample(rng, 1000)
        assert np.all(prior.contains(pts))
        assert not prior.contains(np.array([[2.0, 1.0]]))[0]


class TestStretchStep:
    def test_z_draw_distribution(self):
        # Collect the stretch factors actually used by the sampler via the
        # hook, then compare against the analytic CDF of g(z) ~ 1/sqrt(z).
        a = 2.0
        zs = []
        ens = WalkerEnsemble(
            positions=np.random.default_rng(0).random((2000, 1)),
            log_probs=np.zeros(2000),
            rng=np.random.default_rng(1),
        )
        while sum(len(z) for z in zs) < 1_000_000:
            stretch_step(ens, flat, stretch_a=a, hook=lambda h, act, par, z: zs.append(z.copy()))
        draws = np.concatenate(zs)[:1_000_000]
        cdf = lambda z: (np.sqrt(z * a) - 1.0) / (a - 1.0)
        stat = kstest(draws, cdf).statistic
        assert stat < 0.002

    def test_flat_target_stays_inside_box(self):
        prior = BoxPrior([0.0, 0.0], [1.0, 1.0])
        samples = run_sampler(flat, prior, n_walkers=50, n_steps=100, seed=2)
        assert np.all(prior.contains(samples))

    def test_zero_density_proposals_never_accepted(self):
        # Support is the left half of the box; walkers start inside it and
        # every proposal beyond 0.5 has -inf log-probability.
        prior = BoxPrior([0.0], [1.0])

        def half(points):
            points = np.atleast_2d(points)
            return np.where(points[:, 0] <= 0.5, 0.0, -np.inf)

        init = np.linspace(0.01, 0.49, 20)[:, None]
        chain, _ = run_chain(half, prior, 20, 200, seed=3, keep_every_step=True,
                             init_positions=init)
        assert np.all(chain[..., 0] <= 0.5)

    def test_odd_walker_count_rejected(self):
        ens = WalkerEnsemble(np.zeros((3, 1)), np.zeros(3), np.random.default_rng(0))
        with pytest.raises(ValueError, match="even"):
            stretch_step(ens, flat)

    def test_nan_logprob_warns_and_rejects(self, caplog):
        def nan_target(points):
            return np.full(np.atleast_2d(points).shape[0], np.nan)

        positions = np.random.default_rng(4).random((10, 1))
        ens = WalkerEnsemble(positions.copy(), np.zeros(10), np.random.default_rng(5))
        with caplog.at_level(logging.WARNING):
            accepted = stretch_step(ens, nan_target)
        assert accepted == 0
        np.testing.assert_array_equal(ens.positions, positions)
        assert "NaN" in caplog.text

    def test_half_ensemble_pairing(self):
        # Partners must come from the frozen complementary half.
        seen = []
        ens = WalkerEnsemble(
            positions=np.random.default_rng(6).random((40, 2)),
            log_probs=np.zeros(40),
            rng=np.random.default_rng(7),
        )
        stretch_step(ens, flat, hook=lambda h, act, par, z: seen.append((h, act.copy(), par.copy())))
        assert len(seen) == 2
        first, second = seen
        assert np.all(first[1] < 20) and np.all(first[2] >= 20)
        assert np.all(second[1] >= 20) and np.all(second[2] < 20)


class TestRunSampler:
    def test_gaussian_calibration(self):
        prior = BoxPrior([-10.0, -10.0], [10.0, 10.0])
        samples = run_sampler(gaussian, prior, n_walkers=200, n_steps=400, seed=3)
        assert np.abs(samples.mean(axis=0)).max() < 0.1
        assert np.abs(samples.var(axis=0) - 1.0).max() < 0.15

    def test_sharp_gaussian_concentration(self):
        prior = BoxPrior([0.0], [1.0])

        def sharp(points):
            return -0.5 * ((np.atleast_2d(points)[:, 0] - 0.5) / 1e-3) ** 2

        samples = run_sampler(sharp, prior, n_walkers=100, n_steps=400, seed=4)
        assert np.all(np.abs(samples - 0.5) < 0.01)

    def test_seed_determinism(self):
        prior = BoxPrior([-5.0], [5.0])
        s1 = run_sampler(gaussian, prior, n_walkers=30, n_steps=50, seed=11)
        s2 = run_sampler(gaussian, prior, n_walkers=30, n_steps=50, seed=11)
        np.testing.assert_array_equal(s1, s2)

    def test_affine_invariance_bit_exact(self):
        # Power-of-two scaling keeps every floating-point operation exact, so
        # the transformed chain must match the transformed original bit for bit.
        scale = np.array([2.0, 0.25])
        prior = BoxPrior([-8.0, -8.0], [8.0, 8.0])
        prior_scaled = BoxPrior(prior.lower * scale, prior.upper * scale)
        init = np.random.default_rng(8).uniform(-2, 2, (40, 2))

        def target_scaled(points):
            return gaussian(np.atleast_2d(points) / scale)

        plain, _ = run_chain(gaussian, prior, 40, 120, seed=9, init_positions=init)
        mapped, _ = run_chain(target_scaled, prior_scaled, 40, 120, seed=9,
                              init_positions=init * scale)
        np.testing.assert_array_equal(mapped, plain * scale)

    def test_all_minus_inf_initialization_fails(self):
        prior = BoxPrior([0.0], [1.0])

        def impossible(points):
            return np.full(np.atleast_2d(points).shape[0], -np.inf)

        with pytest.raises(InitializationError):
            run_sampler(impossible, prior, n_walkers=10, n_steps=5, seed=10)

    def test_too_few_walkers_rejected(self):
        prior = BoxPrior([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        with pytest.raises(ValueError, match="walker"):
            run_sampler(flat, prior, n_walkers=4, n_steps=5, seed=0)

    def test_vectorize_rows_adapter(self):
        wrapped = vectorize_rows(lambda row: -float(row[0] ** 2))
        np.testing.assert_allclose(wrapped(np.array([[1.0], [2.0]])), [-1.0, -4.0])


class TestSampleHyperposterior:
    @pytest.fixture
    def training(self):
        rng = np.random.default_rng(20)
        X = rng.uniform(-4, 4, (6, 1))
        return TrainingSet.from_data(X, np.sin(X[:, 0]))

    def test_one_d_prior_protocol(self, training):
        # Scalar-problem protocol: box (1e-8, 12) x (1e-8, 5), 100 samples.
        prior = BoxPrior([1e-8, 1e-8], [12.0, 5.0])
        ens = sample_hyperposterior(training, prior, n_walkers=100, n_steps=60, seed=21)
        assert ens.n_psi == 100
        psis = ens.hyperparams_matrix()
        assert np.all(psis > 1e-8 - 1e-15)
        assert np.all(psis <= [12.0, 5.0])

    def test_fits_share_training(self, training):
        prior = BoxPrior([1e-8, 1e-8], [2.0, 1.0])
        ens = sample_hyperposterior(training, prior, n_walkers=20, n_steps=30, seed=22)
        assert all(fit.training is training for fit in ens.fits)

    def test_determinism(self, training):
        prior = BoxPrior([1e-8, 1e-8], [12.0, 5.0])
        a = sample_hyperposterior(training, prior, n_walkers=20, n_steps=30, seed=23)
        b = sample_hyperposterior(training, prior, n_walkers=20, n_steps=30, seed=23)
        np.testing.assert_array_equal(a.hyperparams_matrix(), b.hyperparams_matrix())

    def test_dimension_check(self, training):
        with pytest.raises(ValueError, match="dimension"):
            sample_hyperposterior(training, BoxPrior([1e-8], [1.0]), 10, 5, 0)
