import math
from fractions import Fraction as F

import numpy as np
import pytest
import scipy.stats

from matprod import (
    EmptyBatch,
    InsufficientSamples,
    SampleBatch,
    UnitVector,
    chi_square_product_sampler,
    empirical_moment,
    ks_to_gaussian,
    make_config,
    run_trials,
    two_sample_ks,
    zero_event_probability,
)


def manual_batch(samples, zero_events=0, trials=None):
    samples = np.sort(np.asarray(samples, dtype=np.float64))
    trials = trials if trials is not None else samples.size + zero_events
    return SampleBatch(
        samples=samples,
        zero_event_count=zero_events,
        trials=trials,
        seed=0,
        fingerprint="manual",
    )


class TestRunTrials:
    def test_empty(self, gauss):
        cfg = make_config((3, 3), 1, gauss)
        batch = run_trials(cfg, UnitVector.uniform(3), 0, seed=0)
        assert batch.trials == 0
        assert batch.samples.size == 0
        assert batch.zero_event_count == 0

    def test_deterministic_ensemble_all_zero_logs(self, rad):
        cfg = make_config((4, 1), 1, rad)
        batch = run_trials(cfg, UnitVector.basis(4), 100, seed=123)
        assert batch.samples.size == 100
        assert np.all(batch.samples == 0.0)

    def test_reproducible(self, gauss):
        cfg = make_config((5, 6, 4), F(1, 2), gauss)
        u = UnitVector.uniform(5)
        a = run_trials(cfg, u, 3000, seed=9)
        b = run_trials(cfg, u, 3000, seed=9)
        assert np.array_equal(a.samples, b.samples)
        assert a.zero_event_count == b.zero_event_count

    def test_thread_count_does_not_change_results(self, gauss):
        cfg = make_config((6, 6, 6), F(1, 2), gauss)
        u = UnitVector.uniform(6)
        serial = run_trials(cfg, u, 4000, seed=4, threads=1)
        threaded = run_trials(cfg, u, 4000, seed=4, threads=8)
        assert np.array_equal(serial.samples, threaded.samples)
        assert serial.zero_event_count == threaded.zero_event_count

    def test_merge_property(self, gauss):
        cfg = make_config((4, 5, 4), F(3, 4), gauss)
        u = UnitVector.uniform(4)
        full = run_trials(cfg, u, 5000, seed=21)
        head = run_trials(cfg, u, 1700, seed=21)
        tail = run_trials(cfg, u, 3300, seed=21, trial_offset=1700)
        merged = np.sort(np.concatenate([head.samples, tail.samples]))
        assert np.array_equal(merged, full.samples)
        assert head.zero_event_count + tail.zero_event_count == full.zero_event_count

    def test_zero_event_frequency_matches_formula(self, gauss):
        cfg = make_config((3, 3, 3, 3, 3), F(1, 2), gauss)
        n = 100_000
        batch = run_trials(cfg, UnitVector.uniform(3), n, seed=17)
        q = zero_event_probability(cfg).probability
        tolerance = 4 * math.sqrt(q * (1 - q) / n)
        assert abs(batch.zero_event_rate - q) <= tolerance

    def test_batch_invariants_validated(self):
        with pytest.raises(ValueError):
            SampleBatch(
                samples=np.array([1.0, 0.0]),
                zero_event_count=0,
                trials=2,
                seed=0,
                fingerprint="x",
            )
        with pytest.raises(ValueError):
            SampleBatch(
                samples=np.array([0.0]),
                zero_event_count=1,
                trials=1,
                seed=0,
                fingerprint="x",
            )


class TestEmpiricalMoment:
    def test_all_zero_logs(self):
        batch = manual_batch(np.zeros(50))
        estimate = empirical_moment(batch, 3)
        assert estimate.estimate == 1.0
        assert estimate.stderr == 0.0

    def test_two_samples(self):
        batch = manual_batch([math.log(2), math.log(8)])
        assert empirical_moment(batch, 1).estimate == pytest.approx(5.0)

    def test_zero_events_count_as_zero(self):
        batch = manual_batch([math.log(2), math.log(8)], zero_events=2)
        assert empirical_moment(batch, 1).estimate == pytest.approx(2.5)

    def test_insufficient(self):
        with pytest.raises(InsufficientSamples):
            empirical_moment(manual_batch([0.0]), 1)

    def test_first_moment_near_one(self, gauss):
        cfg = make_config((8, 8, 8), F(1, 2), gauss)
        batch = run_trials(cfg, UnitVector.uniform(8), 20_000, seed=2)
        estimate = empirical_moment(batch, 1)
        assert abs(estimate.estimate - 1.0) <= 5 * estimate.stderr


class TestKsToGaussian:
    def test_single_sample_at_median(self):
        batch = manual_batch([-1.0])
        assert ks_to_gaussian(batch, -1.0, 4.0) == pytest.approx(0.5)

    def test_affine_invariance(self, gauss):
        cfg = make_config((16, 16, 16), 1, gauss)
        batch = run_trials(cfg, UnitVector.uniform(16), 2000, seed=8)
        direct = ks_to_gaussian(batch, -0.1, 0.25)
        standardized = manual_batch((batch.samples + 0.1) / 0.5)
        assert ks_to_gaussian(standardized, 0.0, 1.0) == pytest.approx(direct, abs=1e-12)

    def test_empty_rejected(self):
        batch = manual_batch([], zero_events=3)
        with pytest.raises(EmptyBatch):
            ks_to_gaussian(batch, 0.0, 1.0)


class TestChiSquareSampler:
    def test_empty_width_list(self):
        batch = chi_square_product_sampler((), 100, seed=0)
        assert np.all(batch.samples == 0.0)

    def test_mean_of_exp(self):
        batch = chi_square_product_sampler((2,), 100_000, seed=1)
        values = np.exp(batch.samples)
        stderr = values.std(ddof=1) / math.sqrt(values.size)
        assert abs(values.mean() - 1.0) <= 5 * stderr
        # chi2_2/2 has unit variance
        var_se = math.sqrt(np.var((values - 1.0) ** 2, ddof=1) / values.size)
        assert abs(values.var(ddof=1) - 1.0) <= 5 * max(var_se, 1e-3)

    def test_deterministic(self):
        a = chi_square_product_sampler((8, 8), 1000, seed=7)
        b = chi_square_product_sampler((8, 8), 1000, seed=7)
        assert np.array_equal(a.samples, b.samples)

    def test_gamma_path_matches_sum_of_squares_law(self):
        # dof above the exact threshold goes through the gamma sampler;
        # both routes must produce the same distribution
        n = 40
        batch = chi_square_product_sampler((n,), 20_000, seed=3)
        ref = scipy.stats.chi2(df=n).rvs(size=20_000, random_state=11)
        report = two_sample_ks(np.exp(batch.samples) * n, ref)
        assert report.statistic < 2 * report.critical_5pct

    def test_matches_product_law_for_gaussian_identity_mask(self, gauss):
        cfg = make_config((16, 16, 16, 16), 1, gauss)
        product = run_trials(cfg, UnitVector.uniform(16), 30_000, seed=5)
        reference = chi_square_product_sampler((16, 16, 16), 30_000, seed=6)
        report = two_sample_ks(product.samples, reference.samples)
        assert report.statistic < 2 * report.critical_5pct

    def test_log_moments_match_digamma_values(self):
        # ln(chi2_n/n) has mean digamma(n/2) - ln(n/2) and variance
        # polygamma(1, n/2); the depth-16 width-64 sum is the exact reference
        # behind the Normal(-0.25, 0.5) approximation
        import scipy.special as sp
        from matprod import summary

        d, n, trials = 16, 64, 100_000
        batch = chi_square_product_sampler((n,) * d, trials, seed=9)
        stats = summary(batch)
        exact_mean = d * (sp.digamma(n / 2) - math.log(n / 2))
        exact_var = d * sp.polygamma(1, n / 2)
        mean_se = math.sqrt(stats.variance / trials)
        assert abs(stats.mean - exact_mean) <= 5 * mean_se
        centered = batch.samples - stats.mean
        var_se = math.sqrt(
            max(np.mean(centered**4) - stats.variance**2, 0.0) / trials
        )
        assert abs(stats.variance - exact_var) <= 5 * var_se
        # the exact values in turn sit within the stated normal approximation
        assert exact_mean == pytest.approx(-0.25, abs=5 * mean_se)
        assert exact_var == pytest.approx(0.5, abs=5 * max(var_se, 2e-3))
