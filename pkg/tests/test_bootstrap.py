"""Bootstrap kit: resampling identities, quantiles, score tests, coverage."""

import itertools
import math

import numpy as np
import pytest

from cltcert.bootstrap import (
    bootstrap_ball_quantile,
    bootstrap_score_test,
    chi2_quantile,
    efron_resample,
    elliptical_coverage_experiment,
    exponential_rate_scores,
    gaussian_location_scores,
    rao_score_test,
    score_level_experiment,
)
from cltcert.engine import InfeasibleError, MomentSummary
from cltcert.samplers import DistributionSpec, sample_gaussian
from cltcert.tensors import Sample, SpdError


# ---------------------------------------------------------------------------
# Efron resampling
# ---------------------------------------------------------------------------

def test_efron_preconditions_and_shape():
    with pytest.raises(ValueError):
        efron_resample(Sample(np.array([[1.0, 2.0]])), seed=0)
    s = sample_gaussian(np.eye(2), 50, seed=1)
    r = efron_resample(s, seed=0)
    assert r.n == 50 and r.dim == 2
    assert r is not s


def test_efron_mean_and_covariance_identities_mc():
    s = sample_gaussian(np.diag([1.0, 3.0]), 100, seed=2)
    sigma_hat = s.covariance()  # biased (ddof=0) sample covariance
    means, covs = [], []
    for k in range(400):
        r = efron_resample(s, seed=k)
        means.append(r.data.mean(axis=0))
        covs.append((r.data.T @ r.data) / r.n)
    mean_of_means = np.mean(means, axis=0)
    # E*(X̄*) = 0 exactly; MC noise is ~ sqrt(tr Σ̂ / (n·reps))
    assert np.abs(mean_of_means).max() < 4 * math.sqrt(3.0 / (100 * 400))
    assert np.allclose(np.mean(covs, axis=0), sigma_hat, atol=0.08)


def test_efron_dense_enumeration_identities():
    # full multinomial expectation over all n^n index tuples at n = 4
    rng = np.random.default_rng(5)
    data = rng.standard_normal((4, 2))
    centered = data - data.mean(axis=0)
    sigma_hat = (centered.T @ centered) / 4
    mean_acc = np.zeros(2)
    outer_acc = np.zeros((2, 2))
    count = 0
    for idx in itertools.product(range(4), repeat=4):
        xbar = centered[list(idx)].mean(axis=0)
        mean_acc += xbar
        outer_acc += np.outer(xbar, xbar)
        count += 1
    assert count == 256
    assert np.abs(mean_acc / count).max() < 1e-12
    assert np.allclose(outer_acc / count, sigma_hat / 4, atol=1e-12)


# ---------------------------------------------------------------------------
# bootstrap ball quantile
# ---------------------------------------------------------------------------

def test_ball_quantile_gaussian_matches_chi_limit():
    s = sample_gaussian(np.eye(3), 10_000, seed=3)
    res = bootstrap_ball_quantile(s, np.eye(3), alpha=0.1, B=2000, seed=0)
    target = math.sqrt(chi2_quantile(0.1, 3))
    assert res.quantile == pytest.approx(target, rel=0.05)
    assert res.replicates.size == 2000


def test_ball_quantile_alpha_limits_and_monotonicity():
    s = sample_gaussian(np.eye(2), 500, seed=4)
    hi = bootstrap_ball_quantile(s, np.eye(2), alpha=1 - 1e-9, B=400, seed=7)
    assert hi.quantile == hi.replicates.min()
    q10 = bootstrap_ball_quantile(s, np.eye(2), alpha=0.10, B=400, seed=7)
    q50 = bootstrap_ball_quantile(s, np.eye(2), alpha=0.50, B=400, seed=7)
    assert q10.quantile >= q50.quantile


def test_ball_quantile_weight_homogeneity_exact():
    s = sample_gaussian(np.eye(3), 300, seed=5)
    q1 = bootstrap_ball_quantile(s, np.eye(3), alpha=0.2, B=250, seed=9)
    q4 = bootstrap_ball_quantile(s, 4.0 * np.eye(3), alpha=0.2, B=250, seed=9)
    assert q4.quantile == 2.0 * q1.quantile  # exact binary-float scaling


def test_ball_quantile_validation_and_certificate():
    s = sample_gaussian(np.eye(2), 400, seed=6)
    with pytest.raises(ValueError):
        bootstrap_ball_quantile(s, np.eye(2), alpha=0.1, B=100)
    with pytest.raises(SpdError):
        bootstrap_ball_quantile(s, -np.eye(2), alpha=0.1, B=300)
    with pytest.raises(ValueError):
        bootstrap_ball_quantile(s, np.eye(3), alpha=0.1, B=300)
    res = bootstrap_ball_quantile(s, np.eye(2), alpha=0.1, B=300, seed=1,
                                  sigma2=0.02)
    assert res.certificate is not None
    assert res.certificate.theorem == "bootstrap_ball"
    assert res.certificate.total > 0


# ---------------------------------------------------------------------------
# score tests
# ---------------------------------------------------------------------------

def test_bootstrap_score_test_rejects_separated_mean():
    rng = np.random.default_rng(8)
    scores = Sample(rng.standard_normal((200, 3)) + 2.0, label="shifted")
    res = bootstrap_score_test(scores, alpha=0.1, B=300, seed=0)
    assert res.reject
    assert res.statistic > res.threshold


def test_bootstrap_score_test_quantile_monotone_and_rotation():
    rng = np.random.default_rng(9)
    scores = Sample(rng.standard_normal((300, 3)))
    r1 = bootstrap_score_test(scores, alpha=0.01, B=400, seed=3)
    r2 = bootstrap_score_test(scores, alpha=0.50, B=400, seed=3)
    assert r1.threshold >= r2.threshold

    # the statistic is a norm of the score sum: rotating the rows changes
    # nothing up to float noise, so the decision is preserved
    q, _ = np.linalg.qr(np.random.default_rng(10).standard_normal((3, 3)))
    rot = Sample(scores.data @ q.T)
    r3 = bootstrap_score_test(rot, alpha=0.01, B=400, seed=3)
    assert r3.statistic == pytest.approx(r1.statistic, rel=1e-9)
    assert r3.threshold == pytest.approx(r1.threshold, rel=1e-6)
    assert r3.reject == r1.reject


def test_bootstrap_score_test_validation_and_certificates():
    rng = np.random.default_rng(11)
    scores = Sample(rng.standard_normal((10_000, 3)))
    with pytest.raises(ValueError):
        bootstrap_score_test(scores, alpha=0.1, B=100)
    with pytest.raises(ValueError):
        bootstrap_score_test(Sample(np.array([[1.0]])), alpha=0.1, B=300)
    ok = bootstrap_score_test(scores, alpha=0.1, B=300, seed=0,
                              sigma2_s=0.05)
    assert ok.certificate is not None
    assert ok.certificate.theorem == "bootstrap_score_level"
    assert ok.certificate_error is None

    small = Sample(rng.standard_normal((200, 3)))
    bad = bootstrap_score_test(small, alpha=0.1, B=300, seed=0, sigma2_s=1.0)
    assert bad.certificate is None
    assert "feasibility" in bad.certificate_error
    assert isinstance(bad.reject, bool)  # test still ran


def test_chi2_quantile_oracles():
    for alpha in (0.5, 0.2, 0.05, 0.01):
        assert chi2_quantile(alpha, 2) == pytest.approx(-2.0 * math.log(alpha),
                                                        rel=1e-10)
    assert chi2_quantile(0.05, 1) == pytest.approx(1.959964 ** 2, abs=1e-4)
    qs = [chi2_quantile(a, 3) for a in (0.5, 0.1, 0.01)]
    assert qs[0] < qs[1] < qs[2]
    with pytest.raises(ValueError):
        chi2_quantile(0.0, 3)
    with pytest.raises(ValueError):
        chi2_quantile(0.5, 0)


def test_rao_zero_score_never_rejects():
    scores = Sample(np.array([[1.0], [-1.0]]))
    res = rao_score_test(scores, np.array([[2.0]]), alpha=0.5)
    assert res.statistic == 0.0
    assert not res.reject


def test_rao_level_and_qq_against_chi2():
    rng = np.random.default_rng(12)
    n, trials = 500, 2000
    info = n * np.eye(1)
    stats, rejects = [], 0
    for _ in range(trials):
        scores = Sample(rng.standard_normal((n, 1)))
        res = rao_score_test(scores, info, alpha=0.05)
        stats.append(res.statistic)
        rejects += res.reject
    level = rejects / trials
    assert abs(level - 0.05) <= 0.02
    # QQ correlation of the replicate statistics against χ²₁ quantiles
    stats = np.sort(stats)
    probs = (np.arange(trials) + 0.5) / trials
    theo = np.array([chi2_quantile(1.0 - p, 1) for p in probs])
    corr = np.corrcoef(stats, theo)[0, 1]
    assert corr >= 0.99


def test_rao_validation_and_certificate():
    scores = Sample(np.random.default_rng(13).standard_normal((100, 2)))
    with pytest.raises(SpdError):
        rao_score_test(scores, np.zeros((2, 2)), alpha=0.1)
    with pytest.raises(ValueError):
        rao_score_test(scores, np.eye(3), alpha=0.1)
    ms = MomentSummary(d=2, n=100, x_w3_frob=0.5, x_w4_mean=8.0,
                       sigma_cond=1.0)
    res = rao_score_test(scores, np.eye(2), alpha=0.1, moments=ms)
    assert res.certificate is not None
    assert res.certificate.theorem == "score_chi2_level"


def test_demo_score_generators():
    data = sample_gaussian(np.eye(2), 5000, seed=14, mean=[2.0, -1.0])
    s = gaussian_location_scores(data, [2.0, -1.0])
    assert np.abs(s.mean()).max() < 0.1
    with pytest.raises(ValueError):
        gaussian_location_scores(data, [1.0])

    rng = np.random.default_rng(15)
    expo = Sample(rng.exponential(0.5, size=5000))
    sc = exponential_rate_scores(expo, rate0=2.0)
    assert abs(float(sc.mean()[0])) < 0.05
    with pytest.raises(ValueError):
        exponential_rate_scores(expo, rate0=0.0)
    with pytest.raises(ValueError):
        exponential_rate_scores(Sample(-np.ones((5, 1))), rate0=1.0)
    with pytest.raises(ValueError):
        exponential_rate_scores(sample_gaussian(np.eye(2), 10, seed=1), 1.0)


# ---------------------------------------------------------------------------
# level / coverage experiments
# ---------------------------------------------------------------------------

def test_score_level_experiment_smoke_and_determinism():
    r1 = score_level_experiment(d=2, n=50, alpha=0.2, B=200, trials=60, seed=4)
    r2 = score_level_experiment(d=2, n=50, alpha=0.2, B=200, trials=60, seed=4)
    assert r1 == r2
    assert 0.0 <= r1.level <= 0.5
    assert r1.stderr > 0


def test_coverage_experiment_smoke():
    spec = DistributionSpec(family="gaussian", d=2, seed=0)
    res = elliptical_coverage_experiment(spec, np.eye(2), alpha=0.1, n=100,
                                         B=250, trials=200, seed=1)
    assert 0.80 <= res.coverage <= 0.98
    assert res.certificate is None
    with pytest.raises(ValueError):
        elliptical_coverage_experiment(spec, np.eye(2), alpha=0.1, n=100,
                                       B=250, trials=199)
    with pytest.raises(ValueError):
        elliptical_coverage_experiment(spec, np.eye(3), alpha=0.1, n=100,
                                       B=250, trials=200)


def test_coverage_certificate_feasible_and_infeasible():
    spec = DistributionSpec(family="gaussian", d=2, seed=0)
    ok = elliptical_coverage_experiment(spec, np.eye(2), alpha=0.1, n=400,
                                        B=250, trials=200, seed=2,
                                        sigma2=0.05, pilot_n=4000)
    assert ok.certificate is not None
    assert ok.certificate.theorem == "elliptical_coverage"
    assert ok.certificate.term("event_probability_n1") == pytest.approx(1 / 4000)
    assert ok.certificate_error is None

    bad = elliptical_coverage_experiment(spec, np.eye(2), alpha=0.1, n=400,
                                         B=250, trials=200, seed=2,
                                         sigma2=5.0, pilot_n=4000)
    assert bad.certificate is None
    assert "feasibility" in bad.certificate_error
    assert bad.coverage == ok.coverage  # empirical run unaffected


def test_coverage_nontrivial_mean_and_rotation_stability():
    spec = DistributionSpec(family="gaussian", d=2, seed=0,
                            params={"mean": [5.0, -3.0], "cov": [[1.0, 0.0],
                                                                 [0.0, 4.0]]})
    res = elliptical_coverage_experiment(spec, np.eye(2), alpha=0.1, n=150,
                                         B=250, trials=200, seed=3)
    assert 0.80 <= res.coverage <= 0.98

    theta = 0.83
    q = np.array([[math.cos(theta), -math.sin(theta)],
                  [math.sin(theta), math.cos(theta)]])
    cov = np.array([[1.0, 0.0], [0.0, 4.0]])
    spec_rot = DistributionSpec(
        family="gaussian", d=2, seed=0,
        params={"mean": list(q @ np.array([5.0, -3.0])),
                "cov": (q @ cov @ q.T).tolist()})
    res_rot = elliptical_coverage_experiment(spec_rot, q @ np.eye(2) @ q.T,
                                             alpha=0.1, n=150, B=250,
                                             trials=200, seed=3)
    assert abs(res.coverage - res_rot.coverage) <= 0.08
