"""Efron bootstrap, score tests, and elliptical confidence regions.

The kit works on user-supplied per-observation score matrices rather than
model objects; two demo score generators (Gaussian location, exponential
rate) cover the common cases.  Finite-sample certificates from the bound
engine can be attached to every test decision when the caller supplies the
sub-Gaussian variance factor σ² — certificates always use the supplied
value, never the heuristic estimator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .engine import (
    BoundBreakdown,
    InfeasibleError,
    MomentSummary,
    bootstrap_delta,
    bootstrap_summary,
    delta_R,
    delta_W,
    score2_bound,
    score_summary,
)
from .samplers import DistributionSpec, substream
from .tensors import Sample, SpdMatrix

__all__ = [
    "BootstrapResult",
    "CoverageResult",
    "LevelResult",
    "RaoResult",
    "ScoreTestResult",
    "bootstrap_ball_quantile",
    "bootstrap_score_test",
    "chi2_quantile",
    "efron_resample",
    "elliptical_coverage_experiment",
    "exponential_rate_scores",
    "gaussian_location_scores",
    "rao_score_test",
    "score_level_experiment",
]

MIN_REPLICATES = 200


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must be in (0,1), got {alpha}")


def _order_stat_quantile(replicates: np.ndarray, alpha: float) -> float:
    """Empirical (1−α)-quantile, inf-form: the ⌈(1−α)B⌉-th order statistic."""
    b = replicates.size
    k = math.ceil((1.0 - alpha) * b)
    k = min(max(k, 1), b)
    return float(np.sort(replicates)[k - 1])


def _resample_means(centered: np.ndarray, b: int,
                    rng: np.random.Generator) -> np.ndarray:
    """B resample means of the centered rows, via multinomial counts."""
    n = centered.shape[0]
    counts = rng.multinomial(n, np.full(n, 1.0 / n), size=b)
    return (counts @ centered) / n


def efron_resample(s: Sample, seed: int) -> Sample:
    """One resample of n rows drawn uniformly from the centered rows.

    The resampling law puts mass 1/n on each X_j − X̄, so its conditional
    mean is exactly zero and its conditional second moment is the biased
    sample covariance.
    """
    if s.n < 2:
        raise ValueError("need at least 2 rows to resample")
    centered = s.data - s.mean()
    rng = np.random.default_rng(substream(seed, "efron", 0))
    idx = rng.integers(0, s.n, s.n)
    label = f"{s.label}:efron" if s.label else "efron"
    return Sample(centered[idx], seed=seed, label=label)


# ---------------------------------------------------------------------------
# bootstrap ball quantile
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    """Replicate values plus the requested empirical quantile."""

    replicates: np.ndarray
    alpha: float
    quantile: float
    B: int
    seed: int
    certificate: Optional[BoundBreakdown] = None

    def __post_init__(self):
        if self.B < MIN_REPLICATES:
            raise ValueError(f"B must be >= {MIN_REPLICATES}, got {self.B}")


def bootstrap_ball_quantile(s: Sample, w, alpha: float, B: int = 2000,
                            seed: int = 0,
                            sigma2: Optional[float] = None) -> BootstrapResult:
    """Quantile of the weighted-norm bootstrap statistic √n‖W^{1/2}X̄*‖.

    With σ² supplied, attaches the finite-sample accuracy certificate for
    the bootstrap ball approximation on the W^{1/2}-transformed data.
    """
    _check_alpha(alpha)
    if B < MIN_REPLICATES:
        raise ValueError(f"B must be >= {MIN_REPLICATES}, got {B}")
    w_spd = w if isinstance(w, SpdMatrix) else SpdMatrix(w)
    if w_spd.dim != s.dim:
        raise ValueError("W dimension does not match the sample")
    centered = s.data - s.mean()
    rng = np.random.default_rng(substream(seed, "ball_quantile", 0))
    means = _resample_means(centered, B, rng)
    stats = math.sqrt(s.n) * np.linalg.norm(means @ w_spd.sqrt(), axis=1)
    quantile = _order_stat_quantile(stats, alpha)
    certificate = None
    if sigma2 is not None:
        ms = bootstrap_summary(s, sigma2=sigma2, weight=w_spd.matrix)
        certificate = bootstrap_delta(ms)
    return BootstrapResult(replicates=stats, alpha=alpha, quantile=quantile,
                           B=B, seed=seed, certificate=certificate)


# ---------------------------------------------------------------------------
# score tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreTestResult:
    reject: bool
    statistic: float        # R̃ on the raw (uncentered) score sum
    threshold: float        # bootstrap quantile t*_α
    alpha: float
    B: int
    seed: int
    certificate: Optional[BoundBreakdown] = None
    certificate_error: Optional[str] = None


def bootstrap_score_test(scores: Sample, alpha: float, B: int = 2000,
                         seed: int = 0, sigma2_s: Optional[float] = None,
                         info=None) -> ScoreTestResult:
    """Bootstrap score test: reject when R̃ exceeds the resampled quantile.

    R̃ = ‖Σᵢsᵢ/√n‖² uses the raw score sum; the replicates R* resample the
    centered scores.  When σ_s² is supplied the level certificate is
    attached (or its infeasibility is reported without aborting the test).
    """
    _check_alpha(alpha)
    if B < MIN_REPLICATES:
        raise ValueError(f"B must be >= {MIN_REPLICATES}, got {B}")
    if scores.n < 2:
        raise ValueError("need at least 2 score rows")
    n = scores.n
    total = scores.data.sum(axis=0)
    statistic = float(np.dot(total, total)) / n

    centered = scores.data - scores.mean()
    rng = np.random.default_rng(substream(seed, "score_boot", 0))
    means = _resample_means(centered, B, rng)
    replicates = n * np.sum(means * means, axis=1)
    threshold = _order_stat_quantile(replicates, alpha)

    certificate, cert_error = None, None
    if sigma2_s is not None:
        try:
            ms = score_summary(scores, sigma2_s=sigma2_s, info=info)
            certificate = delta_R(ms)
        except InfeasibleError as exc:
            cert_error = str(exc)
    return ScoreTestResult(reject=statistic > threshold, statistic=statistic,
                           threshold=threshold, alpha=alpha, B=B, seed=seed,
                           certificate=certificate,
                           certificate_error=cert_error)


@dataclass(frozen=True)
class RaoResult:
    reject: bool
    statistic: float        # R = sᵀ I⁻¹ s on the total score
    threshold: float        # (1−α)-quantile of χ²_d
    alpha: float
    certificate: Optional[BoundBreakdown] = None


def chi2_quantile(alpha: float, d: int) -> float:
    """(1−α)-quantile of χ²_d via the inverse regularized incomplete gamma."""
    _check_alpha(alpha)
    if d < 1:
        raise ValueError("d must be >= 1")
    return float(2.0 * special.gammaincinv(d / 2.0, 1.0 - alpha))


def rao_score_test(scores: Sample, info, alpha: float,
                   moments: Optional[MomentSummary] = None) -> RaoResult:
    """Classical score test of the total score against the χ²_d quantile.

    ``info`` is the Fisher information of the full sample.  When a moment
    summary of the normalized scores is supplied, the χ²-level certificate
    is attached.
    """
    _check_alpha(alpha)
    info_spd = info if isinstance(info, SpdMatrix) else SpdMatrix(info)
    if info_spd.dim != scores.dim:
        raise ValueError("information matrix dimension mismatch")
    s = scores.data.sum(axis=0)
    statistic = float(s @ np.linalg.solve(info_spd.matrix, s))
    threshold = chi2_quantile(alpha, scores.dim)
    certificate = score2_bound(moments) if moments is not None else None
    return RaoResult(reject=statistic > threshold, statistic=statistic,
                     threshold=threshold, alpha=alpha, certificate=certificate)


def gaussian_location_scores(data: Sample, mu0) -> Sample:
    """Per-observation scores for the N(μ, I_d) location model at μ = μ₀."""
    mu0 = np.asarray(mu0, dtype=float).ravel()
    if mu0.size != data.dim:
        raise ValueError("mu0 dimension mismatch")
    return Sample(data.data - mu0, seed=data.seed,
                  label=f"{data.label}:loc_scores")


def exponential_rate_scores(data: Sample, rate0: float) -> Sample:
    """Per-observation scores for the Exp(λ) rate model at λ = λ₀ (1-D)."""
    if data.dim != 1:
        raise ValueError("exponential rate model is one-dimensional")
    if rate0 <= 0.0:
        raise ValueError("rate0 must be > 0")
    if np.any(data.data < 0.0):
        raise ValueError("exponential data must be nonnegative")
    return Sample(1.0 / rate0 - data.data, seed=data.seed,
                  label=f"{data.label}:rate_scores")


# ---------------------------------------------------------------------------
# level / coverage experiments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LevelResult:
    level: float
    stderr: float
    trials: int
    alpha: float
    B: int
    n: int
    d: int
    seed: int


def score_level_experiment(d: int, n: int, alpha: float, B: int, trials: int,
                           seed: int = 0,
                           spec: Optional[DistributionSpec] = None) -> LevelResult:
    """Empirical level of the bootstrap score test under the null.

    Scores default to i.i.d. standard Gaussians (σ_s-free run); a custom
    zero-mean DistributionSpec can be probed instead.
    """
    _check_alpha(alpha)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rejections = 0
    for trial in range(trials):
        rng = np.random.default_rng(substream(seed, "score_level", trial))
        if spec is None:
            rows = rng.standard_normal((n, d))
        else:
            rows = spec.sample(n, seed=int(rng.integers(0, 2 ** 63 - 1))).data
        total = rows.sum(axis=0)
        statistic = float(np.dot(total, total)) / n
        means = _resample_means(rows - rows.mean(axis=0), B, rng)
        replicates = n * np.sum(means * means, axis=1)
        if statistic > _order_stat_quantile(replicates, alpha):
            rejections += 1
    level = rejections / trials
    stderr = math.sqrt(max(level * (1.0 - level), 1e-12) / trials)
    return LevelResult(level=level, stderr=stderr, trials=trials, alpha=alpha,
                       B=B, n=n, d=d, seed=seed)


@dataclass(frozen=True)
class CoverageResult:
    coverage: float
    stderr: float
    trials: int
    alpha: float
    B: int
    n: int
    d: int
    seed: int
    certificate: Optional[BoundBreakdown] = None
    certificate_error: Optional[str] = None


def _spec_mean(spec: DistributionSpec) -> np.ndarray:
    if spec.family == "user_csv":
        raise ValueError("coverage experiment needs a family with known mean")
    if spec.family == "gaussian" and "mean" in spec.params:
        return np.asarray(spec.params["mean"], dtype=float)
    return np.zeros(spec.d)


def elliptical_coverage_experiment(spec: DistributionSpec, w, alpha: float,
                                   n: int, B: int, trials: int, seed: int = 0,
                                   sigma2: Optional[float] = None,
                                   pilot_n: int = 20_000) -> CoverageResult:
    """Coverage of the bootstrap ellipsoid {μ : √n‖W^{1/2}(X̄−μ)‖ ≤ q*_α}.

    With σ² supplied, attaches the coverage-error certificate computed from
    a pilot sample; an infeasible certificate condition is reported in
    ``certificate_error`` and does not abort the empirical run.
    """
    _check_alpha(alpha)
    if trials < 200:
        raise ValueError("trials must be >= 200 for a stable coverage rate")
    w_spd = w if isinstance(w, SpdMatrix) else SpdMatrix(w)
    if w_spd.dim != spec.d:
        raise ValueError("W dimension does not match the distribution")
    w_half = w_spd.sqrt()
    mu = _spec_mean(spec)

    hits = 0
    for trial in range(trials):
        rng = np.random.default_rng(substream(seed, "coverage", trial))
        data = spec.sample(n, seed=int(rng.integers(0, 2 ** 63 - 1))).data
        xbar = data.mean(axis=0)
        means = _resample_means(data - xbar, B, rng)
        stats = math.sqrt(n) * np.linalg.norm(means @ w_half, axis=1)
        q_star = _order_stat_quantile(stats, alpha)
        observed = math.sqrt(n) * float(np.linalg.norm(w_half @ (xbar - mu)))
        if observed <= q_star:
            hits += 1
    coverage = hits / trials
    stderr = math.sqrt(max(coverage * (1.0 - coverage), 1e-12) / trials)

    certificate, cert_error = None, None
    if sigma2 is not None:
        try:
            pilot_rng = np.random.default_rng(substream(seed, "coverage_pilot", 0))
            pilot = spec.sample(max(n, pilot_n),
                                seed=int(pilot_rng.integers(0, 2 ** 63 - 1)))
            ms = bootstrap_summary(pilot, sigma2=sigma2, weight=w_spd.matrix)
            certificate = delta_W(ms)
        except InfeasibleError as exc:
            cert_error = str(exc)
    return CoverageResult(coverage=coverage, stderr=stderr, trials=trials,
                          alpha=alpha, B=B, n=n, d=spec.d, seed=seed,
                          certificate=certificate, certificate_error=cert_error)
