"""Statistics helpers shared by the estimators, the scan layer, and tests."""

from __future__ import annotations

import math

import numpy as np
from scipy import stats as sps
from scipy.special import kolmogi


def tv_distance(p, q) -> float:
    """Total-variation distance between two discrete distributions.

    Inputs may be unnormalized nonnegative weight vectors of equal length.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("need two equal-length weight vectors")
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise ValueError("weights must be nonnegative")
    if p.sum() <= 0.0 or q.sum() <= 0.0:
        raise ValueError("weights must not be all zero")
    return float(0.5 * np.abs(p / p.sum() - q / q.sum()).sum())


def tv_replicates(counts1, counts2, *, n_boot: int = 1000,
                  rng: np.random.Generator | None = None
                  ) -> tuple[float, np.ndarray]:
    """Plug-in TV between two count vectors plus multinomial-bootstrap
    replicates of it (equivalent to resampling the underlying samples)."""
    if rng is None:
        rng = np.random.default_rng(0)
    c1 = np.asarray(counts1, dtype=float)
    c2 = np.asarray(counts2, dtype=float)
    n1, n2 = c1.sum(), c2.sum()
    if n1 <= 0 or n2 <= 0:
        raise ValueError("both samples must be nonempty")
    observed = tv_distance(c1, c2)
    res1 = rng.multinomial(int(round(n1)), c1 / n1, size=n_boot) / n1
    res2 = rng.multinomial(int(round(n2)), c2 / n2, size=n_boot) / n2
    return observed, 0.5 * np.abs(res1 - res2).sum(axis=1)


def debiased(observed: float, replicates: np.ndarray) -> tuple[float, float]:
    """Bootstrap bias correction  2*stat - mean(stat*), clipped to [0, 1],
    with the replicate spread as the standard error.

    Plug-in TV-style statistics (sums of absolute values) are biased upward
    by sampling noise, which would make even identical distributions look
    divergent by many standard errors at fine binning; the correction makes
    a true divergence of zero read as zero within error.
    """
    corrected = 2.0 * observed - float(replicates.mean())
    se = float(replicates.std(ddof=1))
    return min(max(corrected, 0.0), 1.0), se


def bootstrap_tv(counts1, counts2, *, n_boot: int = 1000,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Bias-corrected TV distance between two empirical count vectors, with a
    bootstrap standard error (see ``debiased``)."""
    observed, replicates = tv_replicates(counts1, counts2, n_boot=n_boot, rng=rng)
    return debiased(observed, replicates)


def perm_tv_replicates(counts1, counts2, *, n_perm: int = 1000,
                       rng: np.random.Generator | None = None) -> np.ndarray:
    """Null replicates of the plug-in TV: pool both count vectors and resplit
    them at random into the original sample sizes (a permutation test done
    per bin with the exact hypergeometric law).

    Their distribution is the exact sampling distribution of the TV estimate
    when the two runs share one underlying density, for these sample sizes
    and this binning — the reference against which an observed TV is judged.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    c1 = np.rint(np.asarray(counts1, dtype=float)).astype(np.int64)
    c2 = np.rint(np.asarray(counts2, dtype=float)).astype(np.int64)
    if c1.shape != c2.shape or c1.ndim != 1:
        raise ValueError("need two equal-length count vectors")
    n1, n2 = int(c1.sum()), int(c2.sum())
    if n1 <= 0 or n2 <= 0:
        raise ValueError("both samples must be nonempty")
    pooled = c1 + c2
    split1 = rng.multivariate_hypergeometric(pooled, n1, size=n_perm)
    split2 = pooled[None, :] - split1
    return 0.5 * np.abs(split1 / n1 - split2 / n2).sum(axis=1)


def ks_statistic_to_cdf(values, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic against an analytic CDF."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n == 0:
        raise ValueError("empty sample")
    f = cdf(x)
    upper = np.max(np.arange(1, n + 1) / n - f)
    lower = np.max(f - np.arange(0, n) / n)
    return float(max(upper, lower))


def ks_critical_value(n: int, alpha: float = 0.01) -> float:
    """Critical one-sample KS statistic at significance level alpha."""
    return float(kolmogi(alpha)) / math.sqrt(n)


def ks_2samp_pvalue(a, b) -> tuple[float, float]:
    """Two-sample KS statistic and p-value (asymptotic)."""
    result = sps.ks_2samp(np.asarray(a, float), np.asarray(b, float), method="asymp")
    return float(result.statistic), float(result.pvalue)


def chisquare_gof(counts, probs) -> tuple[float, float]:
    """Chi-square goodness of fit of observed counts against expected
    probabilities; zero-probability cells must be empty and are excluded."""
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if counts.shape != probs.shape:
        raise ValueError("counts and probs must align")
    zero = probs <= 0.0
    if np.any(counts[zero] > 0):
        raise ValueError("observed counts in zero-probability cells")
    counts, probs = counts[~zero], probs[~zero]
    expected = counts.sum() * probs / probs.sum()
    result = sps.chisquare(counts, expected)
    return float(result.statistic), float(result.pvalue)


def mean_and_stderr(values) -> tuple[float, float]:
    """Sample mean and its standard error (needs at least two values)."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        raise ValueError("need at least two values")
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))
