"""Goodness-of-fit tests and summaries used by the limit-theorem checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

MIN_EXPECTED = 5.0
MIN_TOTAL = 100


@dataclass
class TestReport:
    name: str
    statistic: float
    p_value: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting it

    def to_dict(self):
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _verdict(name, stat, p, threshold, **details):
    return TestReport(name, float(stat), float(p), threshold, bool(p > threshold), details)


def ks_two_sample(x, y, threshold: float = 1e-3, name: str = "ks_two_sample") -> TestReport:
    x = np.sort(np.asarray(x, dtype=float))
    y = np.sort(np.asarray(y, dtype=float))
    m, n = x.size, y.size
    if m == 0 or n == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / m
    fy = np.searchsorted(y, pooled, side="right") / n
    d = float(np.max(np.abs(fx - fy)))
    p = float(stats.kstwobign.sf(d * math.sqrt(m * n / (m + n))))
    return _verdict(name, d, min(p, 1.0), threshold, m=m, n=n)


def normal_cdf(z):
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def ks_one_sample_normal(z, threshold: float = 1e-3, name: str = "ks_normal") -> TestReport:
    z = np.sort(np.asarray(z, dtype=float))
    n = z.size
    if n == 0:
        raise ValueError("sample must be nonempty")
    cdf = normal_cdf(z)
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))
    p = float(stats.kstwo.sf(d, n))
    return _verdict(name, d, p, threshold, n=n)


def geometric_pmf(a: float, k):
    """P{X = k} = a (1 - a)^k, k = 0, 1, ..."""
    return a * (1.0 - a) ** np.asarray(k, dtype=float)


def chisq_geometric(sample, a: float, threshold: float = 1e-3, name: str = "chisq_geometric") -> TestReport:
    """Pearson chi-square against geom(a), pooling the upper tail so every cell expects at least 5."""
    sample = np.asarray(sample)
    total = sample.size
    if total < MIN_TOTAL:
        raise ValueError(f"chi-square needs at least {MIN_TOTAL} observations")
    if (sample < 0).any():
        raise ValueError("geometric sample must be nonnegative")
    # last cell is {X >= top}, with top the first k whose tail expectation drops below 5
    top = 0
    while total * (1.0 - a) ** (top + 1) >= MIN_EXPECTED and total * geometric_pmf(a, top) >= MIN_EXPECTED:
        top += 1
    expected = np.append(total * geometric_pmf(a, np.arange(top)), total * (1.0 - a) ** top)
    observed = np.bincount(np.minimum(sample, top).astype(np.int64), minlength=top + 1)[: top + 1]
    dof = expected.size - 1
    if dof < 1:
        raise ValueError("too few cells for a chi-square test")
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    p = float(stats.chi2.sf(chi2, dof))
    return _verdict(name, chi2, p, threshold, dof=dof, cells=int(expected.size))


def empirical_cf(sample, u):
    """Empirical characteristic function at the points u."""
    x = np.asarray(sample, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.array([np.mean(np.exp(1j * v * x)) for v in u])


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    variance: float
    skewness: float
    mean_ci: tuple
    variance_ci: tuple
    skewness_ci: tuple


def _skew(x, axis=-1):
    return stats.skew(x, axis=axis, bias=False)


def summarize(sample, rng=None, resamples: int = 1000, level: float = 0.95) -> Summary:
    """Moments with percentile bootstrap intervals (seeded for reproducibility)."""
    x = np.asarray(sample, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 observations")
    rng = np.random.default_rng(0) if rng is None else rng
    q = ((1 - level) / 2, (1 + level) / 2)
    ci = {}
    for key, f in (("mean", np.mean), ("variance", lambda v, axis: np.var(v, axis=axis, ddof=1)), ("skewness", _skew)):
        reps = np.empty(resamples)
        for start in range(0, resamples, 100):
            stop = min(start + 100, resamples)
            idx = rng.integers(0, x.size, size=(stop - start, x.size))
            reps[start:stop] = f(x[idx], axis=1)
        ci[key] = tuple(float(v) for v in np.quantile(reps, q))
    return Summary(
        n=int(x.size),
        mean=float(x.mean()),
        variance=float(x.var(ddof=1)),
        skewness=float(_skew(x)),
        mean_ci=ci["mean"],
        variance_ci=ci["variance"],
        skewness_ci=ci["skewness"],
    )


def stable_fallback(sample, limit_sample) -> TestReport:
    """Shape checks for a spectrally negative limit when the KS test is underpowered.

    Passes if the sample is negatively skewed and its median lies inside the
    interquartile range of the limit sample.
    """
    x = np.asarray(sample, dtype=float)
    y = np.asarray(limit_sample, dtype=float)
    skew = float(_skew(x))
    med = float(np.median(x))
    q1, q3 = (float(v) for v in np.quantile(y, [0.25, 0.75]))
    ok = skew < 0 and q1 <= med <= q3
    return TestReport("stable_fallback", skew, math.nan, math.nan, ok, {"median": med, "limit_iqr": [q1, q3]})
