"""Loss-weighted importance sampling and its efficiency measure.

Weights: ``q*_n = |f_n| / sum |f|`` on raw per-image losses ``f``.
Inclusion probabilities for an expected sample size ``M``:
``s_i = min(1, M w_i / sum w)`` with ``w = |g|`` (standardized losses) or
``w = |f|``. Relative variance (sampling efficiency):
``R = sum w^2 / sum (w^2 / s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class SamplerConfig:
    weighting: str = "raw"          # raw | standardized
    aggregate: str = "sum"          # per-image loss: sum | mean | max
    mode: str = "bernoulli"         # bernoulli | multinomial

    def __post_init__(self):
        if self.weighting not in ("raw", "standardized"):
            raise ConfigError(f"sampler.weighting must be raw|standardized, got {self.weighting!r}")
        if self.aggregate not in ("sum", "mean", "max"):
            raise ConfigError(f"sampler.aggregate must be sum|mean|max, got {self.aggregate!r}")
        if self.mode not in ("bernoulli", "multinomial"):
            raise ConfigError(f"sampler.mode must be bernoulli|multinomial, got {self.mode!r}")


@dataclass(frozen=True)
class WeightedItem:
    item_id: object
    loss: float


@dataclass
class SamplePlan:
    q_star: np.ndarray
    g: np.ndarray
    s: np.ndarray
    m: int
    subset: list = field(default_factory=list)


@dataclass
class EfficiencyCurve:
    points: list[tuple[float, int, float]]   # (fraction, M, R)

    def first_reaching(self, level: float) -> float | None:
        for frac, _, r in self.points:
            if r >= level:
                return frac
        return None


def normalized_weights(losses: Sequence[float]) -> np.ndarray:
    a = np.abs(np.asarray(losses, dtype=float))
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise ValueError("losses must be a finite 1-D sequence")
    total = a.sum()
    if not total > 0:
        raise ValueError("normalized_weights needs at least one nonzero loss")
    return a / total


def standardize(losses: Sequence[float]) -> np.ndarray:
    """``(f - mean) / std`` with the population standard deviation."""
    f = np.asarray(losses, dtype=float)
    if f.size < 2:
        raise ValueError("standardize needs at least 2 values")
    mu = f.mean()
    sd = f.std()
    if not sd > 0:
        raise ValueError("standardize: losses are constant (zero std)")
    return (f - mu) / sd


def _check_m(w: np.ndarray, m: int) -> None:
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D sequence")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    if not w.sum() > 0:
        raise ValueError("at least one weight must be positive")
    if not 1 <= m <= w.size:
        raise ValueError(f"M must be in [1, {w.size}], got {m}")


def clipped_probabilities(w: Sequence[float], m: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_m(w, m)
    return np.minimum(1.0, m * w / w.sum())


def _rescaled(w: Sequence[float], m: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_m(w, m)
    # R is scale-free; rescaling keeps w**2 away from under/overflow
    return w / w.max()


def relative_variance(w: Sequence[float], m: int) -> float:
    w = _rescaled(w, m)
    s = clipped_probabilities(w, m)
    num = float(np.sum(w ** 2))
    pos = w > 0
    den = float(np.sum(w[pos] ** 2 / s[pos]))
    return num / den


def relative_variance_split(w: Sequence[float], m: int) -> float:
    """Same ratio via the saturated / unsaturated split of the denominator.

    Unsaturated items (s < 1) contribute ``(sum w / M) * w``; saturated items
    contribute ``w^2``.
    """
    w = _rescaled(w, m)
    total = w.sum()
    scaled = m * w / total
    sat = scaled >= 1.0
    den = (total / m) * float(np.sum(w[~sat])) + float(np.sum(w[sat] ** 2))
    return float(np.sum(w ** 2)) / den


def m_for_fraction(fraction: float, n: int) -> int:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    # round half up, never below one item
    return max(1, min(n, int(math.floor(fraction * n + 0.5))))


def efficiency_curve(losses: Sequence[float], fractions: Sequence[float]) -> EfficiencyCurve:
    """Relative variance on standardized losses over a grid of sample fractions.

    ``M = N`` means the whole dataset is taken (every ``s = 1``), so the
    curve ends at exactly 1.
    """
    g = np.abs(standardize(losses))
    n = g.size
    pts = []
    for frac in fractions:
        m = m_for_fraction(float(frac), n)
        r = 1.0 if m == n else relative_variance(g, m)
        pts.append((float(frac), m, r))
    return EfficiencyCurve(pts)


def fraction_grid(step: float = 0.05, start: float | None = None, stop: float = 1.0) -> list[float]:
    start = step if start is None else start
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def draw_sample(items: Sequence, s: Sequence[float], seed: int) -> list:
    """Independent Bernoulli inclusion of each item with probability ``s_i``."""
    s = np.asarray(s, dtype=float)
    if len(items) != s.size:
        raise ValueError("items and probabilities differ in length")
    if np.any((s < 0) | (s > 1)):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    u = np.random.default_rng(seed).random(s.size)
    return [it for it, keep in zip(items, u < s) if keep]


def draw_multinomial(items: Sequence, q: Sequence[float], m: int, seed: int) -> list:
    """``m`` draws with replacement from ``q``; returns distinct items in input order."""
    q = np.asarray(q, dtype=float)
    idx = np.random.default_rng(seed).choice(len(items), size=m, replace=True, p=q)
    keep = set(idx.tolist())
    return [it for i, it in enumerate(items) if i in keep]


def plan_sample(items: Sequence[WeightedItem], m: int, seed: int,
                config: SamplerConfig = SamplerConfig()) -> SamplePlan:
    losses = np.array([it.loss for it in items], dtype=float)
    n = losses.size
    try:
        g = standardize(losses)
    except ValueError:
        g = np.zeros(n)
    if m == n:
        # full sample: every item taken, weights may be degenerate
        q_star = normalized_weights(losses) if np.any(losses != 0) else np.full(n, 1.0 / n)
        s = np.ones(n)
    else:
        q_star = normalized_weights(losses)
        w = np.abs(losses) if config.weighting == "raw" else np.abs(g)
        s = clipped_probabilities(w, m)
    if config.mode == "bernoulli" or m == n:
        subset = draw_sample(list(items), s, seed)
    else:
        subset = draw_multinomial(list(items), q_star, m, seed)
    return SamplePlan(q_star=q_star, g=g, s=s, m=m, subset=subset)


@dataclass
class MCResult:
    mean: float
    variance: float
    std_error: float
    estimates: np.ndarray = field(repr=False)


def estimator_variance_mc(f: Sequence[float], q: Sequence[float], trials: int, seed: int,
                          n: int = 1, chunk: int = 20000) -> MCResult:
    """Monte-Carlo behaviour of ``(1/n) sum f p / q`` with ``p`` uniform.

    Trials are drawn in fixed-size chunks from one seeded generator, so the
    result does not depend on how the work is split.
    """
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    N = f.size
    if q.size != N:
        raise ValueError("f and q differ in length")
    if np.any(q < 0) or not math.isclose(q.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ValueError("q must be a probability vector")
    p = 1.0 / N
    if np.any((q == 0) & (f != 0)):
        raise ValueError("support violation: q is zero where f*p is nonzero")
    ratio = np.where(q > 0, f * p / np.where(q > 0, q, 1.0), 0.0)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(q)
    cdf[-1] = 1.0
    est = np.empty(trials)
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        idx = np.searchsorted(cdf, rng.random((k, n)), side="right")
        est[done:done + k] = ratio[idx].mean(axis=1)
        done += k
    var = float(est.var(ddof=1)) if trials > 1 else 0.0
    return MCResult(float(est.mean()), var, math.sqrt(var / trials), est)


def bootstrap_variance_interval(samples: np.ndarray, level: float = 0.99, n_boot: int = 200,
                                seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval for the variance of ``samples``."""
    samples = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = samples[rng.integers(0, samples.size, samples.size)].var(ddof=1)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r: float
    n: int


def paired_series_fit(x: Sequence[float], y: Sequence[float]) -> LinearFit:
    """OLS fit of ``y`` on ``x`` plus Pearson correlation (0 when ``y`` is constant)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and equal length")
    if x.size < 3:
        raise ValueError("need at least 3 points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    if not sxx > 0:
        raise ValueError("x has zero variance")
    sxy = float(dx @ dy)
    syy = float(dy @ dy)
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    r = 0.0 if syy == 0 else sxy / math.sqrt(sxx * syy)
    return LinearFit(slope, intercept, r, int(x.size))
