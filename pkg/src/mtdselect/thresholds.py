"""Adaptive random thresholds for comparing empirical transition laws.

The decision rules in :mod:`mtdselect.selection` compare total-variation
distances between empirical transition probabilities against data-driven
thresholds derived from a martingale concentration bound.  The threshold
attached to a context shrinks like ``sqrt(alpha / N)`` in its occurrence
count ``N`` and involves the empirical variance proxy

    V(a, x) = mu / (mu - psi(mu)) * p_hat(a | x)
              + alpha / ((mu - psi(mu)) * N(x))

with ``psi(mu) = exp(mu) - mu - 1``.  Contexts never observed get an
infinite threshold: with no evidence, no comparison can succeed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .counting import ContextCounts, sibling_groups

__all__ = [
    "ThresholdParams",
    "psi",
    "v_hat",
    "s_n",
    "pair_threshold",
    "noise_levels",
    "context_thresholds",
]

INF = float("inf")


def psi(mu: float) -> float:
    """exp(mu) - mu - 1."""
    return math.exp(mu) - mu - 1.0


@dataclass(frozen=True)
class ThresholdParams:
    """Parameters (epsilon, mu, alpha) of the adaptive thresholds.

    ``mu`` must lie in (0, 3) and dominate ``psi(mu)``, which keeps the
    variance proxy finite and positive; ``mu = 0.5`` comfortably does.
    """

    epsilon: float = 0.1
    mu: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not (0 < self.mu < 3) or self.mu <= psi(self.mu):
            raise ValueError("mu must lie in (0, 3) with mu > psi(mu)")

    @property
    def mu_margin(self) -> float:
        """mu - psi(mu), the normaliser of the variance proxy."""
        return self.mu - psi(self.mu)

    @classmethod
    def for_sample(cls, n: int, c: float = 2.0,
                   epsilon: float = 0.1, mu: float = 0.5) -> "ThresholdParams":
        """Standard choice alpha = c * log(n) for a sample of length n."""
        if n < 2:
            raise ValueError("need n >= 2 to set alpha from the sample size")
        return cls(epsilon=epsilon, mu=mu, alpha=c * math.log(n))


def v_hat(p_hat: float, n_bar: float, params: ThresholdParams) -> float:
    """Empirical variance proxy of one (symbol, context) cell."""
    if n_bar <= 0:
        raise ValueError("v_hat needs a positive occurrence count")
    m = params.mu_margin
    return params.mu / m * p_hat + params.alpha / (m * n_bar)


def _s_from_vector(vec: np.ndarray, params: ThresholdParams) -> float:
    n_bar = float(vec.sum())
    if n_bar == 0:
        return INF
    m = params.mu_margin
    vhat = params.mu / m * (vec / n_bar) + params.alpha / (m * n_bar)
    root = np.sqrt(params.alpha * (1.0 + params.epsilon) * vhat / (2.0 * n_bar))
    return float(root.sum()) + params.alpha * vec.size / (6.0 * n_bar)


def s_n(counts: ContextCounts, context: Iterable[int],
        params: ThresholdParams) -> float:
    """Per-context threshold; infinite for unseen contexts."""
    vec = counts.vector(context)
    if vec is None:
        return INF
    return _s_from_vector(vec, params)


def pair_threshold(counts: ContextCounts, x: Iterable[int], y: Iterable[int],
                   params: ThresholdParams) -> float:
    """Threshold for comparing two contexts: sum of the per-context ones."""
    return s_n(counts, x, params) + s_n(counts, y, params)


def context_thresholds(counts: ContextCounts, params: ThresholdParams) -> dict:
    """Per-context thresholds for every observed context, keyed like
    ``counts.table``."""
    return {key: _s_from_vector(vec, params) for key, vec in counts.table.items()}


def noise_levels(counts: ContextCounts, params: ThresholdParams) -> dict:
    """Per-lag noise diagnostics of a counted lag set.

    For each lag ``j`` and ordered symbol pair ``(b, c)``, the cheapest
    compatible comparison is ``t_j(b, c) = min`` of the pair threshold
    over compatible context pairs whose coordinate ``j`` equals ``b``
    and ``c``.  The lag-level noise is ``gamma_j = 2 * max_{b != c}
    t_j(b, c)``; an oscillation below ``gamma_j`` is undetectable at the
    current sample size.  Minima over empty candidate sets are infinite.

    Returns a dict ``lag -> {"pair_min": {(b, c): t}, "t": .., "gamma": ..}``.
    """
    K = counts.n_symbols
    s_by_key = context_thresholds(counts, params)
    out = {}
    for lag in counts.lag_set:
        pair_min = {
            (b, c): INF for b in range(K) for c in range(K) if b != c
        }
        for members in sibling_groups(counts, lag).values():
            for i, (b, kb) in enumerate(members):
                for c, kc in members[i + 1:]:
                    t = s_by_key[kb] + s_by_key[kc]
                    if t < pair_min[(b, c)]:
                        pair_min[(b, c)] = t
                        pair_min[(c, b)] = t
        t_lag = max(pair_min.values()) if pair_min else INF
        out[lag] = {"pair_min": pair_min, "t": t_lag, "gamma": 2.0 * t_lag}
    return out
