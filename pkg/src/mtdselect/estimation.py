"""Post-selection transition-probability tables with confidence radii.

After a lag set has been selected, the whole sample is reused to
estimate the transition law per context over that set.  Each observed
cell carries the deviation radius

    r(a, x) = sqrt(2 * alpha * (1 + eps) * V(a, x) / N(x)) + alpha / (3 N(x))

with the same variance proxy as the selection thresholds; unobserved
contexts report the uniform law with an infinite radius so the table
stays total over all contexts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .counting import ContextCounts, count_contexts
from .model import LagSet, SymbolSequence
from .thresholds import ThresholdParams

__all__ = ["EstimatedKernel", "estimate_kernel", "marginal_estimate"]

#: cap on full-context enumeration in exports
EXPORT_ENUM_CAP = 4096


@dataclass(frozen=True)
class KernelRow:
    context: tuple[int, ...]
    probs: np.ndarray
    count: int
    radii: np.ndarray


@dataclass(frozen=True)
class EstimatedKernel:
    """Estimated transition table over a selected lag set."""

    lag_set: LagSet
    params: ThresholdParams
    counts: ContextCounts

    def row(self, context: Iterable[int]) -> KernelRow:
        """Estimate for one context; total over all of A^S."""
        ctx = tuple(int(c) for c in context)
        K = self.counts.n_symbols
        vec = self.counts.vector(ctx)
        if vec is None or vec.sum() == 0:
            return KernelRow(ctx, np.full(K, 1.0 / K), 0, np.full(K, math.inf))
        n_bar = int(vec.sum())
        probs = vec / n_bar
        m = self.params.mu_margin
        vhat = self.params.mu / m * probs + self.params.alpha / (m * n_bar)
        radii = (
            np.sqrt(2.0 * self.params.alpha * (1.0 + self.params.epsilon) * vhat / n_bar)
            + self.params.alpha / (3.0 * n_bar)
        )
        return KernelRow(ctx, probs, n_bar, radii)

    def observed_contexts(self) -> list[tuple[int, ...]]:
        return [self.counts.context_of(k) for k in self.counts.keys()]

    def _export_contexts(self):
        K = self.counts.n_symbols
        if K ** len(self.lag_set) <= EXPORT_ENUM_CAP:
            width = len(self.lag_set)
            for ctx in np.ndindex(*([K] * width)):
                yield tuple(int(c) for c in ctx)
        else:
            yield from self.observed_contexts()

    def to_rows(self):
        """(context, symbol, p_hat, count, radius) rows for CSV export.

        Enumerates the full context product when small enough, falling
        back to observed contexts only.
        """
        for ctx in self._export_contexts():
            row = self.row(ctx)
            for a in range(self.counts.n_symbols):
                yield ctx, a, float(row.probs[a]), row.count, float(row.radii[a])

    def to_dict(self) -> dict:
        rows = []
        for ctx in self._export_contexts():
            row = self.row(ctx)
            rows.append({
                "context": list(ctx),
                "count": row.count,
                "probs": [float(p) for p in row.probs],
                "radii": ["inf" if math.isinf(r) else float(r) for r in row.radii],
            })
        return {
            "lags": list(self.lag_set.lags),
            "order": self.lag_set.order,
            "epsilon": self.params.epsilon,
            "mu": self.params.mu,
            "alpha": self.params.alpha,
            "rows": rows,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def estimate_kernel(
    seq: SymbolSequence,
    lag_set: LagSet,
    params: ThresholdParams,
    stop: int | None = None,
) -> EstimatedKernel:
    """Estimate the transition table over ``lag_set`` from the full
    sample (or its prefix up to ``stop``)."""
    if len(lag_set) == 0:
        raise ValueError("lag set is empty; use marginal_estimate instead")
    counts = count_contexts(seq, lag_set, 0, stop)
    return EstimatedKernel(lag_set, params, counts)


def marginal_estimate(seq: SymbolSequence, order: int, stop: int | None = None) -> np.ndarray:
    """Symbol frequencies over the countable positions, the natural
    estimate when no lag is selected."""
    n = len(seq) if stop is None else int(stop)
    if n - order < 1:
        raise ValueError("window shorter than order")
    window = seq.data[order:n]
    return np.bincount(window, minlength=seq.alphabet.size) / window.size
