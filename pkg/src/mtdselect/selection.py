"""Lag selection estimators.

Four ways to recover the relevant lags of an MTD model from a sample:

``pcp_select``
    Pairwise comparison pruning over a known superset ``S``: a lag is
    kept iff two observed compatible contexts (differing only at that
    lag) have empirical transition laws further apart in total
    variation than an adaptive threshold.

``fsc_select``
    Forward stepwise growth of a candidate set on the first part of the
    sample, ranked by the conditional influence statistic, followed by
    a cut phase applying the pairwise rule on the held-out remainder.

``fs_only_select``
    Binary-alphabet fast path: forward stepwise on the whole sample
    with the target size supplied by the caller, no cut, no split.

``algorithm2_select``
    Thresholded variant: grow while the influence statistic exceeds a
    fixed ``tau``, then prune lags whose leave-one-out influence drops
    below ``tau``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .counting import ContextCounts, count_contexts, count_joint, sibling_groups
from .model import LagSet, SymbolSequence
from .thresholds import ThresholdParams, context_thresholds

__all__ = [
    "NuStatistics",
    "FsIteration",
    "CutDecision",
    "SelectionTrace",
    "nu_hat",
    "nu_hat_all",
    "pcp_select",
    "fs_step",
    "cut_step",
    "fsc_select",
    "fs_only_select",
    "algorithm2_select",
]


@dataclass(frozen=True)
class NuStatistics:
    """Influence statistic of every lag outside a base set."""

    base_set: LagSet
    values: dict  # lag -> value in [0, 1]


@dataclass(frozen=True)
class FsIteration:
    base: tuple[int, ...]
    scores: dict  # lag -> influence value
    chosen: int


@dataclass(frozen=True)
class CutDecision:
    lag: int
    kept: bool
    witness: dict | None  # best-margin compatible pair, None if no pair observed


@dataclass
class SelectionTrace:
    method: str
    params: dict
    selected: tuple[int, ...] = ()
    fs_iterations: list = field(default_factory=list)
    cut_decisions: list = field(default_factory=list)

    def to_dict(self) -> dict:
        def _num(v):
            return "inf" if v == math.inf else v

        trace = []
        for it in self.fs_iterations:
            trace.append({
                "step": "fs",
                "base": list(it.base),
                "scores": {str(k): it.scores[k] for k in sorted(it.scores)},
                "chosen": it.chosen,
            })
        for dec in self.cut_decisions:
            wit = None
            if dec.witness is not None:
                wit = {k: (_num(v) if isinstance(v, float) else v)
                       for k, v in dec.witness.items()}
            trace.append({
                "step": "cut",
                "lag": dec.lag,
                "kept": dec.kept,
                "witness": wit,
            })
        return {
            "method": self.method,
            "params": self.params,
            "selected": list(self.selected),
            "trace": trace,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ---------------------------------------------------------------------------
# conditional influence statistic
# ---------------------------------------------------------------------------

def _nu_from_joint(joint: dict, positions: int, n_symbols: int) -> float:
    """Influence value from joint (context, lag symbol, next symbol) counts.

    Context terms never observed are skipped and conditional laws with
    an unobserved conditioning symbol contribute zero, which keeps the
    statistic inside [0, 1].
    """
    total = 0.0
    for mat in joint.values():
        nb = mat.sum(axis=1)
        n_ctx = float(nb.sum())
        if n_ctx <= 0.0:
            continue
        present = nb > 0
        cond = np.zeros((n_symbols, n_symbols))
        cond[present] = mat[present] / nb[present, None]
        tv = 0.5 * np.abs(cond[:, None, :] - cond[None, :, :]).sum(axis=2)
        w = (nb[:, None] * nb[None, :]) / n_ctx ** 2
        mask = present[:, None] & present[None, :]
        np.fill_diagonal(mask, False)
        total += (n_ctx / positions) * float((w * tv)[mask].sum())
    return total


def nu_hat(seq: SymbolSequence, k: int, base: LagSet, m: int) -> float:
    """Empirical influence of lag ``k`` on the next symbol, conditional
    on the lags in ``base``, computed from the first ``m`` symbols.

    The value is a context-frequency weighted average of total-variation
    distances between the empirical conditional laws of the next symbol
    given the symbol at lag ``k``; it always lies in [0, 1].
    """
    if k in base:
        raise ValueError(f"lag {k} already in the base set")
    joint = count_joint(seq, base, k, 0, m)
    return _nu_from_joint(joint, m - base.order, seq.alphabet.size)


def nu_hat_all(seq: SymbolSequence, base: LagSet, m: int) -> NuStatistics:
    """Influence statistic of every lag outside ``base``."""
    values = {k: nu_hat(seq, k, base, m) for k in base.complement()}
    return NuStatistics(base, values)


def _argmax_lag(scores: dict) -> int:
    """Largest score wins; exact ties go to the most recent lag."""
    return max(scores, key=lambda j: (scores[j], j))


# ---------------------------------------------------------------------------
# pairwise comparison rule
# ---------------------------------------------------------------------------

def _pairwise_decisions(counts: ContextCounts, params: ThresholdParams):
    """Apply the compatible-pair decision rule to every counted lag."""
    s_by_key = context_thresholds(counts, params)
    phat = {key: vec / vec.sum() for key, vec in counts.table.items()}
    decisions = []
    kept = []
    for lag in counts.lag_set:
        best = None
        for members in sibling_groups(counts, lag).values():
            for i, (b, kb) in enumerate(members):
                for c, kc in members[i + 1:]:
                    dtv = 0.5 * float(np.abs(phat[kb] - phat[kc]).sum())
                    thr = s_by_key[kb] + s_by_key[kc]
                    margin = dtv - thr
                    if best is None or margin > best[0]:
                        best = (margin, kb, kc, dtv, thr)
        if best is None:
            decisions.append(CutDecision(lag, kept=False, witness=None))
            continue
        margin, kb, kc, dtv, thr = best
        witness = {
            "x": list(counts.context_of(kb)),
            "y": list(counts.context_of(kc)),
            "dtv": dtv,
            "threshold": thr,
            "margin": margin,
        }
        keep = dtv >= thr
        if keep:
            kept.append(lag)
        decisions.append(CutDecision(lag, kept=keep, witness=witness))
    return kept, decisions


def pcp_select(
    seq: SymbolSequence,
    lags: LagSet,
    params: ThresholdParams,
    start: int = 0,
    stop: int | None = None,
) -> tuple[LagSet, SelectionTrace]:
    """Pairwise comparison estimator over a known candidate set.

    A lag of ``lags`` is retained iff some observed compatible pair of
    contexts shows a total-variation gap at least as large as its
    adaptive pair threshold.  The caller is responsible for ``lags``
    covering all relevant lags (the full set ``[-d, -1]`` always does).
    """
    trace = SelectionTrace(
        method="pcp",
        params={"epsilon": params.epsilon, "mu": params.mu, "alpha": params.alpha,
                "S": list(lags.lags), "window": [start, stop if stop is not None else len(seq)]},
    )
    if len(lags) == 0:
        trace.selected = ()
        return LagSet((), lags.order), trace
    counts = count_contexts(seq, lags, start, stop)
    kept, decisions = _pairwise_decisions(counts, params)
    trace.cut_decisions = decisions
    trace.selected = tuple(sorted(kept))
    return LagSet(trace.selected, lags.order), trace


def fs_step(
    seq: SymbolSequence,
    d: int,
    ell: int,
    m: int | None = None,
) -> tuple[LagSet, SelectionTrace]:
    """Greedy forward growth of a candidate lag set of size ``ell``.

    At each round the lag with the largest conditional influence given
    the current set is added, ties broken toward the most recent past.
    ``ell = 0`` returns the empty set.
    """
    if not (0 <= ell <= d):
        raise ValueError(f"ell must lie in [0, {d}]")
    m = len(seq) if m is None else int(m)
    trace = SelectionTrace(method="fs", params={"ell": ell, "d": d, "m": m})
    current = LagSet.empty(d)
    while len(current) < ell:
        scores = nu_hat_all(seq, current, m).values
        chosen = _argmax_lag(scores)
        trace.fs_iterations.append(
            FsIteration(base=current.lags, scores=scores, chosen=chosen)
        )
        current = current.add(chosen)
    trace.selected = current.lags
    return current, trace


def cut_step(
    seq: SymbolSequence,
    candidate: LagSet,
    params: ThresholdParams,
    start: int,
    stop: int | None = None,
) -> tuple[LagSet, SelectionTrace]:
    """Prune a candidate set with the pairwise rule on a fresh window.

    Identical decision rule to :func:`pcp_select`, with counts and
    thresholds rebuilt on the window ``(start, stop)``; the two agree
    bit-exactly on equal windows.
    """
    kept, trace = pcp_select(seq, candidate, params, start, stop)
    trace.method = "cut"
    return kept, trace


def fsc_select(
    seq: SymbolSequence,
    d: int,
    ell: int,
    params: ThresholdParams,
    m: int | None = None,
) -> tuple[LagSet, SelectionTrace]:
    """Forward stepwise + cut estimator.

    Grows a candidate set of size ``ell`` on ``X_{1:m}`` and prunes it
    on ``X_{m+1:n}``; ``m`` defaults to ``n // 2``.
    """
    n = len(seq)
    m = n // 2 if m is None else int(m)
    if not (d < m < n):
        raise ValueError(
            f"window shorter than order: need d < m < n, got d={d}, m={m}, n={n}"
        )
    candidate, fs_trace = fs_step(seq, d, ell, m)
    trace = SelectionTrace(
        method="fsc",
        params={"ell": ell, "d": d, "m": m, "epsilon": params.epsilon,
                "mu": params.mu, "alpha": params.alpha},
        fs_iterations=fs_trace.fs_iterations,
    )
    if len(candidate) == 0:
        trace.selected = ()
        return candidate, trace
    selected, cut_trace = cut_step(seq, candidate, params, m, n)
    trace.cut_decisions = cut_trace.cut_decisions
    trace.selected = selected.lags
    return selected, trace


def fs_only_select(
    seq: SymbolSequence,
    d: int,
    ell: int,
    m: int | None = None,
    return_trace: bool = False,
):
    """Forward stepwise alone, on the whole sample by default.

    Intended for binary alphabets with the number of relevant lags
    known: the candidate set itself is then a consistent estimate, so
    neither the cut phase nor the sample split is needed.
    """
    if seq.alphabet.size != 2:
        raise ValueError("fs_only_select requires a binary alphabet")
    selected, trace = fs_step(seq, d, ell, m)
    if return_trace:
        return selected, trace
    return selected


def algorithm2_select(
    seq: SymbolSequence,
    d: int,
    tau: float,
    m: int | None = None,
    return_trace: bool = False,
):
    """Thresholded two-phase variant on a single sample.

    Phase 1 adds the top-influence lag while its statistic exceeds
    ``tau``; phase 2 removes each selected lag unless its influence
    given the rest of the selection stays at least ``tau``.
    """
    if tau <= 0:
        raise ValueError("tau must be > 0")
    m = len(seq) if m is None else int(m)
    trace = SelectionTrace(method="alg2", params={"tau": tau, "d": d, "m": m})
    current = LagSet.empty(d)
    while len(current) < d:
        scores = nu_hat_all(seq, current, m).values
        chosen = _argmax_lag(scores)
        if scores[chosen] <= tau:
            break
        trace.fs_iterations.append(
            FsIteration(base=current.lags, scores=scores, chosen=chosen)
        )
        current = current.add(chosen)
    kept = []
    for lag in sorted(current.lags, key=lambda j: -j):
        value = nu_hat(seq, lag, current.drop(lag), m)
        keep = value >= tau
        if keep:
            kept.append(lag)
        trace.cut_decisions.append(
            CutDecision(lag, kept=keep,
                        witness={"nu": value, "threshold": tau, "margin": value - tau})
        )
    trace.selected = tuple(sorted(kept))
    if return_trace:
        return LagSet(trace.selected, d), trace
    return LagSet(trace.selected, d)
