"""Replication harness for the simulation studies.

Runs seeded batches of (simulate, select, estimate) replications for a
model and a list of methods, reporting exact-recovery frequencies and
the spread of the post-selection estimate of a target transition
probability.  Per-replication randomness is derived from the master
seed and the replication coordinates, so results are independent of
worker count and repeatable bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .counting import count_contexts
from .estimation import estimate_kernel, marginal_estimate
from .model import (
    BINARY,
    Alphabet,
    LagSet,
    MtdModel,
    SymbolSequence,
    diagnostics,
    model_from_dict,
    model_to_dict,
    simulate,
)
from .selection import (
    algorithm2_select,
    fs_only_select,
    fsc_select,
    pcp_select,
)
from .thresholds import ThresholdParams

__all__ = [
    "experiment1_model",
    "experiment2_model",
    "iid_model",
    "random_model",
    "MethodSpec",
    "parse_method",
    "ExperimentConfig",
    "run_experiment",
    "grid_search_c",
    "coverage_check",
    "run_replication",
]

_GRID_BRANCH = 901


def experiment1_model(i: int = 1, j: int = 8, d: int = 8) -> MtdModel:
    """Two-relevant-lag binary benchmark model (first simulation study).

    Base law is a fair coin with weight 0.4; lag ``-i`` has weight 0.2
    and kernel P(0 | b) = 0.3, 0.6; lag ``-j`` has weight 0.4 and kernel
    P(0 | b) = 0.5, 0.9.
    """
    if not (1 <= i < j <= d):
        raise ValueError("need 1 <= i < j <= d")
    weights = np.zeros(d + 1)
    weights[0] = 0.4
    weights[i] = 0.2
    weights[j] = 0.4
    kernels = np.full((d, 2, 2), 0.5)
    kernels[i - 1] = np.array([[0.3, 0.7], [0.6, 0.4]])
    kernels[j - 1] = np.array([[0.5, 0.5], [0.9, 0.1]])
    return MtdModel(BINARY, d, weights, np.array([0.5, 0.5]), kernels)


def experiment2_model(i: int = 1, j: int = 5, d: int = 5) -> MtdModel:
    """Symmetric two-lag binary benchmark (second simulation study).

    Both relevant lags carry weight 0.4; lag ``-i`` prefers to repeat
    (P(0 | 0) = 0.7) and lag ``-j`` to alternate (P(0 | 0) = 0.3); base
    law is a fair coin with weight 0.2.  The all-zero context has
    transition probability P(0 | 0...0) = 0.5 exactly.
    """
    if not (1 <= i < j <= d):
        raise ValueError("need 1 <= i < j <= d")
    weights = np.zeros(d + 1)
    weights[0] = 0.2
    weights[i] = 0.4
    weights[j] = 0.4
    kernels = np.full((d, 2, 2), 0.5)
    kernels[i - 1] = np.array([[0.7, 0.3], [0.3, 0.7]])
    kernels[j - 1] = np.array([[0.3, 0.7], [0.7, 0.3]])
    return MtdModel(BINARY, d, weights, np.array([0.5, 0.5]), kernels)


def iid_model(d: int, p0=(0.5, 0.5)) -> MtdModel:
    """Pure-noise model: every lag weight zero."""
    p0 = np.asarray(p0, dtype=float)
    K = p0.size
    weights = np.zeros(d + 1)
    weights[0] = 1.0
    return MtdModel(Alphabet(tuple(range(K))) if K != 2 else BINARY,
                    d, weights, p0, np.full((d, K, K), 1.0 / K))


def random_model(
    rng: np.random.Generator,
    n_symbols: int = 2,
    d: int = 3,
    n_relevant: int | None = None,
    lam0_floor: float = 0.1,
    row_floor: float = 0.2,
) -> MtdModel:
    """Random full-support MTD model for test batteries.

    Kernel rows mix a Dirichlet draw with the uniform law (weight
    ``row_floor``) so every transition probability stays bounded away
    from zero; the lag-free weight is at least ``lam0_floor``.  Lags
    outside the drawn relevant set get weight zero but keep random
    kernels, which exercises identities that must hold for any kernel
    attached to a zero-weight lag.
    """
    K = n_symbols
    if n_relevant is None:
        n_relevant = int(rng.integers(1, d + 1))
    relevant = rng.choice(d, size=n_relevant, replace=False) + 1
    raw = rng.dirichlet(np.ones(n_relevant + 1))
    lam0 = lam0_floor + (1.0 - lam0_floor) * raw[0]
    weights = np.zeros(d + 1)
    weights[0] = lam0
    for lag_idx, w in zip(relevant, raw[1:]):
        weights[lag_idx] = (1.0 - lam0_floor) * w
    weights /= weights.sum()
    kernels = row_floor / K + (1.0 - row_floor) * rng.dirichlet(np.ones(K), size=(d, K))
    p0 = row_floor / K + (1.0 - row_floor) * rng.dirichlet(np.ones(K))
    alphabet = BINARY if K == 2 else Alphabet(tuple(range(K)))
    return MtdModel(alphabet, d, weights, p0, kernels)


# ---------------------------------------------------------------------------
# method dispatch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    name: str                 # pcp | fsc | fs | alg2 | naive
    arg: float | None = None  # ell for fsc/fs, tau for alg2

    @property
    def label(self) -> str:
        if self.arg is None:
            return self.name
        arg = int(self.arg) if self.name in ("fsc", "fs") else self.arg
        return f"{self.name}:{arg}"

    @property
    def uses_threshold_c(self) -> bool:
        return self.name in ("pcp", "fsc")


def parse_method(text: str) -> MethodSpec:
    """Parse a method string such as ``fsc:3``, ``fs:2``, ``alg2:0.05``,
    ``pcp`` or ``naive``."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name in ("pcp", "naive"):
        if arg:
            raise ValueError(f"method {name} takes no argument")
        return MethodSpec(name)
    if name in ("fsc", "fs"):
        if not arg:
            raise ValueError(f"method {name} needs a size, e.g. {name}:3")
        return MethodSpec(name, float(int(arg)))
    if name == "alg2":
        if not arg:
            raise ValueError("method alg2 needs a threshold, e.g. alg2:0.05")
        return MethodSpec(name, float(arg))
    raise ValueError(f"unknown method {text!r}")


def select_with_method(
    seq: SymbolSequence,
    d: int,
    method: MethodSpec,
    params: ThresholdParams,
    split: float = 0.5,
) -> LagSet:
    """Run one selection method on one sample."""
    n = len(seq)
    if method.name == "pcp":
        selected, _ = pcp_select(seq, LagSet.full(d), params)
        return selected
    if method.name == "fsc":
        m = max(d + 1, int(n * split))
        selected, _ = fsc_select(seq, d, int(method.arg), params, m=m)
        return selected
    if method.name == "fs":
        return fs_only_select(seq, d, int(method.arg))
    if method.name == "alg2":
        return algorithm2_select(seq, d, float(method.arg))
    if method.name == "naive":
        return LagSet.full(d)
    raise ValueError(f"unknown method {method.name}")


def run_replication(
    model: MtdModel,
    n: int,
    methods: list[MethodSpec],
    c_by_method: dict,
    seed_path: tuple[int, ...],
    master_seed: int,
    epsilon: float = 0.1,
    mu: float = 0.5,
    split: float = 0.5,
    burn_in: int = 1000,
    estimate_symbol: int | None = None,
) -> dict:
    """Simulate one sample and apply every method to it.

    Returns per-method dicts with the selected lags and, when asked,
    the post-selection estimate of P(symbol | all-zero context).
    """
    seq = simulate(model, n, np.random.SeedSequence([master_seed, *seed_path]),
                   burn_in=burn_in)
    d = model.order
    out = {}
    for method in methods:
        params = ThresholdParams.for_sample(
            n, c=c_by_method.get(method.label, 2.0), epsilon=epsilon, mu=mu
        )
        selected = select_with_method(seq, d, method, params, split)
        row = {"selected": selected.lags}
        if estimate_symbol is not None:
            if len(selected):
                kern = estimate_kernel(seq, selected, params)
                row["estimate"] = float(
                    kern.row((0,) * len(selected)).probs[estimate_symbol]
                )
            else:
                row["estimate"] = float(
                    marginal_estimate(seq, d)[estimate_symbol]
                )
        out[method.label] = row
    return out


@dataclass
class ExperimentConfig:
    """Settings of one replication study."""

    model: MtdModel
    methods: list[str]
    sample_sizes: list[int]
    replications: int = 100
    seed: int = 0
    epsilon: float = 0.1
    mu: float = 0.5
    alpha_c: float = 2.0
    c_grid: list[float] | None = None
    grid_replications: int = 100
    grid_sample_size: int | None = None
    split: float = 0.5
    burn_in: int = 1000
    estimate_symbol: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        d = self.model.order
        for n in self.sample_sizes:
            if n <= d + 1:
                raise ValueError(f"sample size {n} must exceed order + 1 = {d + 1}")


def _rep_task(args):
    (model_dict, n, method_labels, c_by_method, path, seed, epsilon, mu,
     split, burn_in, estimate_symbol) = args
    model = model_from_dict(model_dict)
    methods = [parse_method(lbl) for lbl in method_labels]
    return run_replication(model, n, methods, c_by_method, path, seed,
                           epsilon, mu, split, burn_in, estimate_symbol)


def grid_search_c(
    model: MtdModel,
    method: MethodSpec,
    grid,
    n: int = 100,
    replications: int = 100,
    seed: int = 0,
    epsilon: float = 0.1,
    mu: float = 0.5,
    split: float = 0.5,
    burn_in: int = 1000,
) -> tuple[float, dict]:
    """Pick the threshold constant by exact-recovery count at a small
    sample size; ties go to the smallest constant."""
    truth = diagnostics(model).relevant.lags
    scores = {}
    for ci, c in enumerate(grid):
        hits = 0
        for rep in range(replications):
            res = run_replication(
                model, n, [method], {method.label: c},
                (_GRID_BRANCH, ci, rep), seed, epsilon, mu, split, burn_in,
            )
            hits += res[method.label]["selected"] == truth
        scores[c] = hits
    best = min(grid, key=lambda c: (-scores[c], c))
    return best, scores


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full study described by ``config``.

    When ``c_grid`` is set, the threshold constant of each method that
    uses one is first fixed by :func:`grid_search_c` at the smallest
    sample size (or ``grid_sample_size``); otherwise ``alpha_c`` is
    used everywhere.  Returns the chosen constants and one result row
    per (method, sample size).
    """
    methods = [parse_method(text) for text in config.methods]
    truth = diagnostics(config.model).relevant.lags
    c_by_method = {m.label: config.alpha_c for m in methods}
    grid_scores = {}
    if config.c_grid:
        n_grid = config.grid_sample_size or min(config.sample_sizes)
        for m in methods:
            if m.uses_threshold_c:
                best, scores = grid_search_c(
                    config.model, m, config.c_grid, n_grid,
                    config.grid_replications, config.seed,
                    config.epsilon, config.mu, config.split, config.burn_in,
                )
                c_by_method[m.label] = best
                grid_scores[m.label] = scores

    labels = [m.label for m in methods]
    model_dict = model_to_dict(config.model, keep_zero_lags=True)
    rows = []
    for ni, n in enumerate(config.sample_sizes):
        tasks = [
            (model_dict, n, labels, c_by_method, (ni, rep), config.seed,
             config.epsilon, config.mu, config.split, config.burn_in,
             config.estimate_symbol)
            for rep in range(config.replications)
        ]
        if config.workers > 1:
            with ProcessPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(_rep_task, tasks, chunksize=4))
        else:
            results = [_rep_task(t) for t in tasks]
        for m in methods:
            picks = [res[m.label] for res in results]
            hits = sum(p["selected"] == truth for p in picks)
            reps = config.replications
            freq = hits / reps
            row = {
                "method": m.label,
                "n": n,
                "c": c_by_method[m.label] if m.uses_threshold_c else None,
                "replications": reps,
                "successes": hits,
                "frequency": freq,
                "se": math.sqrt(freq * (1.0 - freq) / reps),
            }
            if config.estimate_symbol is not None:
                est = np.asarray([p["estimate"] for p in picks])
                row["estimate_mean"] = float(est.mean())
                row["estimate_sd"] = float(est.std(ddof=1)) if reps > 1 else 0.0
            rows.append(row)
    return {"c_by_method": c_by_method, "grid_scores": grid_scores,
            "truth": list(truth), "rows": rows}


def coverage_check(
    model: MtdModel,
    n: int,
    replications: int,
    params: ThresholdParams,
    seed: int = 0,
    burn_in: int = 1000,
) -> dict:
    """Monte Carlo check of the deviation-radius concentration bound.

    For each replication, counts are taken on the relevant lag set and
    every observed (symbol, context) cell is tested for
    ``|p_hat - p| >= radius``.  The violation frequency over all cells
    is compared to ``min(1, 4 ceil(log(mu (n - d) / alpha + 2) /
    log(1 + eps)) exp(-alpha))`` plus three binomial standard errors.
    """
    from .model import transition_prob  # local import to keep header tidy

    diag = diagnostics(model)
    lags = diag.relevant
    if len(lags) == 0:
        raise ValueError("coverage check needs at least one relevant lag")
    d = model.order
    K = model.alphabet.size
    # exact law per context over the relevant lags
    truth = {}
    for ctx in np.ndindex(*([K] * len(lags))):
        past = [0] * d
        for lag, symbol in zip(lags, ctx):
            past[d + lag] = int(symbol)
        truth[tuple(int(c) for c in ctx)] = transition_prob(model, past)

    violations = 0
    cells = 0
    for rep in range(replications):
        seq = simulate(model, n, np.random.SeedSequence([seed, rep]), burn_in)
        kern = estimate_kernel(seq, lags, params)
        for ctx, p_true in truth.items():
            row = kern.row(ctx)
            if row.count == 0:
                continue
            cells += K
            violations += int(np.sum(np.abs(row.probs - p_true) >= row.radii))
    freq = violations / cells if cells else 0.0
    ratio = math.log(params.mu * (n - d) / params.alpha + 2.0) / math.log1p(params.epsilon)
    bound = min(1.0, 4.0 * math.ceil(ratio) * math.exp(-params.alpha))
    se = math.sqrt(freq * (1.0 - freq) / cells) if cells else 0.0
    return {
        "violations": violations,
        "cells": cells,
        "frequency": freq,
        "bound": bound,
        "se": se,
        "ok": freq <= bound + 3.0 * se,
    }
