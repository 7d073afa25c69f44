"""Mixture transition distribution (MTD) models.

An MTD model of order ``d`` on a finite alphabet ``A`` is a Markov chain
whose transition law is a convex mixture of a lag-free base law and ``d``
single-lag kernels:

    p(a | x_{-d:-1}) = w_0 * p0(a) + sum_k w_{-k} * q_k(a | x_{-k})

This module holds the exact model representation, validation, derived
structural quantities (oscillations, relevant lag set, minimal transition
probability, conditional means), full-context transition evaluation and
chain simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Alphabet",
    "LagSet",
    "MtdModel",
    "ModelDiagnostics",
    "SymbolSequence",
    "validate_model",
    "transition_prob",
    "diagnostics",
    "simulate",
    "model_from_dict",
    "model_to_dict",
    "load_model",
    "save_model",
    "replication_rng",
]

#: absolute tolerance for probability normalisation checks
PROB_TOL = 1e-12

#: absolute tolerance below which an oscillation counts as zero
ZERO_TOL = 1e-12

#: enumeration guard for quantities that require iterating A^Lambda
ENUM_BUDGET = 1 << 18


@dataclass(frozen=True)
class Alphabet:
    """Ordered finite set of distinct real-valued symbols.

    Symbols are referred to by their index everywhere in this package;
    the real values only enter through conditional means and Lipschitz
    norms of the per-lag kernels.
    """

    symbols: tuple[float, ...]

    def __post_init__(self):
        syms = tuple(float(v) for v in self.symbols)
        if len(syms) < 2:
            raise ValueError("alphabet needs at least two symbols")
        if len(set(syms)) != len(syms):
            raise ValueError("alphabet symbols must be distinct")
        object.__setattr__(self, "symbols", syms)

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.symbols, dtype=float)

    @property
    def sup_norm(self) -> float:
        """max |a| over symbols."""
        return max(abs(v) for v in self.symbols)

    @property
    def diameter(self) -> float:
        """max |a - b| over symbol pairs."""
        return max(self.symbols) - min(self.symbols)

    @property
    def min_gap(self) -> float:
        """min |a - b| over distinct symbol pairs."""
        vals = sorted(self.symbols)
        return min(b - a for a, b in zip(vals, vals[1:]))


BINARY = Alphabet((0.0, 1.0))


@dataclass(frozen=True, order=True)
class LagSet:
    """Subset of the lags {-d, ..., -1}, kept sorted ascending.

    The order ``d`` travels with the set so that bounds can be checked
    without extra context.
    """

    lags: tuple[int, ...]
    order: int

    def __post_init__(self):
        lags = tuple(sorted(int(j) for j in self.lags))
        if len(set(lags)) != len(lags):
            raise ValueError("duplicate lags")
        for j in lags:
            if not (-self.order <= j <= -1):
                raise ValueError(f"lag {j} outside [-{self.order}, -1]")
        object.__setattr__(self, "lags", lags)

    def __len__(self) -> int:
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)

    def __contains__(self, j: int) -> bool:
        return j in self.lags

    def complement(self) -> tuple[int, ...]:
        """All lags of the model not in this set, ascending."""
        present = set(self.lags)
        return tuple(j for j in range(-self.order, 0) if j not in present)

    def drop(self, j: int) -> "LagSet":
        return LagSet(tuple(k for k in self.lags if k != j), self.order)

    def add(self, j: int) -> "LagSet":
        return LagSet(self.lags + (j,), self.order)

    @staticmethod
    def full(order: int) -> "LagSet":
        return LagSet(tuple(range(-order, 0)), order)

    @staticmethod
    def empty(order: int) -> "LagSet":
        return LagSet((), order)


@dataclass(frozen=True)
class SymbolSequence:
    """Observed sample stored as alphabet indices."""

    data: np.ndarray
    alphabet: Alphabet

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("sequence must be one-dimensional")
        if arr.size and (arr.min() < 0 or arr.max() >= self.alphabet.size):
            raise ValueError("sequence contains out-of-alphabet indices")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def __len__(self) -> int:
        return int(self.data.size)

    def values(self) -> np.ndarray:
        """Sequence mapped back to symbol values."""
        return self.alphabet.values[self.data]


def _readonly(arr) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MtdModel:
    """Exact MTD model specification.

    Parameters
    ----------
    alphabet : Alphabet
    order : int
        Model order ``d >= 1``.
    weights : array, shape (d + 1,)
        Mixture weights; ``weights[0]`` is the lag-free weight and
        ``weights[k]`` the weight of lag ``-k``.
    p0 : array, shape (K,)
        Base law over the alphabet.
    kernels : array, shape (d, K, K)
        ``kernels[k - 1][b, a]`` is the probability of symbol ``a``
        given that lag ``-k`` holds symbol ``b``.
    """

    alphabet: Alphabet
    order: int
    weights: np.ndarray
    p0: np.ndarray
    kernels: np.ndarray

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        k = self.alphabet.size
        w = _readonly(self.weights)
        p0 = _readonly(self.p0)
        kern = _readonly(self.kernels)
        if w.shape != (self.order + 1,):
            raise ValueError(f"weights must have shape ({self.order + 1},)")
        if p0.shape != (k,):
            raise ValueError(f"p0 must have shape ({k},)")
        if kern.shape != (self.order, k, k):
            raise ValueError(f"kernels must have shape ({self.order}, {k}, {k})")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "kernels", kern)

    def weight(self, lag: int) -> float:
        """Mixture weight of ``lag`` (0 for the base law, -k for lag -k)."""
        return float(self.weights[-lag])

    def kernel(self, lag: int) -> np.ndarray:
        """Kernel matrix of a strictly negative lag."""
        if not (-self.order <= lag <= -1):
            raise ValueError(f"lag {lag} outside [-{self.order}, -1]")
        return self.kernels[-lag - 1]


@dataclass(frozen=True)
class ModelDiagnostics:
    """Structural quantities derived from an MTD model."""

    oscillations: np.ndarray          # delta_j for j = -1..-d (index k-1 <-> lag -k)
    relevant: LagSet                  # lags with positive oscillation
    delta_min: float
    tilde_delta_min: float            # min over relevant lags of w_j * Lip(m_j)
    big_delta: float                  # 1 - sum of oscillations over relevant lags
    p_min: float                      # minimal transition probability over A x A^Lambda
    cond_means: np.ndarray            # m_j(b) table, shape (d, K)
    lip_norms: np.ndarray             # Lipschitz norm of m_j per lag, shape (d,)

    def oscillation(self, lag: int) -> float:
        return float(self.oscillations[-lag - 1])


def _row_tv_span(kernel: np.ndarray) -> float:
    """Largest total variation distance between rows of a kernel."""
    diff = np.abs(kernel[:, None, :] - kernel[None, :, :]).sum(axis=2)
    return 0.5 * float(diff.max())


def validate_model(model: MtdModel) -> list[str]:
    """Collect every invariant violation of an MTD specification.

    Returns a list of human-readable violations (empty means valid);
    never raises, so it can be used as a diagnostic on untrusted input.
    """
    bad: list[str] = []
    w = model.weights
    if np.any(w < -PROB_TOL) or np.any(w > 1 + PROB_TOL):
        idx = int(np.argmax(np.abs(w - 0.5)))
        bad.append(f"weight[{idx}] = {w[idx]!r} outside [0, 1]")
    s = float(w.sum())
    if abs(s - 1.0) > PROB_TOL:
        bad.append(f"weights sum != 1 (residual {s - 1.0:.3e})")
    sp = float(model.p0.sum())
    if np.any(model.p0 < -PROB_TOL):
        bad.append("p0 has negative entries")
    if abs(sp - 1.0) > PROB_TOL:
        bad.append(f"p0 sum != 1 (residual {sp - 1.0:.3e})")
    rowsums = model.kernels.sum(axis=2)
    for k in range(model.order):
        if np.any(model.kernels[k] < -PROB_TOL):
            bad.append(f"kernel for lag {-(k + 1)} has negative entries")
        resid = rowsums[k] - 1.0
        if np.any(np.abs(resid) > PROB_TOL):
            b = int(np.argmax(np.abs(resid)))
            bad.append(
                f"kernel row sum != 1 at lag {-(k + 1)}, row {b} "
                f"(residual {resid[b]:.3e})"
            )
    return bad


def transition_prob(model: MtdModel, past: Sequence[int]) -> np.ndarray:
    """Transition law given a full past.

    Parameters
    ----------
    past : sequence of int, length d
        Symbol indices in chronological order, ``past[d + j]`` holding
        the symbol at lag ``j``.

    Returns
    -------
    array, shape (K,)
        Probability vector over the alphabet.
    """
    past = np.asarray(past, dtype=np.int64)
    if past.shape != (model.order,):
        raise ValueError(f"past must have length {model.order}, got {past.shape}")
    if past.size and (past.min() < 0 or past.max() >= model.alphabet.size):
        raise ValueError("past contains out-of-alphabet indices")
    out = model.weights[0] * model.p0.copy()
    for k in range(1, model.order + 1):
        wk = model.weights[k]
        if wk != 0.0:
            out += wk * model.kernels[k - 1, past[model.order - k]]
    return out


def conditional_means(model: MtdModel) -> np.ndarray:
    """Table m_j(b) of kernel conditional means, shape (d, K)."""
    vals = model.alphabet.values
    return model.kernels @ vals


def _lip_norms(means: np.ndarray, vals: np.ndarray) -> np.ndarray:
    diff_m = np.abs(means[:, :, None] - means[:, None, :])
    diff_v = np.abs(vals[:, None] - vals[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(diff_v > 0, diff_m / diff_v, 0.0)
    return ratio.max(axis=(1, 2))


def diagnostics(model: MtdModel, zero_tol: float = ZERO_TOL) -> ModelDiagnostics:
    """Compute oscillations, the relevant lag set and related constants.

    A lag is relevant when its oscillation (mixture weight times the
    largest total-variation spread between kernel rows) exceeds
    ``zero_tol``.
    """
    d, K = model.order, model.alphabet.size
    osc = np.empty(d)
    for k in range(1, d + 1):
        osc[k - 1] = model.weights[k] * _row_tv_span(model.kernels[k - 1])
    relevant = LagSet(tuple(-k for k in range(1, d + 1) if osc[k - 1] > zero_tol), d)
    means = conditional_means(model)
    lips = _lip_norms(means, model.alphabet.values)
    if len(relevant):
        rel_idx = [-j - 1 for j in relevant]
        delta_min = float(osc[rel_idx].min())
        tilde = float(min(model.weights[-j] * lips[-j - 1] for j in relevant))
        big_delta = 1.0 - float(osc[rel_idx].sum())
    else:
        delta_min = 0.0
        tilde = 0.0
        big_delta = 1.0
    p_min = _minimal_transition_prob(model, relevant)
    return ModelDiagnostics(
        oscillations=_readonly(osc),
        relevant=relevant,
        delta_min=delta_min,
        tilde_delta_min=tilde,
        big_delta=big_delta,
        p_min=p_min,
        cond_means=_readonly(means),
        lip_norms=_readonly(lips),
    )


def _minimal_transition_prob(model: MtdModel, relevant: LagSet) -> float:
    """min over symbols and relevant-lag contexts of p(a | x_Lambda)."""
    K = model.alphabet.size
    if K ** max(len(relevant), 1) > ENUM_BUDGET:
        return float("nan")
    base = model.weights[0] * model.p0.copy()
    # lags outside Lambda contribute a constant row (rows equal or weight 0)
    for k in range(1, model.order + 1):
        if -k not in relevant and model.weights[k] != 0.0:
            base += model.weights[k] * model.kernels[k - 1, 0]
    best = np.full(K, np.inf)
    rel = list(relevant)
    for ctx in np.ndindex(*([K] * len(rel))):
        p = base.copy()
        for j, b in zip(rel, ctx):
            p += model.weights[-j] * model.kernels[-j - 1, b]
        best = np.minimum(best, p)
    return float(best.min())


def simulate(
    model: MtdModel,
    n: int,
    seed,
    burn_in: int = 1000,
) -> SymbolSequence:
    """Simulate ``n`` symbols of the chain.

    Sampling follows the mixture mechanism: at each step a lag is drawn
    with probability equal to its weight, then the symbol comes from
    that lag's kernel applied to the corresponding past symbol (or from
    the base law when the lag-free component is drawn).  The first ``d``
    symbols are seeded i.i.d. uniform on the alphabet and ``burn_in``
    transitions are discarded, so the returned sample is close to
    stationary whenever the chain mixes.

    Deterministic given ``seed`` (an int or ``numpy.random.SeedSequence``).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    bad = validate_model(model)
    if bad:
        raise ValueError("invalid model: " + "; ".join(bad))
    rng = np.random.default_rng(seed)
    d, K = model.order, model.alphabet.size
    total = burn_in + n
    lag_draws = np.searchsorted(
        np.cumsum(model.weights), rng.random(total), side="right"
    ).tolist()
    u = rng.random(total).tolist()
    # cumulative rows as plain lists keep the sequential loop cheap
    cum0 = np.cumsum(model.p0).tolist()
    cumk = [np.cumsum(model.kernels[k], axis=1).tolist() for k in range(d)]
    x = rng.integers(0, K, size=d).tolist()
    append = x.append
    for t in range(total):
        k = lag_draws[t]
        row = cum0 if k == 0 else cumk[k - 1][x[-k]]
        ut = u[t]
        a = 0
        while ut >= row[a]:
            a += 1
        append(a)
    return SymbolSequence(np.asarray(x[d + burn_in:], dtype=np.int64), model.alphabet)


def replication_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent stream for a replication, derived from a master seed.

    Streams for distinct ``path`` tuples (for instance
    ``(sample_size_index, replication_index)``) are statistically
    independent and reproducible.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, path)]))


def replication_seed(master_seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master_seed), *map(int, path)])


# ---------------------------------------------------------------------------
# JSON model specs
# ---------------------------------------------------------------------------

def model_from_dict(spec: dict) -> MtdModel:
    """Build a model from its JSON-style dict form.

    Expected shape::

        {"alphabet": [0, 1], "order": 8,
         "lambda": {"0": 0.4, "-1": 0.2, "-8": 0.4},
         "p0": [0.5, 0.5],
         "kernels": {"-1": [[0.3, 0.7], [0.6, 0.4]], ...}}

    Lags absent from ``lambda`` get weight zero; kernels may be omitted
    for zero-weight lags (a uniform placeholder is used).
    """
    alphabet = Alphabet(tuple(spec["alphabet"]))
    d = int(spec["order"])
    K = alphabet.size
    weights = np.zeros(d + 1)
    for key, val in dict(spec.get("lambda", {})).items():
        lag = int(key)
        if not (-d <= lag <= 0):
            raise ValueError(f"lambda key {key} outside [-{d}, 0]")
        weights[-lag] = float(val)
    p0 = np.asarray(spec.get("p0", np.full(K, 1.0 / K)), dtype=float)
    kernels = np.full((d, K, K), 1.0 / K)
    for key, mat in dict(spec.get("kernels", {})).items():
        lag = int(key)
        if not (-d <= lag <= -1):
            raise ValueError(f"kernel key {key} outside [-{d}, -1]")
        kernels[-lag - 1] = np.asarray(mat, dtype=float)
    for lag in range(-d, 0):
        if weights[-lag] > 0 and str(lag) not in spec.get("kernels", {}):
            raise ValueError(f"lag {lag} has positive weight but no kernel")
    return MtdModel(alphabet, d, weights, p0, kernels)


def model_to_dict(model: MtdModel, *, keep_zero_lags: bool = False) -> dict:
    lam = {"0": float(model.weights[0])}
    kernels = {}
    for k in range(1, model.order + 1):
        if model.weights[k] != 0.0 or keep_zero_lags:
            lam[str(-k)] = float(model.weights[k])
            kernels[str(-k)] = model.kernels[k - 1].tolist()
    return {
        "alphabet": list(model.alphabet.symbols),
        "order": model.order,
        "lambda": lam,
        "p0": model.p0.tolist(),
        "kernels": kernels,
    }


def load_model(path) -> MtdModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def save_model(model: MtdModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")
