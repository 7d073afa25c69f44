"""Context counting and empirical transition probabilities.

All estimators in this package reduce to occurrence counts of the form

    N(x_S, a) = #{ t in the counting window : X_{t+j} = x_j for j in S,
                                              X_t = a }

for a lag set ``S``.  Counts are stored sparsely (only observed contexts
appear), keyed by the context packed into a base-``K`` integer whenever
it fits 62 bits and by its raw bytes otherwise.

Window convention: a window ``(start, stop)`` counts the positions
``t = start + d + 1, ..., stop`` of the 1-indexed sample ``X_{1:n}``, so
every symbol referenced lies inside ``X_{start+1:stop}`` and the number
of countable positions is ``stop - start - d``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .model import Alphabet, LagSet, SymbolSequence

__all__ = [
    "ContextCounts",
    "count_contexts",
    "count_joint",
    "empirical_transition",
    "empirical_marginal",
    "load_sequence",
    "counts_to_csv_rows",
]

_PACK_BITS = 62
_BINCOUNT_CAP = 1 << 16


def _packable(n_symbols: int, width: int) -> bool:
    return width * math.log2(n_symbols) <= _PACK_BITS


@dataclass(frozen=True)
class ContextCounts:
    """Sparse occurrence table for one lag set on one window."""

    lag_set: LagSet
    start: int
    stop: int
    n_symbols: int
    table: dict
    packed: bool

    @property
    def positions(self) -> int:
        """Number of countable positions in the window."""
        return self.stop - self.start - self.lag_set.order

    def keys(self):
        return self.table.keys()

    def total(self, key) -> int:
        return int(self.table[key].sum())

    def key_of(self, context: Iterable[int]):
        ctx = tuple(int(c) for c in context)
        if len(ctx) != len(self.lag_set):
            raise ValueError("context length does not match lag set")
        if self.packed:
            key = 0
            for digit in reversed(ctx):
                key = key * self.n_symbols + digit
            return key
        return np.asarray(ctx, dtype=np.uint8).tobytes()

    def context_of(self, key) -> tuple[int, ...]:
        width = len(self.lag_set)
        if self.packed:
            digits = []
            for _ in range(width):
                digits.append(int(key % self.n_symbols))
                key //= self.n_symbols
            return tuple(digits)
        return tuple(int(b) for b in np.frombuffer(key, dtype=np.uint8))

    def vector(self, context: Iterable[int]) -> np.ndarray | None:
        """Count vector of a context, ``None`` when never observed."""
        return self.table.get(self.key_of(context))


def _window_slices(data: np.ndarray, lags, start: int, stop: int, order: int):
    lo = start + order
    cols = [data[lo + j: stop + j] for j in lags]
    return cols, data[lo:stop]


def count_contexts(
    seq: SymbolSequence,
    lags: LagSet,
    start: int = 0,
    stop: int | None = None,
) -> ContextCounts:
    """Count context/symbol occurrences of ``lags`` on a window.

    Raises
    ------
    ValueError
        If the window is shorter than ``order + 1`` or the lag set is
        empty (counting needs at least one coordinate; use the marginal
        frequency of symbols directly in that case).
    """
    d = lags.order
    n = len(seq) if stop is None else int(stop)
    if n > len(seq):
        raise ValueError("window end beyond sequence length")
    if n - start <= d:
        raise ValueError("window shorter than order")
    if len(lags) == 0:
        raise ValueError("lag set is empty")
    K = seq.alphabet.size
    cols, symbols = _window_slices(seq.data, lags.lags, start, n, d)

    table: dict = {}
    if _packable(K, len(lags) + 1):
        packed = np.zeros(symbols.size, dtype=np.int64)
        mult = 1
        for col in cols:
            packed += col * mult
            mult *= K
        combined = packed * K + symbols
        span = mult * K
        if span <= _BINCOUNT_CAP:
            dense = np.bincount(combined, minlength=span).reshape(-1, K)
            for ctx_key in np.nonzero(dense.sum(axis=1))[0]:
                table[int(ctx_key)] = dense[ctx_key].copy()
        else:
            uniq, cnt = np.unique(combined, return_counts=True)
            for val, c in zip(uniq.tolist(), cnt.tolist()):
                vec = table.get(val // K)
                if vec is None:
                    vec = np.zeros(K, dtype=np.int64)
                    table[val // K] = vec
                vec[val % K] = c
        return ContextCounts(lags, start, n, K, table, packed=True)

    if K > 255:
        raise ValueError("alphabet too large for byte-keyed contexts")
    mat = np.empty((symbols.size, len(lags) + 1), dtype=np.uint8)
    for i, col in enumerate(cols):
        mat[:, i] = col
    mat[:, -1] = symbols
    uniq, cnt = np.unique(mat, axis=0, return_counts=True)
    for row, c in zip(uniq, cnt.tolist()):
        key = row[:-1].tobytes()
        vec = table.get(key)
        if vec is None:
            vec = np.zeros(K, dtype=np.int64)
            table[key] = vec
        vec[int(row[-1])] = c
    return ContextCounts(lags, start, n, K, table, packed=False)


def count_joint(
    seq: SymbolSequence,
    lags: LagSet,
    extra_lag: int,
    start: int = 0,
    stop: int | None = None,
) -> dict:
    """Joint counts over (context on ``lags``, symbol at ``extra_lag``,
    current symbol).

    Returns a dict mapping packed context keys (on ``lags``; key 0 for
    the empty set) to ``(K, K)`` integer matrices ``M[b, a]``.
    """
    d = lags.order
    if extra_lag in lags:
        raise ValueError("extra_lag already in lag set")
    if not (-d <= extra_lag <= -1):
        raise ValueError(f"extra_lag {extra_lag} outside [-{d}, -1]")
    n = len(seq) if stop is None else int(stop)
    if n > len(seq):
        raise ValueError("window end beyond sequence length")
    if n - start <= d:
        raise ValueError("window shorter than order")
    K = seq.alphabet.size
    if not _packable(K, len(lags) + 2):
        raise ValueError("lag set too wide for joint counting")
    cols, symbols = _window_slices(seq.data, lags.lags, start, n, d)
    (extra_col,), _ = _window_slices(seq.data, (extra_lag,), start, n, d)

    packed = np.zeros(symbols.size, dtype=np.int64)
    mult = 1
    for col in cols:
        packed += col * mult
        mult *= K
    combined = (packed * K + extra_col) * K + symbols
    out: dict = {}
    span = mult * K * K
    if span <= _BINCOUNT_CAP:
        dense = np.bincount(combined, minlength=span).reshape(-1, K, K)
        for ctx_key in np.nonzero(dense.sum(axis=(1, 2)))[0]:
            out[int(ctx_key)] = dense[ctx_key].copy()
    else:
        uniq, cnt = np.unique(combined, return_counts=True)
        for val, c in zip(uniq.tolist(), cnt.tolist()):
            ctx, rest = divmod(val, K * K)
            mat = out.get(ctx)
            if mat is None:
                mat = np.zeros((K, K), dtype=np.int64)
                out[ctx] = mat
            mat[rest // K, rest % K] = c
    return out


def sibling_groups(counts: ContextCounts, lag: int) -> dict:
    """Group observed contexts into compatibility classes for one lag.

    Two contexts are compatible for ``lag`` when they agree on every
    other coordinate.  Returns a dict mapping the stripped context to
    the list of ``(digit_at_lag, key)`` pairs, with keys in sorted
    (deterministic) order.
    """
    if lag not in counts.lag_set:
        raise ValueError(f"lag {lag} not in counted lag set")
    pos = counts.lag_set.lags.index(lag)
    K = counts.n_symbols
    groups: dict = {}
    if counts.packed:
        p = K ** pos
        for key in counts.keys():
            digit = (key // p) % K
            sibling = (key // (p * K)) * p + key % p
            groups.setdefault(sibling, []).append((digit, key))
    else:
        for key in counts.keys():
            row = bytearray(key)
            digit = row[pos]
            del row[pos]
            groups.setdefault(bytes(row), []).append((digit, key))
    return groups


def empirical_transition(counts: ContextCounts, context: Iterable[int]) -> np.ndarray:
    """Empirical transition probabilities of a context.

    Unseen contexts fall back to the uniform law on the alphabet.
    """
    vec = counts.vector(context)
    if vec is None or vec.sum() == 0:
        return np.full(counts.n_symbols, 1.0 / counts.n_symbols)
    return vec / vec.sum()


def empirical_marginal(counts: ContextCounts, context: Iterable[int]) -> float:
    """Empirical occurrence frequency of a context on the window."""
    vec = counts.vector(context)
    if vec is None:
        return 0.0
    return float(vec.sum()) / counts.positions


def counts_to_csv_rows(counts: ContextCounts):
    """Yield (context, symbol, count) rows for debugging exports."""
    for key in counts.keys():
        ctx = counts.context_of(key)
        vec = counts.table[key]
        for a in range(counts.n_symbols):
            if vec[a]:
                yield ctx, a, int(vec[a])


# ---------------------------------------------------------------------------
# sequence ingestion
# ---------------------------------------------------------------------------

def _default_token_table(alphabet: Alphabet) -> dict[str, int]:
    table: dict[str, int] = {}
    for idx, val in enumerate(alphabet.symbols):
        table[str(val)] = idx
        if float(val).is_integer():
            table[str(int(val))] = idx
    return table


def load_sequence(
    path,
    alphabet: Alphabet,
    fmt: str | None = None,
    symbol_map: Mapping[str, float] | None = None,
    skip_header: bool = False,
) -> SymbolSequence:
    """Read a symbol sequence from a text or CSV file.

    Supported formats: whitespace-separated tokens, one symbol per line
    (both handled by ``fmt='tokens'``) and a single CSV column
    (``fmt='csv'``).  ``fmt=None`` picks ``'csv'`` for ``.csv`` files.

    Tokens are resolved to alphabet indices through the canonical string
    forms of the symbol values plus, when given, the entries of
    ``symbol_map`` (token -> symbol value).  An unknown token raises
    ``ValueError`` naming its line.
    """
    table = _default_token_table(alphabet)
    if symbol_map:
        value_to_idx = {float(v): i for i, v in enumerate(alphabet.symbols)}
        for tok, val in symbol_map.items():
            if float(val) not in value_to_idx:
                raise ValueError(f"symbol map value {val!r} not in alphabet")
            table[str(tok)] = value_to_idx[float(val)]

    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "tokens"

    out: list[int] = []
    if fmt == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or (lineno == 1 and skip_header):
                    continue
                tok = row[0].strip()
                if tok == "":
                    continue
                if tok not in table:
                    raise ValueError(f"unknown symbol {tok!r} at line {lineno}")
                out.append(table[tok])
    elif fmt in ("tokens", "lines"):
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if lineno == 1 and skip_header:
                    continue
                for tok in line.split():
                    if tok not in table:
                        raise ValueError(f"unknown symbol {tok!r} at line {lineno}")
                    out.append(table[tok])
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if not out:
        raise ValueError(f"no symbols found in {path}")
    return SymbolSequence(np.asarray(out, dtype=np.int64), alphabet)
