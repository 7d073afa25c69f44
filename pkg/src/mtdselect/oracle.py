"""Exact small-instance computations by full-chain enumeration.

For models whose window space ``A^d`` fits an enumeration budget, the
stationary law of the order-``d`` window chain is computed exactly and
every marginal, conditional, influence value and covariance follows by
summation.  These numbers serve as the ground truth against which the
empirical statistics and the structural identities of the MTD family
are tested:

* the conditional-covariance identity
  ``Cov(X0, m_k(X_k) | x_S) = sum_{j in L \\ S} w_j Cov(m_j(X_j), m_k(X_k) | x_S)``
  where ``L`` is the relevant lag set and ``m_j`` the kernel means;
* the influence lower bound
  ``diam(A) * sup(A) * nu(k, S) >= E |Cov(X0, X_k | X_S)|``;
* the separation constant ``kappa`` (smallest over incomplete base sets
  of the best absolute conditional covariance of a missing relevant
  lag), with its closed-form lower bound under the inward
  weak-dependence condition;
* the Kullback-Leibler upper bound for the single-lag binary family.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Alphabet,
    BINARY,
    LagSet,
    MtdModel,
    ModelDiagnostics,
    diagnostics,
    validate_model,
)
from .selection import _nu_from_joint

__all__ = [
    "ExactLaw",
    "exact_law",
    "exact_nu_bar",
    "exact_cov_abs",
    "lemma_residual",
    "StructureReport",
    "verify_structure",
    "WeakDependenceReport",
    "verify_weak_dependence",
    "KlCheck",
    "kl_bound_check",
    "ell_xi_star",
    "OracleReport",
    "oracle_report",
    "min_pair_mass",
]

STATE_BUDGET = 1 << 18
DENSE_FALLBACK_CAP = 4096
STATIONARY_TOL = 1e-12
MAX_POWER_ITER = 1_000_000


def _transition_matrix(model: MtdModel) -> np.ndarray:
    """Dense (K^d, K) matrix of p(a | window) over all packed windows.

    Windows are packed with lag -k at base-K place k-1, so appending a
    symbol maps state s to a + K * (s mod K^(d-1)).
    """
    d, K = model.order, model.alphabet.size
    n_states = K ** d
    states = np.arange(n_states)
    trans = np.tile(model.weights[0] * model.p0, (n_states, 1))
    place = 1
    for k in range(1, d + 1):
        w = model.weights[k]
        if w != 0.0:
            digits = (states // place) % K
            trans += w * model.kernels[k - 1][digits]
        place *= K
    return trans


@dataclass(frozen=True)
class ExactLaw:
    """Stationary law of the window chain plus derived oracles."""

    model: MtdModel
    pi: np.ndarray            # stationary law over packed windows, shape (K^d,)
    trans: np.ndarray         # p(a | window), shape (K^d, K)
    diag: ModelDiagnostics
    residual: float           # L1 stationarity residual of pi

    @property
    def n_states(self) -> int:
        return self.pi.size

    def digits(self, lag: int) -> np.ndarray:
        """Symbol at ``lag`` for every packed window."""
        K = self.model.alphabet.size
        place = K ** (-lag - 1)
        return (np.arange(self.n_states) // place) % K

    def marginal(self, lags) -> np.ndarray:
        """Stationary joint law of the window coordinates ``lags``.

        Axes follow the lags sorted ascending; the empty set yields the
        scalar 1.0.
        """
        lags = tuple(sorted(lags))
        if not lags:
            return np.array(1.0)
        K = self.model.alphabet.size
        out = np.zeros((K,) * len(lags))
        np.add.at(out, tuple(self.digits(j) for j in lags), self.pi)
        return out

    def joint_next(self, lags) -> np.ndarray:
        """Joint law of (window coordinates ``lags``, next symbol).

        Shape ``(K,) * len(lags) + (K,)`` with the next symbol last.
        """
        lags = tuple(sorted(lags))
        K = self.model.alphabet.size
        if not lags:
            return (self.pi[:, None] * self.trans).sum(axis=0)
        out = np.zeros((K,) * len(lags) + (K,))
        np.add.at(out, tuple(self.digits(j) for j in lags), self.pi[:, None] * self.trans)
        return out


def exact_law(model: MtdModel, budget: int = STATE_BUDGET) -> ExactLaw:
    """Stationary law by power iteration over the packed window chain.

    Requires strictly positive transition probabilities (which makes
    the window chain irreducible and aperiodic); falls back to a dense
    eigenproblem when power iteration stalls on a small chain.
    """
    bad = validate_model(model)
    if bad:
        raise ValueError("invalid model: " + "; ".join(bad))
    d, K = model.order, model.alphabet.size
    n_states = K ** d
    if n_states > budget:
        raise ValueError(f"state space {n_states} exceeds budget {budget}")
    trans = _transition_matrix(model)
    if trans.min() <= 0.0:
        raise ValueError("oracle needs strictly positive transition probabilities")

    def step(p: np.ndarray) -> np.ndarray:
        return (p[:, None] * trans).reshape(K, n_states // K, K).sum(axis=0).ravel()

    pi = np.full(n_states, 1.0 / n_states)
    residual = math.inf
    for _ in range(MAX_POWER_ITER):
        new = step(pi)
        residual = float(np.abs(new - pi).sum())
        pi = new
        if residual <= STATIONARY_TOL:
            break
    if residual > STATIONARY_TOL and n_states <= DENSE_FALLBACK_CAP:
        full = np.zeros((n_states, n_states))
        tails = np.arange(n_states) % (n_states // K)
        for a in range(K):
            np.add.at(full, (np.arange(n_states), a + K * tails), trans[:, a])
        vals, vecs = np.linalg.eig(full.T)
        lead = int(np.argmin(np.abs(vals - 1.0)))
        pi = np.real(vecs[:, lead])
        pi = np.clip(pi / pi.sum(), 0.0, None)
        pi /= pi.sum()
        residual = float(np.abs(step(pi) - pi).sum())
    pi.setflags(write=False)
    trans.setflags(write=False)
    return ExactLaw(model, pi, trans, diagnostics(model), residual)


# ---------------------------------------------------------------------------
# influence values and covariances
# ---------------------------------------------------------------------------

def _context_slices(tensor: np.ndarray, n_context_axes: int):
    """Iterate (context tuple, sub-tensor) over leading axes."""
    K = tensor.shape[0] if tensor.ndim else 0
    if n_context_axes == 0:
        yield (), tensor
        return
    for ctx in np.ndindex(*tensor.shape[:n_context_axes]):
        yield ctx, tensor[ctx]


def exact_nu_bar(law: ExactLaw, k: int, base) -> float:
    """Exact influence of lag ``k`` on the next symbol given ``base``.

    Zero (up to float summation error) whenever the relevant lags are
    all contained in ``base``.
    """
    base = tuple(sorted(base))
    if k in base:
        raise ValueError(f"lag {k} in base set")
    lags = tuple(sorted(base + (k,)))
    kpos = lags.index(k)
    tensor = law.joint_next(lags)
    K = law.model.alphabet.size
    # move the k axis next to the symbol axis: contexts..., b, a
    tensor = np.moveaxis(tensor, kpos, -2)
    joint = {ctx: mat for ctx, mat in _context_slices(tensor, len(base))}
    return _nu_from_joint(joint, 1.0, K)


def _cov_from_matrix(mat: np.ndarray, row_vals: np.ndarray, col_vals: np.ndarray) -> float:
    """Covariance of (row value, col value) under an unnormalised joint."""
    mass = mat.sum()
    if mass <= 0:
        return 0.0
    p = mat / mass
    er = float(row_vals @ p.sum(axis=1))
    ec = float(p.sum(axis=0) @ col_vals)
    erc = float(row_vals @ p @ col_vals)
    return erc - er * ec


def exact_cov_abs(law: ExactLaw, k: int, base) -> float:
    """E | Cov(next value, value at lag k | X_base) |."""
    base = tuple(sorted(base))
    lags = tuple(sorted(base + (k,)))
    kpos = lags.index(k)
    tensor = np.moveaxis(law.joint_next(lags), kpos, -2)
    vals = law.model.alphabet.values
    out = 0.0
    for _, mat in _context_slices(tensor, len(base)):
        out += mat.sum() * abs(_cov_from_matrix(mat, vals, vals))
    return float(out)


def lemma_residual(law: ExactLaw, k: int, base) -> float:
    """Worst-context residual of the conditional-covariance identity.

    Both sides are plain sums over the stationary law, so the residual
    is pure floating-point noise when the implementation is right.
    """
    base = tuple(sorted(base))
    if k in base:
        raise ValueError(f"lag {k} in base set")
    model = law.model
    vals = model.alphabet.values
    means = law.diag.cond_means  # m_j table, shape (d, K)
    rel = [j for j in law.diag.relevant if j not in base]

    lags_k = tuple(sorted(base + (k,)))
    kpos = lags_k.index(k)
    lhs_tensor = np.moveaxis(law.joint_next(lags_k), kpos, -2)
    lhs = {}
    for ctx, mat in _context_slices(lhs_tensor, len(base)):
        lhs[ctx] = _cov_from_matrix(mat, means[-k - 1], vals)

    rhs = {ctx: 0.0 for ctx in lhs}
    for j in rel:
        if j == k:
            lags_jk = tuple(sorted(base + (k,)))
            tensor = np.moveaxis(law.marginal(lags_jk), lags_jk.index(k), -1)
            for ctx, vec in _context_slices(tensor, len(base)):
                mass = vec.sum()
                p = vec / mass
                mk = means[-k - 1]
                var = float(p @ (mk * mk)) - float(p @ mk) ** 2
                rhs[ctx] += model.weights[-j] * var
        else:
            lags_jk = tuple(sorted(base + (j, k)))
            jpos, kpos2 = lags_jk.index(j), lags_jk.index(k)
            tensor = law.marginal(lags_jk)
            tensor = np.moveaxis(tensor, (jpos, kpos2), (-2, -1))
            for ctx, mat in _context_slices(tensor, len(base)):
                rhs[ctx] += model.weights[-j] * _cov_from_matrix(
                    mat, means[-j - 1], means[-k - 1]
                )
    return max(abs(lhs[ctx] - rhs[ctx]) for ctx in lhs)


# ---------------------------------------------------------------------------
# structural verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureEntry:
    base: tuple[int, ...]
    lag: int
    nu_bar: float
    cov_abs: float
    lemma_resid: float


@dataclass
class StructureReport:
    entries: list
    kappa: float
    kappa_lower_bound: float | None
    max_lemma_residual: float
    min_influence_margin: float   # min of diam*sup*nu - E|Cov| over entries
    max_nu_on_covered: float      # max nu over cases with all relevant lags in base
    max_binary_identity_residual: float | None

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "kappa_lower_bound": self.kappa_lower_bound,
            "max_lemma_residual": self.max_lemma_residual,
            "min_influence_margin": self.min_influence_margin,
            "max_nu_on_covered": self.max_nu_on_covered,
            "max_binary_identity_residual": self.max_binary_identity_residual,
            "entries": [
                {"base": list(e.base), "lag": e.lag, "nu_bar": e.nu_bar,
                 "cov_abs": e.cov_abs, "lemma_resid": e.lemma_resid}
                for e in self.entries
            ],
        }


def _all_bases(d: int, max_size: int | None = None):
    lags = list(range(-d, 0))
    cap = d if max_size is None else min(max_size, d)
    for size in range(cap + 1):
        yield from itertools.combinations(lags, size)


def verify_structure(law: ExactLaw, max_base_size: int | None = None) -> StructureReport:
    """Check the structural identities over an enumerated family of
    (lag, base set) pairs and return the separation constant.

    ``kappa`` is the minimum over base sets missing some relevant lag of
    the best absolute conditional covariance among the missing relevant
    lags; its closed-form lower bound is attached when the inward
    weak-dependence constant is positive.
    """
    model = law.model
    d = model.order
    if max_base_size is None and 2 ** d * d > 1 << 14:
        raise ValueError("subset family too large; pass max_base_size")
    alpha = model.alphabet
    relevant = set(law.diag.relevant)
    scale = alpha.diameter * alpha.sup_norm

    entries = []
    kappa = math.inf
    max_resid = 0.0
    min_margin = math.inf
    max_nu_covered = 0.0
    max_bin_resid = 0.0 if alpha.size == 2 else None
    for base in _all_bases(d, max_base_size):
        base_set = set(base)
        per_lag = {}
        for k in (j for j in range(-d, 0) if j not in base_set):
            nu = exact_nu_bar(law, k, base)
            cov = exact_cov_abs(law, k, base)
            resid = lemma_residual(law, k, base)
            entries.append(StructureEntry(base, k, nu, cov, resid))
            per_lag[k] = cov
            max_resid = max(max_resid, resid)
            min_margin = min(min_margin, scale * nu - cov)
            if relevant <= base_set.union({k}) - {k}:
                # every relevant lag already conditioned on
                max_nu_covered = max(max_nu_covered, nu)
            if max_bin_resid is not None:
                max_bin_resid = max(max_bin_resid, abs(nu - 2.0 * cov))
        if relevant and not relevant <= base_set:
            kappa = min(kappa, max(per_lag[k] for k in relevant - base_set))
    if kappa is math.inf:
        kappa = 0.0

    lower = None
    if relevant:
        weak = verify_weak_dependence(law, gamma2=False)
        if weak.gamma1 > 0:
            lower = (
                law.diag.p_min ** 2
                * weak.gamma1
                * alpha.min_gap ** 2
                * law.diag.tilde_delta_min
                / (2.0 * math.sqrt(len(relevant)))
            )
    return StructureReport(
        entries=entries,
        kappa=float(kappa),
        kappa_lower_bound=lower,
        max_lemma_residual=max_resid,
        min_influence_margin=float(min_margin),
        max_nu_on_covered=max_nu_covered,
        max_binary_identity_residual=max_bin_resid,
    )


@dataclass
class WeakDependenceReport:
    gamma1: float             # largest admissible inward constant (may be <= 0)
    gamma1_witness: dict | None
    gamma2: float | None      # smallest admissible outward constant (binary only)
    gamma2_witness: dict | None

    def to_dict(self) -> dict:
        return {
            "gamma1": self.gamma1,
            "gamma1_witness": self.gamma1_witness,
            "gamma2": self.gamma2,
            "gamma2_witness": self.gamma2_witness,
        }


def verify_weak_dependence(law: ExactLaw, gamma2: bool = True) -> WeakDependenceReport:
    """Evaluate the inward/outward weak-dependence constants exactly.

    The inward constant is ``1 -`` the worst, over base sets missing a
    relevant lag ``k``, contexts and symbol pairs, of the summed
    relative influence of the other missing relevant lags; with nothing
    to sum it equals 1.  The outward constant (binary alphabets) is the
    worst total influence of missing relevant lags on an irrelevant
    one; with no admissible case it equals 0.
    """
    model = law.model
    d = model.order
    relevant = tuple(law.diag.relevant)
    rel_set = set(relevant)
    means = law.diag.cond_means
    K = model.alphabet.size

    worst_ratio = 0.0
    wit1 = None
    for base in _all_bases(d):
        base_set = set(base)
        if rel_set <= base_set:
            continue
        for k in sorted(rel_set - base_set):
            others = sorted(rel_set - base_set - {k})
            mk = means[-k - 1]
            lam_k = model.weights[-k]
            for b in range(K):
                for c in range(K):
                    if b == c or abs(mk[b] - mk[c]) <= 1e-12:
                        continue
                    denom = lam_k * abs(mk[b] - mk[c])
                    total = _max_inner_sum(law, base, k, others, means, b, c, model)
                    ratio = total / denom
                    if ratio > worst_ratio:
                        worst_ratio = ratio
                        wit1 = {"base": list(base), "lag": k, "b": b, "c": c,
                                "ratio": ratio}
    g1 = 1.0 - worst_ratio

    g2 = None
    wit2 = None
    if gamma2:
        if K != 2:
            raise ValueError("outward constant is defined for binary alphabets")
        g2 = 0.0
        irrelevant = [k for k in range(-d, 0) if k not in rel_set]
        for base in _all_bases(d):
            base_set = set(base)
            if not base_set < rel_set:
                continue
            for k in irrelevant:
                total = 0.0
                for j in sorted(rel_set - base_set):
                    total += _max_cond_prob_gap(law, base, k, j)
                if total > g2:
                    g2 = total
                    wit2 = {"base": list(base), "lag": k, "sum": total}
    return WeakDependenceReport(g1, wit1, g2, wit2)


def _max_inner_sum(law, base, k, others, means, b, c, model):
    """max over contexts of the summed conditional-mean gaps."""
    if not others:
        return 0.0
    per_ctx = None
    for j in others:
        lags = tuple(sorted(set(base) | {j, k}))
        tensor = law.marginal(lags)
        tensor = np.moveaxis(tensor, (lags.index(j), lags.index(k)), (-2, -1))
        mj = means[-j - 1]
        lam_j = model.weights[-j]
        vals = []
        for _, mat in _context_slices(tensor, len(base)):
            pb = mat[:, b] / mat[:, b].sum()
            pc = mat[:, c] / mat[:, c].sum()
            vals.append(lam_j * abs(float(mj @ pb) - float(mj @ pc)))
        arr = np.asarray(vals)
        per_ctx = arr if per_ctx is None else per_ctx + arr
    return float(per_ctx.max())


def _max_cond_prob_gap(law, base, k, j):
    """max over contexts of |P(X_k = 1 | X_j = 1) - P(X_k = 1 | X_j = 0)|."""
    lags = tuple(sorted(set(base) | {j, k}))
    tensor = law.marginal(lags)
    tensor = np.moveaxis(tensor, (lags.index(j), lags.index(k)), (-2, -1))
    best = 0.0
    for _, mat in _context_slices(tensor, len(base)):
        p1 = mat[1, 1] / mat[1].sum()
        p0 = mat[0, 1] / mat[0].sum()
        best = max(best, abs(float(p1 - p0)))
    return best


# ---------------------------------------------------------------------------
# minimax-family KL bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KlCheck:
    exact: float
    bound: float
    delta: float

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound + 1e-12


def _single_lag_model(lam: float, p_one: tuple[float, float], d: int, lag: int) -> MtdModel:
    kernels = np.full((d, 2, 2), 0.5)
    kernels[-lag - 1] = np.array(
        [[1.0 - p_one[0], p_one[0]], [1.0 - p_one[1], p_one[1]]]
    )
    weights = np.zeros(d + 1)
    weights[0] = 1.0 - lam
    weights[-lag] = lam
    return MtdModel(BINARY, d, weights, np.array([0.5, 0.5]), kernels)


def kl_bound_check(
    lam: float,
    p_one: tuple[float, float],
    d: int,
    n: int,
    j: int = -1,
    k: int | None = None,
    budget: int = STATE_BUDGET,
) -> KlCheck:
    """Exact Kullback-Leibler divergence between two single-lag binary
    models against its closed-form bound ``2 n delta^2 / (1 - lam)``.

    The models share the kernel ``P(1 | b) = p_one[b]`` placed at lag
    ``j`` and ``k`` respectively, mixed with a fair coin with weight
    ``1 - lam``; ``delta = lam * |p_one[1] - p_one[0]|``.  The sample
    divergence decomposes into the divergence of the initial window
    marginals plus ``n - d`` identical conditional terms.
    """
    if not (0.0 < lam < 1.0):
        raise ValueError("lam must lie in (0, 1)")
    if not (1 <= d <= n):
        raise ValueError("need 1 <= d <= n")
    k = -d if k is None else k
    delta = lam * abs(p_one[1] - p_one[0])
    bound = 2.0 * n * delta * delta / (1.0 - lam)
    law_j = exact_law(_single_lag_model(lam, p_one, d, j), budget)
    if k == j:
        return KlCheck(0.0, bound, delta)
    law_k = exact_law(_single_lag_model(lam, p_one, d, k), budget)
    marg = float(np.sum(law_j.pi * (np.log(law_j.pi) - np.log(law_k.pi))))
    cond_rows = np.sum(law_j.trans * (np.log(law_j.trans) - np.log(law_k.trans)), axis=1)
    cond = float(np.sum(law_j.pi * cond_rows))
    return KlCheck(marg + (n - d) * cond, bound, delta)


# ---------------------------------------------------------------------------
# candidate-budget constants and mass floors
# ---------------------------------------------------------------------------

def ell_xi_star(kappa: float, alphabet: Alphabet) -> tuple[float, int]:
    """Forward-stepwise budget implied by the separation constant.

    ``xi* = kappa / (4 sup(A) diam(A))`` and the budget is
    ``floor(log2 |A| / (8 xi*^2))``.
    """
    if kappa <= 0:
        raise ValueError("no relevant lags or degenerate model (kappa <= 0)")
    xi = kappa / (4.0 * alphabet.sup_norm * alphabet.diameter)
    ell = math.floor(math.log2(alphabet.size) / (8.0 * xi * xi))
    return xi, ell


def min_pair_mass(law: ExactLaw, base) -> float:
    """Worst-case compatible-pair stationary mass over the relevant lags.

    For each relevant lag and ordered symbol pair, the best compatible
    context pair is the one whose smaller marginal mass is largest; the
    returned value is the minimum of that over lags and symbol pairs.
    """
    base = tuple(sorted(base))
    relevant = [j for j in law.diag.relevant if j in base]
    if not relevant:
        return 0.0
    marg = law.marginal(base)
    K = law.model.alphabet.size
    out = math.inf
    for j in relevant:
        axis = base.index(j)
        moved = np.moveaxis(marg, axis, -1).reshape(-1, K)
        for b in range(K):
            for c in range(b + 1, K):
                best = float(np.minimum(moved[:, b], moved[:, c]).max())
                out = min(out, best)
    return float(out)


# ---------------------------------------------------------------------------
# aggregate report
# ---------------------------------------------------------------------------

@dataclass
class OracleReport:
    structure: StructureReport
    weak_dependence: WeakDependenceReport
    pair_mass: dict            # str(lag list) -> P_S value
    xi_star: float | None
    ell_star: int | None
    kl_checks: list
    stationary_residual: float

    def to_dict(self) -> dict:
        return {
            "stationary_residual": self.stationary_residual,
            "structure": self.structure.to_dict(),
            "weak_dependence": self.weak_dependence.to_dict(),
            "pair_mass": self.pair_mass,
            "xi_star": self.xi_star,
            "ell_star": self.ell_star,
            "kl_checks": [
                {"exact": c.exact, "bound": c.bound, "delta": c.delta,
                 "holds": c.holds}
                for c in self.kl_checks
            ],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def oracle_report(
    model: MtdModel,
    budget: int = STATE_BUDGET,
    kl_grid: bool = True,
) -> OracleReport:
    """Full oracle battery for one model."""
    law = exact_law(model, budget)
    structure = verify_structure(law)
    weak = verify_weak_dependence(law, gamma2=model.alphabet.size == 2)
    relevant = law.diag.relevant
    mass = {}
    for name, base in (("relevant", relevant), ("full", LagSet.full(model.order))):
        if len(base):
            mass[str(list(base.lags))] = min_pair_mass(law, base.lags)
        _ = name
    xi = ell = None
    if structure.kappa > 0:
        xi, ell = ell_xi_star(structure.kappa, model.alphabet)
    kls = []
    if kl_grid:
        for lam, gap, dd, nn in itertools.product(
            (0.3, 0.6), (0.1, 0.3), (2, 4), (20, 60)
        ):
            kls.append(kl_bound_check(lam, (0.5, 0.5 + gap), dd, nn))
    return OracleReport(
        structure=structure,
        weak_dependence=weak,
        pair_mass=mass,
        xi_star=xi,
        ell_star=ell,
        kl_checks=kls,
        stationary_residual=law.residual,
    )
