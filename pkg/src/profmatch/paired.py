"""Paired outcome tests and Rosenbaum sensitivity bounds for matched pairs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import DegenerateError, DomainError
from .numerics import normal_cdf

GAMMA_MAX = 100.0
GAMMA_TOL = 0.005
EXACT_MAX_N = 15


@dataclass(frozen=True)
class PairedBinary:
    """Pair counts by (treated outcome, control outcome)."""

    n11: int
    n10: int
    n01: int
    n00: int

    def __post_init__(self):
        if min(self.n11, self.n10, self.n01, self.n00) < 0:
            raise DomainError("pair counts must be nonnegative")

    @property
    def discordant(self) -> int:
        return self.n10 + self.n01

    @classmethod
    def from_outcomes(cls, y_treated, y_control) -> "PairedBinary":
        a = np.asarray(y_treated).astype(int)
        b = np.asarray(y_control).astype(int)
        if a.shape != b.shape:
            raise DomainError("paired outcome vectors differ in length")
        if np.any((a != 0) & (a != 1)) or np.any((b != 0) & (b != 1)):
            raise DomainError("binary outcomes must be 0/1")
        return cls(int(np.sum(a & b)), int(np.sum(a & (1 - b))), int(np.sum((1 - a) & b)),
                   int(np.sum((1 - a) & (1 - b))))


@dataclass
class McNemarResult:
    statistic: float
    p_two_sided: float
    p_one_sided: float  # upper tail in the direction of the excess
    mode: str
    degenerate: bool = False


def _binom_upper(t: int, n: int, p: float) -> float:
    """P(Bin(n, p) >= t)."""
    if t <= 0:
        return 1.0
    return float(stats.binom.sf(t - 1, n, p))


def mcnemar_test(pairs: PairedBinary, mode: str = "exact") -> McNemarResult:
    D = pairs.discordant
    if mode not in ("exact", "chi_square"):
        raise DomainError("mode must be exact or chi_square")
    if D == 0:
        return McNemarResult(0.0, 1.0, 1.0, mode, degenerate=True)
    hi = max(pairs.n10, pairs.n01)
    one = _binom_upper(hi, D, 0.5)
    if mode == "exact":
        return McNemarResult(float(pairs.n10), min(1.0, 2.0 * one), one, mode)
    stat = (pairs.n10 - pairs.n01) ** 2 / D
    return McNemarResult(float(stat), float(stats.chi2.sf(stat, 1)), one, mode)


@dataclass
class WilcoxonResult:
    t_plus: float
    p_two_sided: float
    p_upper: float  # P(T+ >= observed)
    p_lower: float  # P(T+ <= observed)
    n: int
    mode: str


def signed_ranks(differences) -> tuple[np.ndarray, np.ndarray]:
    """Mid-ranks of |d| and signs, zero differences dropped."""
    d = np.asarray(differences, dtype=float)
    if not np.all(np.isfinite(d)):
        raise DomainError("differences must be finite")
    d = d[d != 0]
    if d.size == 0:
        raise DegenerateError("all differences are zero")
    return stats.rankdata(np.abs(d)), np.sign(d)


def exact_signed_rank_distribution(ranks) -> tuple[np.ndarray, np.ndarray]:
    """Null distribution of T+ over all equally likely sign patterns.

    Mid-ranks are multiples of 1/2, so doubled ranks are integers and a
    counting recursion over them is exact.
    """
    r2 = np.rint(2.0 * np.asarray(ranks, dtype=float)).astype(int)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    support = np.arange(total + 1) / 2.0
    probs = counts / counts.sum()
    keep = counts > 0
    return support[keep], probs[keep]


def wilcoxon_signed_rank(differences, mode: str = "exact", continuity: bool = True) -> WilcoxonResult:
    """Signed-rank test; ``exact`` is meant for n <= 15 but works beyond."""
    if mode not in ("exact", "normal", "auto"):
        raise DomainError("mode must be exact, normal or auto")
    ranks, sign = signed_ranks(differences)
    n = ranks.size
    if mode == "auto":
        mode = "exact" if n <= EXACT_MAX_N else "normal"
    t_plus = float(ranks[sign > 0].sum())
    if mode == "exact":
        support, probs = exact_signed_rank_distribution(ranks)
        eps = 1e-9
        upper = float(probs[support >= t_plus - eps].sum())
        lower = float(probs[support <= t_plus + eps].sum())
    else:
        mean = n * (n + 1) / 4.0
        var = float(np.sum(ranks * ranks)) / 4.0  # equals the tie-corrected variance
        cc = 0.5 if continuity else 0.0
        upper = float(1.0 - normal_cdf((t_plus - mean - cc) / math.sqrt(var)))
        lower = float(normal_cdf((t_plus - mean + cc) / math.sqrt(var)))
    return WilcoxonResult(t_plus, min(1.0, 2.0 * min(upper, lower)), upper, lower, n, mode)


@dataclass
class GammaResult:
    gamma_star: float | None
    alpha: float
    p_at_gamma1: float
    search_tolerance: float = GAMMA_TOL
    statistic: float = float("nan")
    capped: bool = False  # still significant at the search ceiling
    degenerate: bool = False


def _gamma_search(pvalue, alpha: float, statistic: float) -> GammaResult:
    p1 = pvalue(1.0)
    if p1 > alpha:
        return GammaResult(None, alpha, p1, GAMMA_TOL, statistic)
    if pvalue(GAMMA_MAX) <= alpha:
        return GammaResult(GAMMA_MAX, alpha, p1, GAMMA_TOL, statistic, capped=True)
    lo, hi = 1.0, GAMMA_MAX
    # keep p(lo) <= alpha < p(hi)
    while hi - lo > GAMMA_TOL:
        mid = 0.5 * (lo + hi)
        if pvalue(mid) <= alpha:
            lo = mid
        else:
            hi = mid
    return GammaResult(lo, alpha, p1, GAMMA_TOL, statistic)


def binary_gamma_pvalue(pairs: PairedBinary, gamma: float) -> float:
    """Upper-bound one-sided p-value for the excess direction of discordance."""
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    D = pairs.discordant
    T = max(pairs.n10, pairs.n01)
    return _binom_upper(T, D, gamma / (1.0 + gamma))


def rosenbaum_gamma_binary(pairs: PairedBinary, alpha: float = 0.05) -> GammaResult:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if pairs.discordant == 0:
        return GammaResult(None, alpha, 1.0, GAMMA_TOL, degenerate=True)
    T = max(pairs.n10, pairs.n01)
    return _gamma_search(lambda g: binary_gamma_pvalue(pairs, g), alpha, float(T))


def rank_gamma_pvalue(differences, gamma: float) -> float:
    """Normal-approximation upper bound for the signed-rank statistic."""
    if gamma < 1:
        raise DomainError("gamma must be >= 1")
    ranks, sign = signed_ranks(differences)
    T = _excess_statistic(ranks, sign)
    p = gamma / (1.0 + gamma)
    mean = p * ranks.sum()
    var = p * (1.0 - p) * float(np.sum(ranks * ranks))
    return float(1.0 - normal_cdf((T - mean) / math.sqrt(var)))


def _excess_statistic(ranks, sign) -> float:
    t_plus = float(ranks[sign > 0].sum())
    return max(t_plus, float(ranks.sum()) - t_plus)


def rosenbaum_gamma_rank(differences, alpha: float = 0.05) -> GammaResult:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    ranks, sign = signed_ranks(differences)
    T = _excess_statistic(ranks, sign)
    return _gamma_search(lambda g: rank_gamma_pvalue(differences, g), alpha, T)
