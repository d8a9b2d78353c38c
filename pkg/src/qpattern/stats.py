"""Rank statistics with exact small-sample p-values.

Exact p-values are returned as ``fractions.Fraction`` alongside the float.
Ranks are averaged over ties and doubled internally so all arithmetic on
rank sums stays in integers.
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from typing import NamedTuple, Sequence

from scipy import stats as _sps

from .errors import InvalidArgument, UndefinedCorrelation

SPEARMAN_EXACT_MAX_N = 12
MWU_EXACT_MAX_NM = 400


class SpearmanResult(NamedTuple):
    rho: float
    p: float
    exact_p: Fraction | None


class MannWhitneyResult(NamedTuple):
    U: float
    p: float
    exact_p: Fraction | None


def doubled_ranks(values: Sequence[float]) -> list[int]:
    """Twice the average rank (1-based) of every value."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    out = [0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        for k in range(i, j + 1):
            out[order[k]] = i + j + 2  # (i+1 + j+1) / 2, doubled
        i = j + 1
    return out


def _permutation_sum_counts(a: Sequence[int], b: Sequence[int]) -> Counter:
    """Distribution of sum_i a[i]*b[pi(i)] over all permutations pi."""
    n = len(a)
    layer = {0: Counter({0: 1})}
    for i in range(n):
        nxt: dict[int, Counter] = {}
        for mask, sums in layer.items():
            for j in range(n):
                if mask & (1 << j):
                    continue
                m2 = mask | (1 << j)
                target = nxt.setdefault(m2, Counter())
                add = a[i] * b[j]
                for s, c in sums.items():
                    target[s + add] += c
        layer = nxt
    return layer[(1 << n) - 1]


def spearman(xs: Sequence[float], ys: Sequence[float]) -> SpearmanResult:
    """Spearman rank correlation with a two-sided p-value."""
    n = len(xs)
    if n != len(ys):
        raise InvalidArgument("spearman needs equally long samples")
    if n < 4:
        raise InvalidArgument("spearman needs at least 4 pairs")
    a, b = doubled_ranks(xs), doubled_ranks(ys)
    sa, sb = sum(a), sum(b)
    # centred, scaled by n to stay integral
    cov = n * sum(p * q for p, q in zip(a, b)) - sa * sb
    va = n * sum(p * p for p in a) - sa * sa
    vb = n * sum(q * q for q in b) - sb * sb
    if va == 0 or vb == 0:
        raise UndefinedCorrelation("spearman correlation of a constant sample is undefined")
    rho = cov / math.sqrt(va * vb)
    rho = max(-1.0, min(1.0, rho))
    if n <= SPEARMAN_EXACT_MAX_N:
        counts = _permutation_sum_counts(a, b)
        hits = sum(c for s, c in counts.items() if abs(n * s - sa * sb) >= abs(cov))
        exact = Fraction(hits, math.factorial(n))
        return SpearmanResult(rho, float(exact), exact)
    if abs(rho) >= 1.0:
        return SpearmanResult(rho, 0.0, None)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return SpearmanResult(rho, float(2.0 * _sps.t.sf(abs(t), n - 2)), None)


def _rank_sum_counts(ranks: Sequence[int], k: int) -> Counter:
    """Distribution of the sum over all k-subsets of ``ranks``."""
    table = [Counter() for _ in range(k + 1)]
    table[0][0] = 1
    for r in ranks:
        for size in range(min(k, len(ranks)), 0, -1):
            prev = table[size - 1]
            if not prev:
                continue
            cur = table[size]
            for s, c in prev.items():
                cur[s + r] += c
    return table[k]


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> MannWhitneyResult:
    """U statistic of ``a`` and the one-sided p-value for ``a`` tending lower than ``b``."""
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        raise InvalidArgument("mann_whitney_u needs two nonempty samples")
    ranks = doubled_ranks(list(a) + list(b))
    r_a2 = sum(ranks[:n])
    u2 = r_a2 - n * (n + 1)  # doubled U
    U = u2 / 2
    if n * m <= MWU_EXACT_MAX_NM:
        counts = _rank_sum_counts(ranks, n)
        hits = sum(c for s, c in counts.items() if s <= r_a2)
        exact = Fraction(hits, math.comb(n + m, n))
        return MannWhitneyResult(U, float(exact), exact)
    N = n + m
    ties = Counter(ranks)
    tie_term = sum(t ** 3 - t for t in ties.values())
    var = n * m / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return MannWhitneyResult(U, 1.0, None)
    z = (U - n * m / 2.0 + 0.5) / math.sqrt(var)
    return MannWhitneyResult(U, float(_sps.norm.cdf(z)), None)
