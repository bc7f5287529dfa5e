"""Exact sum-DoF calculus for the K-user MISO interference channel with delayed local CSIT.

Every quantity here is a :class:`fractions.Fraction`; no floating point is used,
so equalities between the different computation paths are decidable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Iterator

Rational = Fraction

ASYMPTOTE = Fraction(64, 15)

COMPARATOR_SCHEMES = (
    "mat_bc",
    "two_phase_misoic",
    "torrellas",
    "abdoli_siso_k3",
    "maleki_k3",
)
_K3_ONLY = {"abdoli_siso_k3": Fraction(36, 31), "maleki_k3": Fraction(9, 8)}


class DomainError(ValueError):
    """Argument outside the range where a formula is defined."""


class UnsupportedScheme(ValueError):
    """Comparator requested for a configuration it was never reported for."""


def _check_k(k: int) -> None:
    if k < 2:
        raise DomainError(f"need at least 2 users, got k={k}")


def _check_n(k: int, n: int) -> None:
    _check_k(k)
    if not 2 <= n <= k:
        raise DomainError(f"n must lie in [2, {k}], got n={n}")


def big_o(k: int) -> Fraction:
    """DoF of delivering order-2 symbols, ``[1 - 1/(K-1) * sum (K-l)/(l^2-1)]^-1``."""
    _check_k(k)
    total = sum((Fraction(k - l, l * l - 1) for l in range(2, k)), Fraction(0))
    return 1 / (1 - total / (k - 1))


def a2_closed(k: int) -> Fraction:
    _check_k(k)
    total = sum((Fraction(k - l, (l - 1) * (l + 1)) for l in range(2, k)), Fraction(0))
    return total / (k - 1)


def dof_one_m(m: int) -> int:
    """Order-(1,m) symbols from the m+1 transmitters of a set go out in one slot."""
    return m + 1


def dof_m_recursive(k: int, m: int) -> Fraction:
    """DoF of delivering order-m symbols, by backward recursion from DoF_K = 1."""
    _check_k(k)
    if not 2 <= m <= k:
        raise DomainError(f"m must lie in [2, {k}], got m={m}")
    return _dof_table(k)[m]


@lru_cache(maxsize=256)
def _dof_table(k: int) -> dict[int, Fraction]:
    # cached; callers must not mutate the returned dict
    table = {k: Fraction(1)}
    for m in range(k - 1, 1, -1):
        denom = m + Fraction(k - m, m + 1) + Fraction((m - 1) * (k - m)) / table[m + 1]
        table[m] = m * (k - m + 1) / denom
    return table


def _b(k: int, i: int) -> Fraction:
    return Fraction((k - i) * (i - 1), i * (k - i + 1))


def _c(k: int, l: int) -> Fraction:
    return Fraction(k - l, (k - l + 1) * (l + 1))


def a_m_forward(k: int, m: int) -> Fraction:
    """``A_m = B_m A_{m+1} + C_m`` unrolled from ``A_K = 0`` (no closed products)."""
    _check_k(k)
    if not 2 <= m <= k:
        raise DomainError(f"m must lie in [2, {k}], got m={m}")
    a = Fraction(0)
    for i in range(k - 1, m - 1, -1):
        a = _b(k, i) * a + _c(k, i)
    return a


def appendix_b_path(k: int, m: int) -> Fraction:
    """``A_m = 1 - 1/DoF_m`` from the telescoped products of the B/C recursion.

    Uses the closed products ``prod_{i=m}^{K-1} B_i = (m-1)/((K-1)(K-m+1))`` and
    ``C_l prod_{i=m}^{l-1} B_i = (m-1)/(K-m+1) * (K-l)/((l+1)(l-1))`` with ``A_K = 0``.
    """
    _check_k(k)
    if not 2 <= m <= k - 1:
        raise DomainError(f"m must lie in [2, {k - 1}], got m={m}")
    a_k = Fraction(0)
    head = a_k * Fraction(m - 1, (k - 1) * (k - m + 1))
    scale = Fraction(m - 1, k - m + 1)
    return head + scale * _closed_tails(k)[m]


@lru_cache(maxsize=256)
def _closed_tails(k: int) -> dict[int, Fraction]:
    """``sum_{l=m}^{K-1} (K-l)/((l+1)(l-1))`` for every m, built as suffix sums."""
    tails, acc = {}, Fraction(0)
    for l in range(k - 1, 1, -1):
        acc += Fraction(k - l, (l + 1) * (l - 1))
        tails[l] = acc
    return tails


def phase1_objective(n: int, dof2: Fraction) -> Fraction:
    """Sum DoF when n transmitters are active in phase 1: ``n^2 / (1 + n(n-1)/DoF_2)``."""
    return Fraction(n * n) / (1 + Fraction(n * (n - 1)) / dof2)


@dataclass(frozen=True)
class DofBreakdown:
    k: int
    big_o: Fraction
    o1: int
    o2: int
    n_star: int
    ds: Fraction
    dof_m: dict[int, Fraction]
    min_antennas: int

    def candidates(self) -> list[int]:
        return sorted({_clamp(self.o1, self.k), _clamp(self.o2, self.k)})


def _clamp(n: int, k: int) -> int:
    return min(max(n, 2), k)


def _breakdown(k: int, o: Fraction, dof_m: dict[int, Fraction] | None) -> DofBreakdown:
    twice = 2 * o
    o1 = math.floor(twice)
    o2 = math.ceil(twice)
    best_n, best = None, None
    for n in sorted({_clamp(o1, k), _clamp(o2, k)}):
        value = phase1_objective(n, o)
        # strict '>' keeps the smaller n on ties
        if best is None or value > best:
            best_n, best = n, value
    min_antennas = k if k == 2 else max(best_n, k - 1)
    return DofBreakdown(
        k=k,
        big_o=o,
        o1=o1,
        o2=o2,
        n_star=best_n,
        ds=best,
        dof_m=dof_m if dof_m is not None else {},
        min_antennas=min_antennas,
    )


def sum_dof(k: int) -> DofBreakdown:
    """Achievable sum DoF with the optimal number of phase-1 transmitters."""
    _check_k(k)
    table = _dof_table(k)
    return _breakdown(k, big_o(k), dict(sorted(table.items())))


def sum_dof_at(k: int, n: int) -> Fraction:
    _check_n(k, n)
    return phase1_objective(n, big_o(k))


@dataclass(frozen=True)
class CountRow:
    m: int
    t_m: int
    n_m: int
    n_m_plus_1_generated: int
    n_1m_generated: int


@dataclass(frozen=True)
class CountTable:
    k: int
    n: int
    n1: int
    t1: int
    n2: int
    rows: dict[int, CountRow]


def counts(k: int, n: int) -> CountTable:
    """Per-round symbol and slot counts of every phase."""
    _check_n(k, n)
    c = math.comb
    rows = {}
    for m in range(2, k + 1):
        t_m = m * c(k, m)
        rows[m] = CountRow(
            m=m,
            t_m=t_m,
            n_m=(k - m + 1) * t_m,
            n_m_plus_1_generated=(m - 1) * (m + 1) * c(k, m + 1),
            n_1m_generated=(m + 1) * c(k, m + 1),
        )
    return CountTable(
        k=k,
        n=n,
        n1=n * n * c(k, n),
        t1=c(k, n),
        n2=n * (n - 1) * c(k, n),
        rows=rows,
    )


@dataclass(frozen=True)
class ReplicationPlan:
    """Integer round counts making every phase's supply meet its demand.

    ``rounds[1]`` counts phase-1 repetitions (each one sweeps all C(K,n) subsets);
    ``rounds[m]`` counts phase m-I repetitions (each one sweeps all (k, S_m)).
    ``slots_m_II[m]`` is the number of slots carrying order-(1,m) symbols.
    """

    k: int
    n: int
    rounds: dict[int, int]
    slots_phase1: int
    slots_m_I: dict[int, int]
    slots_m_II: dict[int, int]
    total_symbols: int
    total_slots: int
    per_pair_order2: int = field(repr=False, default=0)

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.total_symbols, self.total_slots)

    def slot_sequence(self) -> list[tuple[str, int]]:
        """Phase labels with slot counts in execution order."""
        seq = [("1", self.slots_phase1)]
        for m in range(2, self.k + 1):
            seq.append((f"{m}-I", self.slots_m_I[m]))
            if m - 1 in self.slots_m_II:
                seq.append((f"{m}-II", self.slots_m_II[m - 1]))
        return seq


def _supply_demand(k: int, n: int) -> list[tuple[int, int]]:
    """(supply per upstream round, demand per downstream round) for each order m = 2..K.

    Counted per (origin k, desired set S_m): phase 1 yields C(K-2, n-2) order-2
    symbols per round, phase m-I yields m-1 order-(m+1) symbols per round, and
    phase m-I consumes K-m+1 order-m symbols per round.
    """
    links = [(math.comb(k - 2, n - 2), k - 1)]
    for m in range(2, k):
        links.append((m - 1, k - m))
    return links


def balanced_rounds(k: int, n: int) -> dict[int, int]:
    """Smallest positive integer rounds with supply == demand at every order."""
    _check_n(k, n)
    ratios = [Fraction(1)]
    for supply, demand in _supply_demand(k, n):
        ratios.append(ratios[-1] * supply / demand)
    lcm = reduce(math.lcm, (r.denominator for r in ratios), 1)
    ints = [int(r * lcm) for r in ratios]
    g = reduce(math.gcd, ints)
    return {phase: v // g for phase, v in enumerate(ints, start=1)}


def replication_plan(k: int, n: int) -> ReplicationPlan:
    table = counts(k, n)
    rounds = balanced_rounds(k, n)
    slots_phase1 = rounds[1] * table.t1
    slots_m_I = {m: rounds[m] * table.rows[m].t_m for m in range(2, k + 1)}
    slots_m_II = {}
    for m in range(2, k):
        produced = rounds[m] * table.rows[m].n_1m_generated
        slots_m_II[m] = produced // dof_one_m(m)
    total_symbols = rounds[1] * table.n1
    total_slots = slots_phase1 + sum(slots_m_I.values()) + sum(slots_m_II.values())
    return ReplicationPlan(
        k=k,
        n=n,
        rounds=rounds,
        slots_phase1=slots_phase1,
        slots_m_I=slots_m_I,
        slots_m_II=slots_m_II,
        total_symbols=total_symbols,
        total_slots=total_slots,
        per_pair_order2=math.comb(k - 2, n - 2),
    )


def comparator(k: int, scheme: str) -> Fraction:
    """Sum DoF of previously reported delayed-CSIT schemes."""
    _check_k(k)
    if scheme == "mat_bc":
        return k / sum((Fraction(1, i) for i in range(1, k + 1)), Fraction(0))
    if scheme == "two_phase_misoic":
        return Fraction(k * k, k * k - k + 1)
    if scheme == "torrellas":
        return Fraction(2 * k, k + 1)
    if scheme in _K3_ONLY:
        if k != 3:
            raise UnsupportedScheme(f"{scheme} is only reported for k=3")
        return _K3_ONLY[scheme]
    raise UnsupportedScheme(f"unknown scheme {scheme!r}")


def comparator_table(k: int) -> dict[str, Fraction]:
    out = {}
    for scheme in COMPARATOR_SCHEMES:
        try:
            out[scheme] = comparator(k, scheme)
        except UnsupportedScheme:
            continue
    return out


def _harmonic_numbers(upto: int) -> Iterator[tuple[int, Fraction]]:
    h = Fraction(0)
    for i in range(1, upto + 1):
        h += Fraction(1, i)
        yield i, h


def sweep_big_o(k_max: int) -> Iterator[tuple[int, Fraction]]:
    """``O(K)`` for K = 2..k_max in one pass, via harmonic numbers.

    Partial fractions give ``sum_{l=2}^{K-1} (K-l)/((l-1)(l+1))
    = (K-1)/2 * H_{K-2} - (K+1)/2 * (H_K - 3/2)``.
    """
    if k_max < 2:
        return
    harmonic = {0: Fraction(0)}
    harmonic.update(_harmonic_numbers(k_max))
    for k in range(2, k_max + 1):
        s = Fraction(k - 1, 2) * harmonic[k - 2] - Fraction(k + 1, 2) * (harmonic[k] - Fraction(3, 2))
        yield k, 1 / (1 - s / (k - 1))


def fast_sum_dof(k: int, o: Fraction) -> DofBreakdown:
    """Breakdown from a precomputed ``O(K)``; skips the per-order DoF table."""
    return _breakdown(k, o, None)


def asymptote_check(k_max: int) -> list[tuple[int, Fraction, Fraction]]:
    """``(K, d_s(K), 64/15 - d_s(K))`` for K = 2..k_max."""
    if k_max < 2:
        raise DomainError(f"k_max must be at least 2, got {k_max}")
    rows = []
    for k, o in sweep_big_o(k_max):
        ds = fast_sum_dof(k, o).ds
        rows.append((k, ds, ASYMPTOTE - ds))
    return rows
