"""Per-receiver backward decoding of a protocol transcript.

A receiver sees only its own received scalars, plus global CSI, the precoders
and the combination coefficients, which are assumed globally known. The symbol
pool's ground truth is consulted only to verify each value after it is recovered.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .protocol_engine import GenerationRecord, SlotRecord, Transcript
from .symbol_space import RANK_TOL, SymbolId, normalized_min_singular

DEFAULT_TOL = 1e-6
ZERO_GAIN = 1e-12


class DecodeFailure(RuntimeError):
    pass


class DegenerateRealization(RuntimeError):
    """A probability-zero channel/precoder draw made a system singular."""


@dataclass
class ReceiverState:
    rx: int
    tolerance: float = DEFAULT_TOL
    known_values: dict[SymbolId, complex] = field(default_factory=dict)
    max_residual: float = 0.0
    min_singular: float = float("inf")
    recovered: Counter = field(default_factory=Counter)

    def knows(self, sid: SymbolId) -> bool:
        return sid in self.known_values

    def get(self, sid: SymbolId) -> complex:
        try:
            return self.known_values[sid]
        except KeyError:
            raise DecodeFailure(f"Rx{self.rx} needs {sid} before it is decoded") from None


@dataclass
class DecodeReport:
    success: bool
    status: str
    max_relative_residual: float
    min_singular: float
    per_order: dict[str, int]
    private_recovered: int
    private_total: int
    total_slots: int
    measured_dof: Fraction
    expected_dof: Fraction
    violations: list[str] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {
            "success": self.success,
            "status": self.status,
            "max_relative_residual": self.max_relative_residual,
            "min_singular": self.min_singular,
            "per_order": dict(sorted(self.per_order.items())),
            "private_recovered": self.private_recovered,
            "private_total": self.private_total,
            "total_slots": self.total_slots,
            "measured_dof": {"num": self.measured_dof.numerator, "den": self.measured_dof.denominator},
            "expected_dof": {"num": self.expected_dof.numerator, "den": self.expected_dof.denominator},
            "violations": list(self.violations),
        }


def _order_key(sid: SymbolId) -> str:
    if sid.kind == "private":
        return "private"
    if sid.kind == "order":
        return f"order-{sid.order}"
    if sid.kind == "order_1m":
        return f"order-(1,{sid.order})"
    return f"overheard-{sid.order}"


def _learn(state: ReceiverState, tr: Transcript, sid: SymbolId, value: complex) -> None:
    truth = tr.pool.value(sid)
    residual = abs(value - truth) / (1.0 + abs(truth))
    state.max_residual = max(state.max_residual, residual)
    if residual >= state.tolerance:
        raise DecodeFailure(f"Rx{state.rx} recovered {sid} with residual {residual:.3g}")
    if sid not in state.known_values:
        state.recovered[_order_key(sid)] += 1
    state.known_values[sid] = complex(value)


def _solve(state: ReceiverState, a: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    sv = normalized_min_singular(a)
    state.min_singular = min(state.min_singular, sv)
    if sv <= RANK_TOL:
        raise DegenerateRealization(f"Rx{state.rx}: singular system for {what} (sigma={sv:.3g})")
    return np.linalg.solve(a, b)


def _row(tr: Transcript, rx: int, tx: int, t: int, w: np.ndarray) -> np.ndarray:
    return np.conj(tr.channels.h(rx, tx, t)) @ w


def _learn_overheard(state: ReceiverState, tr: Transcript) -> None:
    """In a phase m-I slot outside S_m, the received scalar is the overheard symbol itself."""
    for rec in tr.slots:
        if rec.phase.endswith("-I") and state.rx not in rec.subset:
            (k,) = rec.active
            _learn(state, tr, rec.overheard[(state.rx, k)], rec.received[state.rx])


def _decode_m_I_slot(state: ReceiverState, tr: Transcript, rec: SlotRecord) -> None:
    (k,) = rec.active
    pre, payload = rec.active[k]
    t, w = rec.t, pre.matrix
    rows = [_row(tr, state.rx, k, t, w)]
    rhs = [rec.received[state.rx]]
    for j in range(1, tr.k + 1):
        if j in rec.subset:
            continue
        rows.append(_row(tr, j, k, t, w))
        rhs.append(state.get(rec.overheard[(j, k)]))
    a = np.array(rows)
    if a.shape[0] == 1 and abs(a[0, 0]) < ZERO_GAIN:
        raise DegenerateRealization(f"Rx{state.rx}: zero effective gain in slot {t}")
    u = _solve(state, a, np.array(rhs), f"slot {t}")
    for sid, value in zip(payload, u):
        _learn(state, tr, sid, value)


def _solve_group(state: ReceiverState, tr: Transcript, gen: GenerationRecord) -> None:
    """Recover all constituents of one (k, S_{m+1}) group known-or-desired at this receiver."""
    lc = gen.lc
    if all(state.knows(c) for c in lc.constituents) and state.knows(gen.one_m):
        return
    rhs = [state.get(h) for h in gen.higher]
    if gen.origin_tx == state.rx:
        a = lc.matrix
        rhs.append(state.get(gen.one_m))
    else:
        own = next(i for i, c in enumerate(lc.constituents) if c.known_set == (state.rx,))
        unit = np.zeros(lc.m, dtype=complex)
        unit[own] = 1.0
        a = np.vstack([lc.matrix[:-1], unit])
        rhs.append(state.get(lc.constituents[own]))
    values = _solve(state, a, np.array(rhs), f"group Tx{gen.origin_tx} {gen.s_set}")
    for sid, value in zip(lc.constituents, values):
        _learn(state, tr, sid, value)
    if gen.origin_tx != state.rx:
        # interferer's order-(1,m) symbol is now computable
        _learn(state, tr, gen.one_m, complex(lc.matrix[-1] @ values))


def _decode_one_m_slots(state: ReceiverState, tr: Transcript, m: int, groups) -> None:
    """Slots of phase (m+1)-II: cancel the other m transmitters, keep own order-(1,m) symbol."""
    for rec in tr.slots_in(f"{m + 1}-II"):
        if state.rx not in rec.subset:
            continue
        y = rec.received[state.rx]
        own_gain = None
        for k, (pre, (sid,)) in rec.active.items():
            g = complex(_row(tr, state.rx, k, rec.t, pre.matrix)[0])
            if k == state.rx:
                own_gain, own_sid = g, sid
                continue
            _solve_group(state, tr, groups[(m, rec.round, k, rec.subset)])
            y -= g * state.get(sid)
        if own_gain is None or abs(own_gain) < ZERO_GAIN:
            raise DegenerateRealization(f"Rx{state.rx}: zero own gain in slot {rec.t}")
        _learn(state, tr, own_sid, y / own_gain)


def _groups(tr: Transcript) -> dict[tuple[int, int, int, tuple[int, ...]], GenerationRecord]:
    return {(g.order, g.round, g.origin_tx, g.s_set): g for g in tr.generations}


def decode_order_k_phase(state: ReceiverState, tr: Transcript) -> ReceiverState:
    """Order-K symbols are read directly; then the order-(1,K-1) slots are resolved."""
    k = tr.k
    _learn_overheard(state, tr)
    for rec in tr.slots_in(f"{k}-I"):
        if state.rx in rec.subset:
            _decode_m_I_slot(state, tr, rec)
    if k >= 3:
        _decode_one_m_slots(state, tr, k - 1, _groups(tr))
    return state


def peel_order_m(state: ReceiverState, tr: Transcript, m: int) -> ReceiverState:
    """Recover order-m symbols from order-(m+1) and (1,m) knowledge, then the (1,m-1) slots."""
    groups = _groups(tr)
    for gen in tr.generations:
        if gen.order == m and state.rx in gen.s_set:
            _solve_group(state, tr, gen)
    for rec in tr.slots_in(f"{m}-I"):
        if state.rx in rec.subset:
            _decode_m_I_slot(state, tr, rec)
    if m >= 3:
        _decode_one_m_slots(state, tr, m - 1, groups)
    return state


def solve_phase1(state: ReceiverState, tr: Transcript) -> ReceiverState:
    """Strip interference, add side information, solve n x n for the private vector."""
    r = state.rx
    for rec in tr.slots_in("1"):
        if r not in rec.subset:
            continue
        pre, payload = rec.active[r]
        y = rec.received[r]
        rows = [_row(tr, r, r, rec.t, pre.matrix)]
        for j in rec.subset:
            if j != r:
                y -= state.get(rec.overheard[(r, j)])
        rhs = [y]
        for j in rec.subset:
            if j == r:
                continue
            rows.append(_row(tr, j, r, rec.t, pre.matrix))
            rhs.append(state.get(rec.overheard[(j, r)]))
        x = _solve(state, np.array(rows), np.array(rhs), f"phase-1 slot {rec.t}")
        for sid, value in zip(payload, x):
            _learn(state, tr, sid, value)
    return state


def decode_receiver(tr: Transcript, rx: int, tolerance: float = DEFAULT_TOL) -> ReceiverState:
    state = ReceiverState(rx, tolerance)
    decode_order_k_phase(state, tr)
    for m in range(tr.k - 1, 1, -1):
        peel_order_m(state, tr, m)
    solve_phase1(state, tr)
    return state


def backward_decode(tr: Transcript, tolerance: float = DEFAULT_TOL) -> DecodeReport:
    expected = tr.plan.ratio
    private_ids = tr.private_ids
    measured = Fraction(len(private_ids), tr.num_slots)
    per_order: Counter = Counter()
    violations: list[str] = []
    residual, sigma, recovered = 0.0, float("inf"), 0
    status = "ok"
    for rx in range(1, tr.k + 1):
        state = ReceiverState(rx, tolerance)
        try:
            state = decode_receiver(tr, rx, tolerance)
        except DegenerateRealization as exc:
            status = "degenerate"
            violations.append(str(exc))
        except DecodeFailure as exc:
            status = "failed"
            violations.append(str(exc))
        residual = max(residual, state.max_residual)
        sigma = min(sigma, state.min_singular)
        per_order.update(state.recovered)
        own = [sid for sid in private_ids if sid.origin_tx == rx]
        missing = [sid for sid in own if sid not in state.known_values]
        recovered += len(own) - len(missing)
        if missing and status == "ok":
            status = "failed"
            violations.append(f"Rx{rx} is missing {len(missing)} private symbols")
    if measured != expected:
        status = "failed" if status == "ok" else status
        violations.append(f"measured DoF {measured} differs from plan ratio {expected}")
    if tr.csit_violations():
        status = "failed" if status == "ok" else status
        violations.append(f"{tr.csit_violations()} delayed-CSIT violations")
    return DecodeReport(
        success=status == "ok",
        status=status,
        max_relative_residual=residual,
        min_singular=sigma,
        per_order=dict(per_order),
        private_recovered=recovered,
        private_total=len(private_ids),
        total_slots=tr.num_slots,
        measured_dof=measured,
        expected_dof=expected,
        violations=violations,
    )
