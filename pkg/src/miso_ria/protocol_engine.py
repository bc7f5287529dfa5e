"""Slot-by-slot execution of the K-phase retrospective interference alignment protocol.

Phase labels follow the usual numbering: ``"1"`` sends private symbols,
``"m-I"`` multicasts order-m symbols from one transmitter to the m users of
``S_m``, and ``"m-II"`` sends the order-(1,m-1) symbols of one set ``S_m``
simultaneously from all of its m transmitters.

Transmitters only ever learn channel values through their :class:`CsitView`;
every value they put on the air is recomputed from their own message, their
own precoders and delayed local CSI, then checked against the pool's ground truth.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .channel_model import ChannelTensor, CsitView, Precoder, make_precoder
from .dof_calculus import ReplicationPlan, replication_plan
from .symbol_space import LcMatrix, SymbolId, SymbolPool

GROUND_TRUTH_TOL = 1e-9


class ConfigError(ValueError):
    pass


class ScheduleError(RuntimeError):
    """A phase found its payload queue empty or a constituent missing."""


@dataclass
class SlotRecord:
    t: int
    phase: str
    order: int
    round: int
    subset: tuple[int, ...]
    active: dict[int, tuple[Precoder, tuple[SymbolId, ...]]]
    received: dict[int, complex]
    overheard: dict[tuple[int, int], SymbolId] = field(default_factory=dict)


@dataclass
class GenerationRecord:
    order: int
    round: int
    origin_tx: int
    s_set: tuple[int, ...]
    lc: LcMatrix
    higher: tuple[SymbolId, ...]
    one_m: SymbolId


def required_antennas(k: int, n: int) -> int:
    """Phase 1 needs n antennas and phase 2-I needs K-1."""
    return max(n, k - 1, 1)


def validate_config(k: int, n: int, antennas: int) -> None:
    if k < 2:
        raise ConfigError(f"need at least 2 users, got {k}")
    if not 2 <= n <= k:
        raise ConfigError(f"n must lie in [2, {k}], got {n}")
    if antennas not in (k - 1, k):
        raise ConfigError(f"antennas must be K-1 or K (got {antennas} for K={k})")
    if n > antennas:
        raise ConfigError(f"n={n} active streams exceed {antennas} antennas")
    if required_antennas(k, n) > antennas:
        raise ConfigError(f"K={k}, n={n} needs {required_antennas(k, n)} antennas")


class Transmitter:
    """Tx-side knowledge: own message, own precoders, delayed local CSIT."""

    def __init__(self, k: int, view: CsitView) -> None:
        self.k = k
        self.view = view
        self.values: dict[SymbolId, complex] = {}
        self.sent: dict[int, tuple[np.ndarray, tuple[SymbolId, ...]]] = {}
        self.queues: dict[tuple[int, ...], deque[SymbolId]] = {}
        self.pending_1m: dict[tuple[tuple[int, ...], int], SymbolId] = {}

    def transmit(self, t: int, precoder: Precoder, payload: tuple[SymbolId, ...]) -> np.ndarray:
        u = np.array([self.values[s] for s in payload])
        self.sent[t] = (precoder.matrix, payload)
        return precoder.matrix @ u

    def reconstruct(self, rx: int, slot: int) -> complex:
        """What Rx ``rx`` heard from this transmitter in ``slot``, rebuilt from delayed CSIT."""
        h = self.view.query(rx, slot)
        w, payload = self.sent[slot]
        u = np.array([self.values[s] for s in payload])
        return complex(np.conj(h) @ w @ u)


@dataclass
class Transcript:
    k: int
    n: int
    antennas: int
    seed: int
    plan: ReplicationPlan
    pool: SymbolPool
    channels: ChannelTensor
    views: dict[int, CsitView]
    slots: list[SlotRecord] = field(default_factory=list)
    spans: dict[str, tuple[int, int]] = field(default_factory=dict)
    generations: list[GenerationRecord] = field(default_factory=list)
    ground_truth_gap: float = 0.0

    @property
    def num_slots(self) -> int:
        return len(self.slots)

    @property
    def private_ids(self) -> list[SymbolId]:
        return list(self.pool.private_values)

    def slots_in(self, phase: str) -> list[SlotRecord]:
        if phase not in self.spans:
            return []
        lo, hi = self.spans[phase]
        return self.slots[lo - 1:hi]

    def csit_violations(self) -> int:
        return sum(view.audit() for view in self.views.values())

    def phase_slot_counts(self) -> dict[str, int]:
        return {label: hi - lo + 1 for label, (lo, hi) in self.spans.items()}

    def to_json(self) -> dict[str, Any]:
        def cx(z: complex) -> list[float]:
            return [float(z.real), float(z.imag)]

        slots = []
        for rec in self.slots:
            slots.append({
                "t": rec.t,
                "phase": rec.phase,
                "round": rec.round,
                "subset": list(rec.subset),
                "active": {
                    str(tx): {
                        "precoder": [[cx(z) for z in row] for row in pre.matrix],
                        "payload": [str(s) for s in payload],
                    }
                    for tx, (pre, payload) in rec.active.items()
                },
                "received": {str(rx): cx(y) for rx, y in rec.received.items()},
                "overheard": {f"{rx},{tx}": str(s) for (rx, tx), s in rec.overheard.items()},
            })
        return {
            "k": self.k,
            "n": self.n,
            "antennas": self.antennas,
            "seed": self.seed,
            "total_slots": self.num_slots,
            "spans": {label: list(span) for label, span in self.spans.items()},
            "census": self.pool.census(),
            "slots": slots,
        }


class ProtocolEngine:
    def __init__(self, k: int, n: int, antennas: int | None = None, seed: int = 0) -> None:
        antennas = k if antennas is None else antennas
        validate_config(k, n, antennas)
        self.k, self.n, self.antennas, self.seed = k, n, antennas, seed
        self.plan = replication_plan(k, n)
        streams = np.random.SeedSequence([seed, 1]).spawn(3)
        self._rng_private, self._rng_precoder, self._rng_lc = (np.random.default_rng(s) for s in streams)
        channels = ChannelTensor(k, antennas, seed)
        views = {tx: CsitView(tx, channels) for tx in self.users}
        self.tx = {k_: Transmitter(k_, views[k_]) for k_ in self.users}
        self.transcript = Transcript(k, n, antennas, seed, self.plan, SymbolPool(), channels, views)
        # (origin, S_m, listener, round) -> overheard symbol of phase m-I
        self._overheard: dict[tuple[int, tuple[int, ...], int, int], SymbolId] = {}

    @property
    def users(self) -> range:
        return range(1, self.k + 1)

    @property
    def pool(self) -> SymbolPool:
        return self.transcript.pool

    def _begin_slot(self) -> int:
        t = self.transcript.num_slots + 1
        self.transcript.channels.generate_slot(t)
        for view in self.transcript.views.values():
            view.advance(t)
        return t

    def _between_slots(self) -> None:
        t = self.transcript.num_slots + 1
        for view in self.transcript.views.values():
            view.advance(t)

    def _check(self, sid: SymbolId, tx_value: complex) -> None:
        truth = self.pool.value(sid)
        gap = abs(tx_value - truth) / max(1.0, abs(truth))
        self.transcript.ground_truth_gap = max(self.transcript.ground_truth_gap, gap)
        if gap > GROUND_TRUTH_TOL:
            raise AssertionError(f"Tx{sid.origin_tx} value for {sid} drifted from ground truth by {gap:.3g}")

    def _record(self, rec: SlotRecord) -> None:
        self.transcript.slots.append(rec)
        lo, _ = self.transcript.spans.get(rec.phase, (rec.t, rec.t))
        self.transcript.spans[rec.phase] = (lo, rec.t)

    def _receive(self, t: int, signals: dict[int, np.ndarray], listeners) -> dict[int, complex]:
        ch = self.transcript.channels
        return {
            r: complex(sum(np.conj(ch.h(r, k_, t)) @ s for k_, s in signals.items()))
            for r in listeners
        }

    def run_phase1(self, rounds: int | None = None) -> None:
        """Every n-subset of transmitters sends n fresh symbols each, once per round."""
        rounds = self.plan.rounds[1] if rounds is None else rounds
        ch = self.transcript.channels
        for rho in range(rounds):
            for subset in itertools.combinations(self.users, self.n):
                t = self._begin_slot()
                active, signals = {}, {}
                for k_ in subset:
                    ids = tuple(self.pool.register_private(k_, self.n, self._rng_private, round=rho, slot_tag=t))
                    for sid in ids:
                        self.tx[k_].values[sid] = self.pool.private_values[sid]
                    pre = make_precoder(self.antennas, self.n, self._rng_precoder, slot=t, owner=k_)
                    active[k_] = (pre, ids)
                    signals[k_] = self.tx[k_].transmit(t, pre, ids)
                received = self._receive(t, signals, subset)
                overheard = {}
                for r in subset:
                    for j in subset:
                        if j == r:
                            continue
                        # interference from Tx j at Rx r: wanted by r (to cancel) and by j (side info)
                        sid = SymbolId(j, (j, r), (), rho, t, 0)
                        pre, ids = active[j]
                        self.pool.derive_overheard(sid, ids, ch.h(r, j, t), pre.matrix)
                        overheard[(r, j)] = sid
                        self.tx[j].queues.setdefault(sid.desired_set, deque()).append(sid)
                self._record(SlotRecord(t, "1", 1, rho, subset, active, received, overheard))

    def _payload_values(self, tx: Transmitter, payload: tuple[SymbolId, ...]) -> None:
        for sid in payload:
            if sid in tx.values:
                continue
            # order-2 symbols from phase 1: rebuild what the other receiver overheard
            if sid.kind != "order" or sid.order != 2:
                raise ScheduleError(f"Tx{tx.k} has no value for {sid}")
            listener = next(r for r in sid.desired_set if r != tx.k)
            value = tx.reconstruct(listener, sid.slot_tag)
            self._check(sid, value)
            tx.values[sid] = value

    def run_phase_m_I(self, m: int, rounds: int | None = None) -> None:
        """One transmitter per slot multicasts K-m+1 order-m symbols to the users of S_m."""
        rounds = self.plan.rounds[m] if rounds is None else rounds
        width = self.k - m + 1
        ch = self.transcript.channels
        label = f"{m}-I"
        for rho in range(rounds):
            for s_m in itertools.combinations(self.users, m):
                for k_ in s_m:
                    tx = self.tx[k_]
                    queue = tx.queues.get(s_m, deque())
                    if len(queue) < width:
                        raise ScheduleError(f"Tx{k_} holds {len(queue)} order-{m} symbols for {s_m}, needs {width}")
                    payload = tuple(queue.popleft() for _ in range(width))
                    t = self._begin_slot()
                    self._payload_values(tx, payload)
                    pre = make_precoder(self.antennas, width, self._rng_precoder, slot=t, owner=k_)
                    signal = tx.transmit(t, pre, payload)
                    received = self._receive(t, {k_: signal}, self.users)
                    overheard = {}
                    for j in self.users:
                        if j in s_m:
                            continue
                        sid = SymbolId(k_, s_m, (j,), rho, t, 0)
                        self.pool.derive_overheard(sid, payload, ch.h(j, k_, t), pre.matrix)
                        overheard[(j, k_)] = sid
                        self._overheard[(k_, s_m, j, rho)] = sid
                    self._record(SlotRecord(t, label, m, rho, s_m, {k_: (pre, payload)}, received, overheard))

    def generate_between_phases(self, m: int) -> dict[str, int]:
        """Each Tx mixes its own overheard order-m interference into order-(m+1) and (1,m) symbols."""
        if m >= self.k:
            return {"higher": 0, "one_m": 0}
        self._between_slots()
        made = {"higher": 0, "one_m": 0}
        for rho in range(self.plan.rounds[m]):
            for s_next in itertools.combinations(self.users, m + 1):
                for k_ in s_next:
                    tx = self.tx[k_]
                    constituents = []
                    for j in s_next:
                        if j == k_:
                            continue
                        key = (k_, tuple(u for u in s_next if u != j), j, rho)
                        if key not in self._overheard:
                            raise ScheduleError(f"missing overheard symbol for {key}")
                        sid = self._overheard[key]
                        value = tx.reconstruct(j, sid.slot_tag)
                        self._check(sid, value)
                        tx.values[sid] = value
                        constituents.append(sid)
                    higher, one_m, lc = self.pool.make_higher_order(
                        k_, s_next, constituents, self._rng_lc,
                        round=rho, slot_tag=self.transcript.num_slots,
                    )
                    c_vals = np.array([tx.values[s] for s in lc.constituents])
                    for i, sid in enumerate(higher):
                        tx.values[sid] = complex(lc.matrix[i] @ c_vals)
                        self._check(sid, tx.values[sid])
                        tx.queues.setdefault(s_next, deque()).append(sid)
                    tx.values[one_m] = complex(lc.matrix[-1] @ c_vals)
                    self._check(one_m, tx.values[one_m])
                    tx.pending_1m[(s_next, rho)] = one_m
                    self.transcript.generations.append(
                        GenerationRecord(m, rho, k_, s_next, lc, tuple(higher), one_m)
                    )
                    made["higher"] += len(higher)
                    made["one_m"] += 1
        return made

    def run_phase_m_II(self, m: int) -> None:
        """All m+1 transmitters of each S_{m+1} send their order-(1,m) symbol in one slot."""
        label = f"{m + 1}-II"
        for rho in range(self.plan.rounds[m]):
            for s_next in itertools.combinations(self.users, m + 1):
                t = self._begin_slot()
                active, signals = {}, {}
                for k_ in s_next:
                    tx = self.tx[k_]
                    sid = tx.pending_1m.pop((s_next, rho), None)
                    if sid is None:
                        raise ScheduleError(f"Tx{k_} has no order-(1,{m}) symbol for {s_next}, round {rho}")
                    pre = make_precoder(self.antennas, 1, self._rng_precoder, slot=t, owner=k_, unit_norm=True)
                    active[k_] = (pre, (sid,))
                    signals[k_] = tx.transmit(t, pre, (sid,))
                received = self._receive(t, signals, s_next)
                self._record(SlotRecord(t, label, m, rho, s_next, active, received))

    def run_full(self) -> Transcript:
        self.run_phase1()
        for m in range(2, self.k + 1):
            self.run_phase_m_I(m)
            if m >= 3:
                self.run_phase_m_II(m - 1)
            self.generate_between_phases(m)
        leftovers = [
            (tx.k, s) for tx in self.tx.values() for s, q in tx.queues.items() if q
        ] + [(tx.k, key) for tx in self.tx.values() for key in tx.pending_1m]
        if leftovers:
            raise ScheduleError(f"undelivered symbols remain: {leftovers[:5]}")
        return self.transcript


def run_full(k: int, n: int, antennas: int | None = None, seed: int = 0) -> Transcript:
    return ProtocolEngine(k, n, antennas, seed).run_full()
