"""Rayleigh block-fading channels, delayed local CSIT access, and random precoders."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symbol_space import RANK_TOL, MAX_REDRAWS, RankDeficiency, normalized_min_singular


class ChannelError(ValueError):
    pass


class CsitViolation(PermissionError):
    """A transmitter asked for channel knowledge it cannot have."""


def slot_rng(seed: int, *tags: int) -> np.random.Generator:
    """Independent generator for one (seed, tags) pair, stable across call order."""
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


class ChannelTensor:
    """Append-only store of ``h_{kj}(t)``: the M-vector from Tx j to Rx k in slot t.

    Entries are i.i.d. CN(0,1) across receivers, transmitters, antennas and slots.
    Each slot is drawn from its own seed-derived stream, so a tensor is fully
    determined by ``seed``.
    """

    def __init__(self, k: int, antennas: int, seed: int) -> None:
        if k < 2 or antennas < 1:
            raise ChannelError(f"invalid dimensions k={k}, antennas={antennas}")
        self.k = k
        self.antennas = antennas
        self.seed = seed
        self._slots: list[np.ndarray] = []

    @property
    def num_slots(self) -> int:
        return len(self._slots)

    def generate_slot(self, t: int) -> np.ndarray:
        if t != len(self._slots) + 1:
            raise ChannelError(f"slot {t} out of order (next is {len(self._slots) + 1})")
        rng = slot_rng(self.seed, 0, t)
        shape = (self.k, self.k, self.antennas)
        h = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
        h.setflags(write=False)
        self._slots.append(h)
        return h

    def h(self, rx: int, tx: int, t: int) -> np.ndarray:
        """Unrestricted read; only receivers and the simulator itself may use it."""
        if not 1 <= t <= len(self._slots):
            raise ChannelError(f"slot {t} has not been generated")
        return self._slots[t - 1][rx - 1, tx - 1]

    def slot(self, t: int) -> np.ndarray:
        return self._slots[t - 1]


@dataclass
class CsitView:
    """What Tx ``tx`` may know: its own outgoing channels, strictly before ``current_slot``."""

    tx: int
    channels: ChannelTensor
    current_slot: int = 1
    access_log: list[tuple[int, int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, int, str]] = field(default_factory=list)

    def advance(self, t: int) -> None:
        if t < self.current_slot:
            raise ChannelError("time runs forward only")
        self.current_slot = t

    def query(self, rx: int, slot: int, tx: int | None = None) -> np.ndarray:
        tx = self.tx if tx is None else tx
        if tx != self.tx:
            self.violations.append((rx, tx, slot, "non-local"))
            raise CsitViolation(f"Tx{self.tx} asked for h_{rx}{tx}({slot}), a non-local channel")
        if slot >= self.current_slot:
            self.violations.append((rx, tx, slot, "not-yet-delayed"))
            raise CsitViolation(
                f"Tx{self.tx} asked for slot {slot} while in slot {self.current_slot}"
            )
        self.access_log.append((rx, tx, slot))
        return self.channels.h(rx, tx, slot)

    def audit(self) -> int:
        """Number of logged or attempted queries that break the delayed local rule."""
        bad = sum(1 for rx, tx, s in self.access_log if tx != self.tx or s >= self.current_slot)
        return bad + len(self.violations)


def csit_query(view: CsitView, rx: int, slot: int, tx: int | None = None) -> np.ndarray:
    return view.query(rx, slot, tx)


@dataclass(frozen=True)
class Precoder:
    matrix: np.ndarray
    slot: int = 0
    owner: int = 0

    @property
    def streams(self) -> int:
        return self.matrix.shape[1]


def make_precoder(
    antennas: int,
    streams: int,
    rng: np.random.Generator,
    *,
    slot: int = 0,
    owner: int = 0,
    unit_norm: bool = False,
) -> Precoder:
    """Random ``antennas x streams`` precoder of full column rank."""
    if not 1 <= streams <= antennas:
        raise ChannelError(f"cannot send {streams} streams from {antennas} antennas")
    for _ in range(MAX_REDRAWS):
        w = (rng.standard_normal((antennas, streams)) + 1j * rng.standard_normal((antennas, streams))) / np.sqrt(2.0)
        if normalized_min_singular(w, axis=0) > RANK_TOL:
            break
    else:
        raise RankDeficiency(f"no rank-{streams} precoder found")
    if unit_norm:
        w = w / np.linalg.norm(w, axis=0, keepdims=True)
    w.setflags(write=False)
    return Precoder(w, slot, owner)


def add_noise(y: complex, rng: np.random.Generator, variance: float) -> complex:
    """Optional receiver noise; the protocol engine leaves it off by default."""
    if variance <= 0:
        return y
    return y + complex(rng.standard_normal() + 1j * rng.standard_normal()) * np.sqrt(variance / 2)
