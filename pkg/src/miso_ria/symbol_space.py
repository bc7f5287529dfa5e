"""Symbol identities, their ground-truth linear forms, and higher-order symbol generation.

Users and transmitters are numbered from 1, as in the usual ``u[i|S_m;S_m']``
notation. A symbol's linear form is always over its origin transmitter's private
symbols only, since transmitters never share messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

RANK_TOL = 1e-9
MAX_REDRAWS = 8


class SymbolError(ValueError):
    pass


class RankDeficiency(RuntimeError):
    """Random draws kept producing a rank-deficient matrix."""


@dataclass(frozen=True, order=True)
class SymbolId:
    origin_tx: int
    desired_set: tuple[int, ...]
    known_set: tuple[int, ...] = ()
    round: int = 0
    slot_tag: int = 0
    component_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "desired_set", tuple(sorted(self.desired_set)))
        object.__setattr__(self, "known_set", tuple(sorted(self.known_set)))
        if set(self.desired_set) & set(self.known_set):
            raise SymbolError(f"desired and known sets overlap in {self}")
        if self.origin_tx not in self.desired_set:
            raise SymbolError(f"origin {self.origin_tx} must be among desired users {self.desired_set}")

    @property
    def kind(self) -> str:
        if not self.known_set:
            return "private" if len(self.desired_set) == 1 else "order"
        if len(self.desired_set) == 1:
            return "order_1m"
        return "overheard"

    @property
    def order(self) -> int:
        """|S_m| for private/order-m/overheard symbols, |S_m'| for order-(1,m') symbols."""
        if self.kind == "order_1m":
            return len(self.known_set)
        return len(self.desired_set)

    def __str__(self) -> str:
        body = f"u[{self.origin_tx}|{','.join(map(str, self.desired_set))}"
        if self.known_set:
            body += ";" + ",".join(map(str, self.known_set))
        return f"{body}]@r{self.round}t{self.slot_tag}c{self.component_index}"


@dataclass
class LinearForm:
    """Sparse map from private-symbol id to complex coefficient."""

    coefficients: dict[SymbolId, complex] = field(default_factory=dict)

    @classmethod
    def unit(cls, sid: SymbolId) -> "LinearForm":
        return cls({sid: 1.0 + 0j})

    @classmethod
    def combine(cls, weights: Sequence[complex], forms: Sequence["LinearForm"]) -> "LinearForm":
        if len(weights) != len(forms):
            raise SymbolError("weights and forms differ in length")
        out: dict[SymbolId, complex] = {}
        for w, form in zip(weights, forms):
            for key, c in form.coefficients.items():
                out[key] = out.get(key, 0j) + complex(w) * c
        return cls(out)

    def evaluate(self, private_values: dict[SymbolId, complex]) -> complex:
        return sum((c * private_values[key] for key, c in self.coefficients.items()), 0j)

    def support_origins(self) -> set[int]:
        return {key.origin_tx for key, c in self.coefficients.items() if c != 0}


def _crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def normalized_min_singular(matrix: np.ndarray, axis: int = 1) -> float:
    """Smallest singular value after scaling rows (axis=1) or columns (axis=0) to unit norm."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    norms = np.linalg.norm(matrix, axis=axis, keepdims=True)
    if np.any(norms == 0):
        return 0.0
    return float(np.linalg.svd(matrix / norms, compute_uv=False).min())


@dataclass
class LcMatrix:
    """Combination coefficients for one (origin k, S_{m+1}) generation group.

    Rows 0..m-2 produce the order-(m+1) symbols, the last row produces the
    order-(1,m) symbol. Columns follow ``constituents``.
    """

    origin_tx: int
    s_set: tuple[int, ...]
    constituents: tuple[SymbolId, ...]
    matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def min_singular(self) -> float:
        return normalized_min_singular(self.matrix)


class SymbolPool:
    """Registry of every symbol in one trial together with its ground truth."""

    def __init__(self) -> None:
        self.registry: dict[SymbolId, tuple[LinearForm, complex]] = {}
        self.private_values: dict[SymbolId, complex] = {}
        self.lc_groups: list[LcMatrix] = []

    def __contains__(self, sid: SymbolId) -> bool:
        return sid in self.registry

    def __len__(self) -> int:
        return len(self.registry)

    def form(self, sid: SymbolId) -> LinearForm:
        return self.registry[sid][0]

    def value(self, sid: SymbolId) -> complex:
        return self.registry[sid][1]

    def _add(self, sid: SymbolId, form: LinearForm, value: complex) -> None:
        if sid in self.registry:
            raise SymbolError(f"{sid} registered twice")
        self.registry[sid] = (form, complex(value))

    def register_private(
        self,
        tx: int,
        count: int,
        rng: np.random.Generator,
        *,
        round: int = 0,
        slot_tag: int = 0,
    ) -> list[SymbolId]:
        """Fresh private symbols for ``tx`` with i.i.d. CN(0,1) values."""
        if count < 1:
            raise SymbolError(f"count must be positive, got {count}")
        values = _crandn(rng, count)
        ids = []
        for c in range(count):
            sid = SymbolId(tx, (tx,), (), round, slot_tag, c)
            self.private_values[sid] = complex(values[c])
            self._add(sid, LinearForm.unit(sid), values[c])
            ids.append(sid)
        return ids

    def derive_overheard(
        self,
        sid: SymbolId,
        parent_payload: Sequence[SymbolId],
        channel_row: np.ndarray,
        precoder: np.ndarray,
    ) -> tuple[LinearForm, complex]:
        """Register ``h^H W u`` where ``u`` stacks the parent symbols."""
        precoder = np.atleast_2d(precoder)
        if precoder.shape[1] != len(parent_payload):
            raise SymbolError(
                f"precoder has {precoder.shape[1]} columns for {len(parent_payload)} symbols"
            )
        if precoder.shape[0] != len(channel_row):
            raise SymbolError("channel row and precoder disagree on antenna count")
        for parent in parent_payload:
            if parent not in self.registry:
                raise SymbolError(f"parent {parent} is not registered")
        weights = np.conj(channel_row) @ precoder
        form = LinearForm.combine(weights, [self.form(p) for p in parent_payload])
        value = complex(weights @ np.array([self.value(p) for p in parent_payload]))
        self._add(sid, form, value)
        return form, value

    def make_higher_order(
        self,
        k: int,
        s_set: Iterable[int],
        constituents: Sequence[SymbolId],
        rng: np.random.Generator,
        *,
        round: int = 0,
        slot_tag: int = 0,
        component_offset: int = 0,
    ) -> tuple[list[SymbolId], SymbolId, LcMatrix]:
        """Mix the m overheard symbols of Tx ``k`` for set ``S_{m+1}``.

        Returns the m-1 order-(m+1) symbols, the order-(1,m) symbol and the
        combination matrix. Constituents are reordered so that column ``i``
        holds ``u[k|S minus j;j]`` for the i-th user ``j`` of ``S minus k``.
        """
        s_set = tuple(sorted(s_set))
        if k not in s_set:
            raise SymbolError(f"origin {k} not in {s_set}")
        others = [j for j in s_set if j != k]
        m = len(others)
        if len(constituents) != m:
            raise SymbolError(f"expected {m} constituents, got {len(constituents)}")
        by_listener = {}
        for sid in constituents:
            if sid not in self.registry:
                raise SymbolError(f"constituent {sid} is not registered")
            if sid.origin_tx != k or len(sid.known_set) != 1:
                raise SymbolError(f"{sid} is not an overheard symbol of Tx{k}")
            j = sid.known_set[0]
            if set(sid.desired_set) | {j} != set(s_set):
                raise SymbolError(f"{sid} does not belong to set {s_set}")
            by_listener[j] = sid
        ordered = tuple(by_listener[j] for j in others)

        for _ in range(MAX_REDRAWS):
            matrix = _crandn(rng, m, m)
            if normalized_min_singular(matrix) > RANK_TOL:
                break
        else:
            raise RankDeficiency(f"no full-rank combination for Tx{k}, S={s_set}")

        forms = [self.form(sid) for sid in ordered]
        values = np.array([self.value(sid) for sid in ordered])
        higher = []
        for i in range(m - 1):
            sid = SymbolId(k, s_set, (), round, slot_tag, component_offset + i)
            self._add(sid, LinearForm.combine(matrix[i], forms), matrix[i] @ values)
            higher.append(sid)
        one_m = SymbolId(k, (k,), tuple(others), round, slot_tag, component_offset)
        self._add(one_m, LinearForm.combine(matrix[-1], forms), matrix[-1] @ values)
        lc = LcMatrix(k, s_set, ordered, matrix)
        self.lc_groups.append(lc)
        return higher, one_m, lc

    def closure_error(self) -> float:
        """Worst relative gap between stored values and their forms evaluated afresh."""
        worst = 0.0
        for form, value in self.registry.values():
            fresh = form.evaluate(self.private_values)
            worst = max(worst, abs(fresh - value) / max(1.0, abs(value)))
        return worst

    def origin_violations(self) -> list[SymbolId]:
        return [
            sid for sid, (form, _) in self.registry.items()
            if not form.support_origins() <= {sid.origin_tx}
        ]

    def census(self) -> dict[str, int]:
        """Symbol counts keyed by ``private``, ``order-m``, ``order-(1,m)`` and ``overheard-m``."""
        out: dict[str, int] = {}
        for sid in self.registry:
            if sid.kind == "private":
                key = "private"
            elif sid.kind == "order":
                key = f"order-{sid.order}"
            elif sid.kind == "order_1m":
                key = f"order-(1,{sid.order})"
            else:
                key = f"overheard-{sid.order}"
            out[key] = out.get(key, 0) + 1
        return out
