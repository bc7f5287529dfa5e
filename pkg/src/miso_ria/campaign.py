"""Seeded multi-trial simulation: run the protocol, decode it, tally the outcome."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .decoder import DEFAULT_TOL, DecodeReport, backward_decode
from .protocol_engine import ProtocolEngine, Transcript

MAX_RESEEDS = 5


def trial_seed(seed: int, index: int, attempt: int = 0) -> int:
    return int(np.random.SeedSequence([seed, index, attempt]).generate_state(1)[0])


@dataclass
class TrialResult:
    index: int
    seed: int
    reseeds: int
    report: DecodeReport
    census: dict[str, int]
    phase_slots: dict[str, int]
    csit_queries: int
    csit_violations: int
    ground_truth_gap: float

    def to_json(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "seed": self.seed,
            "reseeds": self.reseeds,
            "census": dict(sorted(self.census.items())),
            "phase_slots": self.phase_slots,
            "csit_queries": self.csit_queries,
            "csit_violations": self.csit_violations,
            "decode": self.report.to_json(),
        }


def run_trial(
    k: int,
    n: int,
    antennas: int,
    seed: int,
    index: int = 0,
    tolerance: float = DEFAULT_TOL,
    keep: list[Transcript] | None = None,
) -> TrialResult:
    """One protocol run plus decode; degenerate draws are re-seeded and counted."""
    for attempt in range(MAX_RESEEDS + 1):
        s = trial_seed(seed, index, attempt)
        transcript = ProtocolEngine(k, n, antennas, s).run_full()
        report = backward_decode(transcript, tolerance)
        if report.status != "degenerate":
            break
    if keep is not None:
        keep.append(transcript)
    return TrialResult(
        index=index,
        seed=s,
        reseeds=attempt,
        report=report,
        census=transcript.pool.census(),
        phase_slots=transcript.phase_slot_counts(),
        csit_queries=sum(len(v.access_log) for v in transcript.views.values()),
        csit_violations=transcript.csit_violations(),
        ground_truth_gap=transcript.ground_truth_gap,
    )


def run_trials(
    k: int,
    n: int,
    antennas: int,
    trials: int,
    seed: int,
    tolerance: float = DEFAULT_TOL,
) -> list[TrialResult]:
    return [run_trial(k, n, antennas, seed, i, tolerance) for i in range(trials)]
