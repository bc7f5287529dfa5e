from __future__ import annotations

import dataclasses
from fractions import Fraction

import numpy as np
import pytest

from miso_ria import campaign
from miso_ria.decoder import (
    DecodeFailure,
    DegenerateRealization,
    ReceiverState,
    _learn_overheard,
    _solve,
    backward_decode,
    decode_order_k_phase,
    decode_receiver,
    peel_order_m,
    solve_phase1,
)
from miso_ria.protocol_engine import run_full


@pytest.fixture(scope="module")
def k3n3():
    return run_full(3, 3, 3, seed=21)


def _truth(tr, sid):
    return tr.pool.value(sid)


def test_order3_symbols_read_directly_from_slots_9_to_11(k3n3):
    tr = k3n3
    for rx in (1, 2, 3):
        state = ReceiverState(rx)
        decode_order_k_phase(state, tr)
        for rec in tr.slots_in("3-I"):
            assert rec.t in (9, 10, 11)
            (_, payload), = rec.active.values()
            assert abs(state.known_values[payload[0]] - _truth(tr, payload[0])) < 1e-9


def test_slot12_gives_each_receiver_its_order_1_2_symbol(k3n3):
    tr = k3n3
    (rec,) = tr.slots_in("3-II")
    assert rec.t == 12
    for rx in (1, 2, 3):
        state = ReceiverState(rx)
        _learn_overheard(state, tr)
        decode_order_k_phase(state, tr)
        own = rec.active[rx][1][0]
        assert own.known_set == tuple(j for j in (1, 2, 3) if j != rx)
        assert abs(state.known_values[own] - _truth(tr, own)) < 1e-9


def test_peel_order2_recovers_constituents_then_slot3_payload(k3n3):
    tr = k3n3
    state = ReceiverState(1)
    _learn_overheard(state, tr)
    decode_order_k_phase(state, tr)
    peel_order_m(state, tr, 2)
    gen = next(g for g in tr.generations if g.origin_tx == 1)
    # u[1|1,2;3] and u[1|1,3;2]
    assert {c.known_set for c in gen.lc.constituents} == {(2,), (3,)}
    for c in gen.lc.constituents:
        assert abs(state.known_values[c] - _truth(tr, c)) < 1e-9
    slot3 = tr.slots[2]
    assert slot3.phase == "2-I" and slot3.subset == (1, 2) and list(slot3.active) == [1]
    for sid in slot3.active[1][1]:
        assert abs(state.known_values[sid] - _truth(tr, sid)) < 1e-9


def test_solve_phase1_k3n3_six_privates_per_rx(k3n3):
    for rx in (1, 2, 3):
        state = decode_receiver(k3n3, rx)
        assert state.recovered["private"] == 6


def test_solve_phase1_k3n2_eight_privates_per_rx():
    tr = run_full(3, 2, 2, seed=5)
    for rx in (1, 2, 3):
        assert decode_receiver(tr, rx).recovered["private"] == 8


def test_k4_systems_and_privates():
    tr = run_full(4, 3, 4, seed=5)
    for rx in range(1, 5):
        state = decode_receiver(tr, rx)
        assert state.recovered["private"] == 27
        assert state.max_residual < 1e-8
        assert state.min_singular > 1e-9


def test_k2_is_two_direct_slots():
    tr = run_full(2, 2, 2, seed=3)
    assert tr.phase_slot_counts() == {"1": 1, "2-I": 2}
    rep = backward_decode(tr)
    assert rep.success
    assert rep.measured_dof == Fraction(4, 3)


@pytest.mark.parametrize("k, n, m, ratio", [
    (3, 3, 3, Fraction(3, 2)),
    (3, 2, 3, Fraction(3, 2)),
    (3, 2, 2, Fraction(3, 2)),
    (4, 3, 4, Fraction(108, 65)),
    (4, 3, 3, Fraction(108, 65)),
    (5, 3, 5, Fraction(360, 201)),
])
def test_backward_decode_success(k, n, m, ratio):
    rep = backward_decode(run_full(k, n, m, seed=99))
    assert rep.success, rep.violations
    assert rep.measured_dof == ratio == rep.expected_dof
    assert rep.private_recovered == rep.private_total
    assert rep.max_relative_residual < 1e-6


@pytest.mark.parametrize("k, n", [(2, 2), (3, 2), (3, 3), (4, 3)])
def test_oracle_equivalence_over_100_trials(k, n):
    for result in campaign.run_trials(k, n, k, trials=100, seed=2024):
        rep = result.report
        assert rep.success, rep.violations
        assert rep.max_relative_residual < 1e-6
        assert rep.min_singular > 1e-9
        assert result.reseeds == 0
        assert rep.measured_dof == rep.expected_dof


def test_tampered_scalar_is_caught():
    tr = run_full(3, 3, 3, seed=8)
    rec = tr.slots[-1]
    rx = next(iter(rec.received))
    rec.received[rx] += 0.5
    rep = backward_decode(tr)
    assert not rep.success
    assert rep.status == "failed"
    assert rep.violations


def test_missing_knowledge_raises():
    tr = run_full(3, 3, 3, seed=8)
    with pytest.raises(DecodeFailure):
        solve_phase1(ReceiverState(1), tr)


def test_singular_system_is_degenerate():
    with pytest.raises(DegenerateRealization):
        _solve(ReceiverState(1), np.ones((2, 2), complex), np.ones(2), "test")


def test_degenerate_trials_are_reseeded(monkeypatch):
    real = campaign.backward_decode
    calls = []

    def flaky(tr, tolerance):
        rep = real(tr, tolerance)
        calls.append(tr.seed)
        if len(calls) == 1:
            return dataclasses.replace(rep, success=False, status="degenerate")
        return rep

    monkeypatch.setattr(campaign, "backward_decode", flaky)
    result = campaign.run_trial(3, 3, 3, seed=1)
    assert result.reseeds == 1
    assert result.report.success
    assert calls[0] != calls[1]


def test_report_json_roundtrip():
    rep = backward_decode(run_full(3, 3, 3, seed=1))
    doc = rep.to_json()
    assert doc["measured_dof"] == {"num": 3, "den": 2}
    assert doc["per_order"]["private"] == 18
    assert doc["status"] == "ok"
