"""Exit criteria. Each test prints one ``[PASS]``/``[FAIL]`` line, repeated in the run summary."""

from __future__ import annotations

import time
from fractions import Fraction

import pytest

from miso_ria import dof_calculus as dc
from miso_ria.campaign import run_trial
from miso_ria.protocol_engine import run_full

from .conftest import record_criterion

TOL = 1e-6


def check(name: str, ok: bool, detail: str) -> None:
    record_criterion(name, ok, detail)
    assert ok, f"{name}: {detail}"


def _campaign(k, n, antennas, trials, seed):
    start = time.perf_counter()
    results = [run_trial(k, n, antennas, seed, i, TOL) for i in range(trials)]
    return results, time.perf_counter() - start


@pytest.fixture(scope="module")
def sim_k3_m3():
    return _campaign(3, 3, 3, 100, seed=101)


@pytest.fixture(scope="module")
def sim_k3_m2():
    return _campaign(3, 2, 2, 100, seed=202)


@pytest.fixture(scope="module")
def sim_k4():
    return _campaign(4, 3, 4, 25, seed=303)


def test_c01_exact_theorem_values():
    start = time.perf_counter()
    got = {k: dc.sum_dof(k).ds for k in (3, 4, 5)}
    elapsed = time.perf_counter() - start
    want = {3: Fraction(3, 2), 4: Fraction(108, 65), 5: Fraction(360, 201)}
    check("C1 exact d_s(3..5)", got == want and elapsed < 1.0, f"{got} in {elapsed:.3f}s")


def test_c02_intermediate_values():
    b = dc.sum_dof(3)
    ok = b.big_o == Fraction(6, 5) and b.o1 == 2 and b.o2 == 3
    check("C2 O(3)=6/5, O1=2, O2=3", ok, f"O={b.big_o}, O1={b.o1}, O2={b.o2}")


def test_c03_two_path_consistency():
    start = time.perf_counter()
    bad = [
        (k, m)
        for k in range(3, 201)
        for m in range(2, k)
        if 1 / (1 - dc.appendix_b_path(k, m)) != dc.dof_m_recursive(k, m)
    ]
    elapsed = time.perf_counter() - start
    check("C3 closed form == recursion, K<=200", not bad and elapsed < 30, f"{len(bad)} mismatches in {elapsed:.1f}s")


def test_c04_bounded_by_asymptote():
    start = time.perf_counter()
    rows = dc.asymptote_check(10_000)
    elapsed = time.perf_counter() - start
    above = [k for k, _, gap in rows if gap <= 0]
    ok = not above and rows[-1][0] == 10_000 and elapsed < 60
    check("C4a d_s(K) < 64/15 for K<=1e4", ok, f"{len(above)} violations, {elapsed:.1f}s")


def test_c04_gap_at_ten_thousand():
    k = 10_000
    gap = dc.ASYMPTOTE - dc.sum_dof(k).ds
    check("C4b |64/15 - d_s(1e4)| < 1e-2", abs(gap) < Fraction(1, 100), f"gap={float(gap):.5f}")


def _sim_summary(results, privates, slots, ratio):
    failures = [r.index for r in results if not r.report.success]
    shape_ok = all(
        r.report.private_recovered == privates and r.report.total_slots == slots
        and r.report.measured_dof == ratio and r.report.max_relative_residual < TOL
        for r in results
    )
    worst = max(r.report.max_relative_residual for r in results)
    return not failures and shape_ok, failures, worst


def test_c05_k3_three_antennas(sim_k3_m3):
    results, elapsed = sim_k3_m3
    ok, failures, worst = _sim_summary(results, 18, 12, Fraction(3, 2))
    ok = ok and len(results) == 100 and elapsed < 10
    check("C5 K=3 n=3 M=3, 100 trials", ok, f"failures={failures}, max residual {worst:.1e}, {elapsed:.1f}s")


def test_c06_k3_two_antennas(sim_k3_m2):
    results, elapsed = sim_k3_m2
    ok, failures, worst = _sim_summary(results, 24, 16, Fraction(3, 2))
    ok = ok and len(results) == 100 and elapsed < 10
    check("C6 K=3 n=2 M=2, 100 trials", ok, f"failures={failures}, max residual {worst:.1e}, {elapsed:.1f}s")


def test_c07_k4(sim_k4):
    results, elapsed = sim_k4
    ok, failures, worst = _sim_summary(results, 108, 65, Fraction(108, 65))
    ok = ok and len(results) == 25 and elapsed < 60
    check("C7 K=4 n=3, 25 trials", ok, f"failures={failures}, max residual {worst:.1e}, {elapsed:.1f}s")


def test_c08_delayed_csit_audit(sim_k3_m3, sim_k3_m2, sim_k4):
    results = sim_k3_m3[0] + sim_k3_m2[0] + sim_k4[0]
    violations = sum(r.csit_violations for r in results)
    queries = sum(r.csit_queries for r in results)
    check("C8 zero CSIT violations", violations == 0 and queries > 0, f"{violations} violations in {queries} queries")


def _expected_census(k, n):
    p = dc.replication_plan(k, n)
    t = dc.counts(k, n)
    out = {"private": p.rounds[1] * t.n1, "order-2": p.rounds[1] * t.n2}
    for m in range(2, k):
        r = p.rounds[m]
        out[f"overheard-{m}"] = r * (k - m) * t.rows[m].t_m
        out[f"order-{m + 1}"] = r * t.rows[m].n_m_plus_1_generated
        out[f"order-(1,{m})"] = r * t.rows[m].n_1m_generated
    return {key: v for key, v in out.items() if v}


def test_c09_counting_audit():
    mismatches = []
    for k in range(2, 7):
        for n in range(2, k + 1):
            tr = run_full(k, n, k, seed=1000 + 10 * k + n)
            plan = dc.replication_plan(k, n)
            spans = list(tr.phase_slot_counts().items())
            if tr.pool.census() != _expected_census(k, n) or spans != plan.slot_sequence():
                mismatches.append((k, n))
            # payload symbols delivered per phase m-I equal CountTable N_m x rounds
            t = dc.counts(k, n)
            for m in range(2, k + 1):
                sent = sum(len(p) for rec in tr.slots_in(f"{m}-I") for _, p in rec.active.values())
                if sent != plan.rounds[m] * t.rows[m].n_m:
                    mismatches.append((k, n, m))
    check("C9 counts/spans == plan for K<=6", not mismatches, f"mismatches={mismatches}")


def test_c10_comparators_k3():
    table = dc.comparator_table(3)
    ours = dc.sum_dof(3).ds
    got = sorted([*table.values(), ours])
    want = sorted([Fraction(9, 8), Fraction(36, 31), Fraction(9, 7), Fraction(3, 2), Fraction(18, 11), Fraction(3, 2)])
    ok = got == want and table["mat_bc"] == Fraction(18, 11) and table["two_phase_misoic"] == Fraction(9, 7)
    check("C10 K=3 comparator table", ok, ", ".join(f"{k}={v}" for k, v in table.items()) + f", ours={ours}")
