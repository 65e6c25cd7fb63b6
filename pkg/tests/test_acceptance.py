"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``[acceptance] criterion N: PASS/FAIL`` line and the
terminal summary collects them. Criterion 2 is run twice: once literally
against ``compute_L`` (known to fail, so it is an expected failure) and once
against the carry-aware octant the gadget really produces.
"""
import itertools
import time

import numpy as np
import pytest

import oracle
from conftest import record
from qfubqc import harness, qsim, ubqc
from qfubqc import qfactory as qf
from qfubqc import trapdoor as td
from qfubqc.qsim import PureState
from qfubqc.rng import stream

SEED = 20240611
TOL = 1e-9


def test_criterion_1_qfactory4_correctness():
    t0 = time.perf_counter()
    worst, bad = 1.0, 0
    for s in range(1000):
        g = stream(SEED, 1, s)
        keys = td.toy_gen(6, g)
        out = qf.run_4states(keys, rng=g)
        ov = qsim.trace_overlap(PureState.bb84(out.B1, out.B2), out.server_state)
        worst = min(worst, ov)
        bad += (not out.inverted) or ov < 1 - TOL
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 60
    record("1", ok, f"1000 toy n=6 sessions, {bad} failures, min overlap {worst:.12f}, {dt:.1f}s")
    assert ok


def _gadget_failures(octant_fn):
    fails = branches = 0
    for B1, B2, B1p, B2p in itertools.product((0, 1), repeat=4):
        for s1, s2, vec, p in oracle.gadget_branches(oracle.bb84(B1, B2),
                                                     oracle.rotated(B1p, B2p), qf.GADGET):
            if p < 1e-12:
                continue
            branches += 1
            k = int(octant_fn(B1, B2, B1p, B2p, s1, s2))
            _, _, mine = qf.merge_gadget(PureState.bb84(B1, B2), qf.rotated_bb84(B1p, B2p),
                                         None, forced=(s1, s2))
            target = oracle.plus(k)
            if (oracle.overlap(vec, target) < 1 - TOL
                    or mine.overlap(PureState.plus(k)) < 1 - TOL):
                fails += 1
    return fails, branches


@pytest.mark.xfail(strict=True, reason="compute_L xors the pi/2 digit and drops a carry; "
                                       "8 of 64 branches land pi away")
def test_criterion_2_merge_gadget_literal_L():
    t0 = time.perf_counter()
    fails, branches = _gadget_failures(lambda *b: qf.octant_of_L(qf.compute_L(*b)))
    dt = time.perf_counter() - t0
    ok = fails == 0 and dt < 10
    record("2", ok, f"literal compute_L: {fails}/{branches} branches disagree with the "
                    f"gadget output ({dt:.2f}s)")
    assert ok


def test_criterion_2_merge_gadget_carry_aware():
    t0 = time.perf_counter()
    fails, branches = _gadget_failures(qf.merge_octant)
    dt = time.perf_counter() - t0
    ok = fails == 0 and branches == 64 and dt < 10
    record("2 (carry-aware L)", ok,
           f"{branches} branches over 16 inputs, {fails} failures ({dt:.2f}s)")
    assert ok


PATTERNS = {"1x1": (1, 1, [[1]]), "1x2": (1, 2, [[3, 6]]), "2x2": (2, 2, [[1, 3], [5, 2]])}


def test_criterion_3_qf_ubqc_vs_reference():
    t0 = time.perf_counter()
    tvs = {}
    for i, (name, (n, m, phi)) in enumerate(PATTERNS.items()):
        p = ubqc.build_brickwork(n, m, phi)
        emp = ubqc.sample_outputs(p, ubqc.QFactory8Source(), 10_000, stream(SEED, 3, i))
        tvs[name] = ubqc.total_variation(emp, ubqc.reference_mbqc(p))
    dt = time.perf_counter() - t0
    ok = max(tvs.values()) <= 0.02 and dt < 300
    detail = ", ".join(f"{k} TV {v:.4f}" for k, v in tvs.items())
    record("3", ok, f"{detail} at 1e4 samples each, {dt:.0f}s")
    assert ok


def test_criterion_4_game7_and_rewrites():
    rep = harness.run_hybrid(7, harness.HybridAdversary(), 100_000, stream(SEED, 4))
    lo, hi = rep.ci(0.99)
    checks = harness.check_exact_rewrites()
    disc = {c.transition: c.discrepancies for c in checks}
    ok = lo <= 0.5 <= hi and all(c.ok for c in checks)
    record("4", ok, f"game 7 win rate {rep.win_rate:.4f}, 99% CI [{lo:.4f}, {hi:.4f}]; "
                    f"rewrite discrepancies {disc}")
    assert ok


def test_criterion_5_basis_blindness_calibration():
    four = harness.basis_blindness_estimate("fourState", harness.blind_guesser, 10_000,
                                            stream(SEED, 5, 0))
    eight = harness.basis_blindness_estimate("eightState", harness.blind_guesser, 10_000,
                                             stream(SEED, 5, 1), n=4)
    brute = harness.basis_blindness_estimate("fourState", harness.bruteforce_guesser, 1000,
                                             stream(SEED, 5, 2))
    ok = four.within(0.5) and eight.within(0.25) and brute.win_rate > 0.95
    record("5", ok, f"blind four-state {four.win_rate:.4f}, blind eight-state "
                    f"{eight.win_rate:.4f}, brute force {brute.win_rate:.4f}")
    assert ok


def test_criterion_6_describability():
    brute = harness.describability_attack("QFactory4", "BruteForceDescriber", 1000,
                                          stream(SEED, 6, 0))
    blind = harness.describability_attack("QFactory4", "MeasureAndPrepare", 1000,
                                          stream(SEED, 6, 1))
    ok = brute.mean_overlap >= 0.99 and abs(blind.mean_overlap - 0.5) <= 0.01
    record("6", ok, f"brute force mean overlap {brute.mean_overlap:.4f}, "
                    f"transcript-blind {blind.mean_overlap:.4f}")
    assert ok


def test_criterion_7_classical_emulation():
    hon, scr = harness.emulation_check(1000, 100, stream(SEED, 7))
    ok = hon.failures == 0 and scr.failures == 0
    record("7", ok, f"honest {hon.sessions} sessions min overlap {hon.min_overlap:.12f}; "
                    f"scripted {scr.sessions} min overlap {scr.min_overlap:.12f}")
    assert ok


def test_criterion_8_trace_lemmas():
    suite = harness.verify_lemmas(stream(SEED, 8), 1000)
    ok = suite.ok and suite.identity_pairs >= 1000 and suite.properties_checked >= 1000 \
        and suite.transitivity_checked >= 1000
    record("8", ok, f"identity residual {suite.identity_residual:.2e} over "
                    f"{suite.identity_pairs} pairs; violations {suite.properties_violations}"
                    f"/{suite.transitivity_violations}")
    assert ok


def test_criterion_9_cloning_bound():
    best = harness.cloning_bound_search(harness.ZPI2, 1000)
    ok = best < 0.99 and best == pytest.approx(harness.CLONING_BOUND, abs=1e-9)
    record("9", ok, f"grid maximum {best:.12f}, frozen {harness.CLONING_BOUND}")
    assert ok


def test_criterion_10_delta_one_time_pad():
    bad = 0
    for phi, sx, sz in itertools.product(range(8), (0, 1), (0, 1)):
        counts = np.zeros(8, dtype=int)
        for theta, r in itertools.product(range(8), (0, 1)):
            counts[int(ubqc.angle_update(phi, theta, r, sx, sz))] += 1
        bad += not (np.all(counts == 2) and ubqc.delta_is_uniform(phi, sx, sz))
    record("10", bad == 0, f"32 (phi, sX, sZ) cases, {bad} non-uniform")
    assert bad == 0
