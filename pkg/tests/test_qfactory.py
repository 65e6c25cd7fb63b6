import itertools
import json
import math

import numpy as np
import pytest

import oracle
from qfubqc import qfactory as qf
from qfubqc import qsim
from qfubqc import trapdoor as td
from qfubqc.cc import ScheduleViolation
from qfubqc.qsim import PureState
from qfubqc.rng import stream


# formulas --------------------------------------------------------------------

def test_compute_B2_examples():
    assert qf.compute_B2(0, [1, 0], [1, 1], [0, 1], 1, 1) == 1
    # b.(x^x') = 1, hx hx' = 0
    assert qf.compute_B2(1, [1, 0, 0], [1, 0, 1], [0, 0, 1], 1, 0) == 1
    assert qf.compute_B2(1, 0b100, 0b101, 0b001, 1, 0) == 1
    with pytest.raises(qf.LengthMismatch):
        qf.compute_B2(1, [1, 0], [1, 0, 1], [0, 0, 1], 0, 0)


def test_compute_B2_symmetric():
    g = stream(200)
    for _ in range(1000):
        d0, hx, hp = (int(v) for v in g.integers(0, 2, 3))
        b, x, xp = (int(v) for v in g.integers(0, 1 << 10, 3))
        assert qf.compute_B2(d0, b, x, xp, hx, hp) == qf.compute_B2(d0, b, xp, x, hp, hx)


def test_compute_L_examples():
    assert qf.compute_L(0, 0, 0, 0, 0, 0) == (0, 0, 0)
    assert qf.compute_L(1, 0, 1, 1, 0, 1) == (0, 0, 1)
    for B2, B1p, B2p, s1, s2 in itertools.product((0, 1), repeat=5):
        assert qf.compute_L(0, B2, B1p, B2p, s1, s2) == (B2p ^ B2, B1p, 0)


def test_merge_octant_matches_L_except_carry():
    for bits in itertools.product((0, 1), repeat=6):
        B1, B2, B1p, B2p, s1, s2 = bits
        L = qf.compute_L(*bits)
        oct_ = int(qf.merge_octant(*bits))
        assert (oct_ >> 1) & 1 == L[1] and oct_ & 1 == L[2]
        carry = B1p & B1 & (B2 ^ s2)
        assert (oct_ >> 2) & 1 == L[0] ^ carry


# merge gadget ------------------------------------------------------------------

def test_gadget_against_oracle_all_branches():
    for B1, B2, B1p, B2p in itertools.product((0, 1), repeat=4):
        branches = oracle.gadget_branches(oracle.bb84(B1, B2), oracle.rotated(B1p, B2p), qf.GADGET)
        assert sum(p for *_, p in branches) == pytest.approx(1)
        for s1, s2, out, _ in branches:
            k = int(qf.merge_octant(B1, B2, B1p, B2p, s1, s2))
            assert oracle.overlap(oracle.plus(k), out) >= 1 - 1e-9
            _, _, mine = qf.merge_gadget(PureState.bb84(B1, B2), qf.rotated_bb84(B1p, B2p),
                                         None, forced=(s1, s2))
            assert oracle.overlap(out, mine.amplitudes) >= 1 - 1e-9


def test_gadget_zero_inputs():
    _, _, out = qf.merge_gadget(PureState.bb84(0, 0), qf.rotated_bb84(0, 0), None, forced=(0, 0))
    assert out.overlap(PureState.plus(0)) == pytest.approx(1)


def test_gadget_replay_is_deterministic():
    q1, q2 = PureState.bb84(1, 0), qf.rotated_bb84(1, 1)
    a = qf.merge_gadget(q1, q2, stream(201))
    b = qf.merge_gadget(q1, q2, stream(201))
    assert a[:2] == b[:2]
    np.testing.assert_array_equal(a[2].amplitudes, b[2].amplitudes)


def test_gadget_uses_only_allowed_gates():
    assert {g[0] for g in qf.GADGET} <= {"CNOT", "CZ", "H", "S", "T"}
    assert len(qf.GADGET) <= 6


# four-state runs ------------------------------------------------------------------

@pytest.mark.parametrize("basis", ["standard", "rotated"])
@pytest.mark.parametrize("engine", ["dense", "sparse"])
def test_run_4states_correct(basis, engine):
    for s in range(60):
        g = stream(202, s)
        keys = td.toy_gen(6, g)
        out = qf.run_4states(keys, qf.HONEST, basis, g, engine)
        assert out.inverted and out.B1 == keys.d0
        assert out.fidelity() >= 1 - 1e-9


def test_exhaustive_branches_toy():
    """Every (y, b) branch of the honest server's Kraus form hits the formula state."""
    for s in range(6):
        keys = td.toy_gen(6, stream(203, s))
        for basis in ("standard", "rotated"):
            step_y, step_b = qf.honest_server_steps(keys, basis)
            for ylab, (col,) in step_y.branches().items():
                y = json.loads(ylab)
                for blab, (K,) in step_b.branches().items():
                    v = K @ col[:, 0]
                    if np.linalg.norm(v) < 1e-12:
                        continue  # interference kills this branch; it never occurs
                    v = v / np.linalg.norm(v)
                    o = qf._client_outputs(keys, y, json.loads(blab), basis, None)
                    want = PureState.bb84(o["B1"], o["B2"]).amplitudes
                    if basis == "rotated":
                        want = np.diag([1, -1j]) @ want
                    assert abs(np.vdot(want, v)) ** 2 >= 1 - 1e-9


def test_d0_zero_gives_computational_state():
    seen = 0
    for s in range(100):
        g = stream(204, s)
        keys = td.toy_gen(6, g)
        if keys.d0:
            continue
        out = qf.run_4states(keys, qf.HONEST, "standard", g)
        h = keys.hardcore(out.preimages[0])
        target = PureState.zeros(1) if h == 0 else PureState.bb84(0, 1)
        assert qsim.trace_overlap(target, out.server_state) == pytest.approx(1)
        seen += 1
    assert seen > 20


def test_d0_one_even_product_gives_plus():
    seen = 0
    for s in range(200):
        g = stream(205, s)
        keys = td.toy_gen(6, g)
        if not keys.d0:
            continue
        out = qf.run_4states(keys, qf.HONEST, "standard", g)
        x, xp = out.preimages
        prod = td.parity(out.b & (x ^ xp))
        # B2 = d0 (b.(x^x')) ^ h(x)h(x'); h(x)h(x') = 0 when d0 = 1
        target = PureState.plus(0) if prod == 0 else PureState.plus(4)
        assert qsim.trace_overlap(target, out.server_state) == pytest.approx(1)
        seen += prod == 0
    assert seen > 10


def test_lwe_correctness_rate():
    ok = fails = 0
    for s in range(1000):
        g = stream(206, s)
        keys = td.lwe_gen(None, g)
        out = qf.run_4states(keys, qf.HONEST, "standard", g)
        if not out.inverted:
            fails += 1
            continue
        ok += out.fidelity() >= 1 - 1e-9
    assert fails <= 10
    assert ok == 1000 - fails


def test_lwe_rotated_runs():
    for s in range(40):
        g = stream(207, s)
        out = qf.run_4states(td.lwe_gen(None, g), qf.HONEST, "rotated", g)
        if out.inverted:
            assert out.fidelity() >= 1 - 1e-9


def test_record_is_json():
    g = stream(208)
    keys = td.toy_gen(4, g)
    out = qf.run_4states(keys, rng=g)
    rec = out.record(keys)
    json.dumps(rec)
    assert rec["outcome"]["B1"] == out.B1 and rec["state_hash"]


def test_bad_basis():
    with pytest.raises(ValueError):
        qf.run_4states(td.toy_gen(4, stream(1)), basis="diagonal", rng=stream(2))


# eight-state runs ---------------------------------------------------------------------

def test_run_8states_correct_and_covers_octants():
    thetas = set()
    for s in range(300):
        g = stream(209, s)
        k1, k2 = td.toy_gen(4, g), td.toy_gen(4, g)
        out = qf.run_8states(k1, k2, qf.HONEST, g)
        assert out.inverted
        assert out.fidelity() >= 1 - 1e-9
        assert out.L[1:] == ((int(out.theta) >> 1) & 1, int(out.theta) & 1)
        thetas.add(int(out.theta))
    assert thetas == set(range(8))


def test_run_8states_L3_uniform():
    n = 1000
    ones = 0
    for s in range(n):
        g = stream(210, s)
        k1, k2 = td.toy_gen(4, g), td.toy_gen(4, g)
        ones += qf.run_8states(k1, k2, qf.HONEST, g).L[2]
    assert abs(ones / n - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_scripted_echo_server():
    g = stream(211)
    k1, k2 = td.toy_gen(4, g), td.toy_gen(4, g)
    image = {int(v) for v in k1.k.table()}
    outside = next(y for y in range(16) if y not in image)
    for y in (outside, next(iter(image))):
        steps = qf.fixed_scripted_steps([y, 3, y, 5, [1, 0]])
        out = qf.run_8states(k1, k2, qf.Scripted(steps), g)
        assert all(b in (0, 1) for b in out.L)
        assert out.sub_outcomes[0].inverted == (y in image)
    # garbage s-bits are tolerated
    out = qf.run_8states(k1, k2, qf.Scripted(qf.fixed_scripted_steps([0, 0, 0, 0, "xx"])), g)
    assert all(b in (0, 1) for b in out.L)


def test_schedule_violation():
    g = stream(212)
    keys = td.toy_gen(4, g)
    steps = qf.fixed_scripted_steps([1, 2])
    with pytest.raises(ScheduleViolation):
        qf.run_4states(keys, qf.Scripted(steps, schedule=("S", "R", "S")), rng=g)
    with pytest.raises(ScheduleViolation):
        qf.run_4states(keys, qf.Scripted(steps[:1]), rng=g)


def test_scripted_random_server_runs():
    g = stream(213)
    keys = td.toy_gen(5, g)
    out = qf.run_4states(keys, qf.Scripted(qf.random_scripted_steps(keys, g)), rng=g)
    assert out.B1 in (0, 1) and out.B2 in (0, 1)
    assert out.server_state.dim == 2
