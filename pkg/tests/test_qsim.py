import math

import numpy as np
import pytest

from qfubqc import qsim
from qfubqc.qsim import (ClassicalDescription, DensityMatrix, Octant, PureState,
                         QuantumInstrumentStep)
from qfubqc.rng import stream

COS2_PI8 = math.cos(math.pi / 8) ** 2  # 0.8535533905932737


def test_octant_arithmetic():
    assert Octant(9) == 1
    assert Octant(3) + 7 == 2
    assert -Octant(1) == 7
    assert Octant(2) - 5 == 5
    assert math.isclose(Octant(2).radians, math.pi / 2)


def test_h_on_zero_is_plus():
    out = qsim.apply_circuit(PureState.zeros(1), [("H", 0)])
    assert out.overlap(PureState.plus(0)) == pytest.approx(1, abs=1e-12)


def test_rz_after_h():
    out = qsim.apply_circuit(PureState.zeros(1), [("H", 0), ("Rz", 0, 2)])
    assert out.overlap(PureState.plus(2)) == pytest.approx(1, abs=1e-12)


def test_graph_state_stabilizers():
    psi = qsim.apply_circuit(PureState.zeros(2), [("H", 0), ("H", 1), ("CZ", 0, 1)])
    v = psi.amplitudes
    np.testing.assert_allclose(np.kron(qsim.X, qsim.Z) @ v, v, atol=1e-12)
    np.testing.assert_allclose(np.kron(qsim.Z, qsim.X) @ v, v, atol=1e-12)


def test_cnot_and_bad_target():
    psi = qsim.apply_circuit(PureState.zeros(2), [("X", 0), ("CNOT", 0, 1)])
    assert abs(psi.amplitudes[3]) == pytest.approx(1)
    with pytest.raises(qsim.BadTarget):
        qsim.apply_circuit(PureState.zeros(2), [("H", 2)])
    with pytest.raises(qsim.BadTarget):
        qsim.apply_circuit(PureState.zeros(2), [("CZ", 1, 1)])


def test_norm_after_100_gates():
    g = stream(5)
    names = ["H", "X", "Z", "S", "T", "Sdg", "Tdg", "CZ", "CNOT", "Rz"]
    gates = []
    for _ in range(100):
        name = names[int(g.integers(len(names)))]
        a, b = g.choice(5, 2, replace=False)
        if name in ("CZ", "CNOT"):
            gates.append((name, int(a), int(b)))
        elif name == "Rz":
            gates.append((name, int(a), int(g.integers(8))))
        else:
            gates.append((name, int(a)))
    out = qsim.apply_circuit(qsim.random_pure(32, g), gates)
    assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-9


@pytest.mark.parametrize("delta", range(8))
def test_measure_rotated_same_and_orthogonal(delta):
    g = stream(1, delta)
    for _ in range(20):
        s, post = qsim.measure_rotated(PureState.plus(delta), 0, delta, g)
        assert s == 0 and post.qubit_count == 0
        s, _ = qsim.measure_rotated(PureState.plus(delta + 4), 0, delta, g)
        assert s == 1


def test_measure_rotated_born_half():
    g = stream(2)
    zeros = sum(qsim.measure_rotated(PureState.plus(3), 0, 1, g)[0] == 0 for _ in range(10_000))
    assert 0.48 <= zeros / 10_000 <= 0.52


def test_measure_removes_qubit_and_forced_zero_branch():
    psi = PureState.plus(0).tensor(PureState.zeros(1))
    s, post = qsim.measure_z(psi, 1, None, forced=0)
    assert s == 0 and post.qubit_count == 1
    assert post.overlap(PureState.plus(0)) == pytest.approx(1)
    with pytest.raises(qsim.ZeroNorm):
        qsim.measure_z(psi, 1, None, forced=1)


def test_trace_overlap_examples():
    p = PureState.plus(0).density()
    assert qsim.trace_overlap(p, p) == pytest.approx(1)
    assert qsim.trace_overlap(p, PureState.plus(4).density()) == pytest.approx(0, abs=1e-15)
    assert qsim.trace_overlap(p, PureState.plus(2).density()) == pytest.approx(0.5)
    with pytest.raises(qsim.DimMismatch):
        qsim.trace_overlap(p, np.eye(4) / 4)


def test_trace_identity_examples():
    p = PureState.plus(1)
    lhs, rhs = qsim.check_trace_identity(p, p)
    assert lhs == pytest.approx(1) and rhs == pytest.approx(1)
    lhs, rhs = qsim.check_trace_identity(np.eye(2) / 2, PureState.zeros(1))
    assert lhs == pytest.approx(0.5, abs=1e-15) and rhs == pytest.approx(0.5, abs=1e-15)


def test_trace_identity_random_pairs():
    g = stream(3)
    worst = 0.0
    for d in (2, 4):
        for _ in range(100):
            a, b = qsim.random_density(d, g), qsim.random_density(d, g)
            lhs, rhs = qsim.check_trace_identity(a, b)
            worst = max(worst, abs(lhs - rhs))
    assert worst < 1e-12


def test_density_invariants():
    with pytest.raises(qsim.QsimError):
        DensityMatrix(np.array([[1, 1], [0, 0]], complex))
    with pytest.raises(qsim.QsimError):
        DensityMatrix(np.diag([1.5, -0.5]))
    sub = DensityMatrix(np.diag([0.3, 0.1]))
    assert sub.trace == pytest.approx(0.4)
    with pytest.raises(qsim.ZeroNorm):
        PureState.from_vector([0, 0])


def test_povm_accuracy():
    g = stream(4)
    for k in range(8):
        desc = ClassicalDescription.of(PureState.plus(k))
        assert all(qsim.povm_accuracy(desc, PureState.plus(k), g) == 0 for _ in range(50))
    assert all(qsim.povm_accuracy(qsim.NULL, PureState.plus(0), g) == 1 for _ in range(50))
    desc = ClassicalDescription.of(PureState.plus(0))
    freq = np.mean([qsim.povm_accuracy(desc, PureState.plus(1), g) == 0 for _ in range(10_000)])
    assert abs(freq - COS2_PI8) <= 0.02


def test_round_to_set():
    omega = qsim.octant_descriptions()
    for k in range(8):
        assert qsim.round_to_set(omega, omega[k]) == k
    near = PureState.from_vector([1, np.exp(0.1j)])
    assert qsim.round_to_set(omega, near) == 0
    assert qsim.round_to_set(omega, np.eye(2) / 2) == 0
    with pytest.raises(qsim.EmptySet):
        qsim.round_to_set([], near)


def test_round_lemma_instance():
    # Z pi/2 states: pairwise overlap <= 1/2, so eta = 1/2 > 6 sqrt(eps) needs sqrt(eps) < 1/12
    omega = qsim.octant_descriptions(step=2)
    g = stream(6)
    root_eps = 0.08
    for _ in range(200):
        i = int(g.integers(4))
        rho = omega[i].matrix
        t = float(g.uniform(0, root_eps))
        noisy = (1 - t) * rho + t * qsim.random_density(2, g).entries
        assert np.trace(rho @ noisy).real >= 1 - root_eps
        assert qsim.round_to_set(omega, noisy) == i


def test_identity_instrument():
    step = QuantumInstrumentStep({"": [np.eye(2)]})
    rho = PureState.plus(3).density()
    y, post = qsim.run_instrument(step, rho, "", stream(7))
    assert y == ""
    np.testing.assert_allclose(post.entries, rho.entries, atol=1e-12)


def test_measurement_instrument_is_uniform_on_plus():
    step = QuantumInstrumentStep({"0": [np.diag([1, 0])], "1": [np.diag([0, 1])]})
    g = stream(8)
    ones = sum(qsim.run_instrument(step, PureState.plus(0), "", g)[0] == "1" for _ in range(4000))
    assert abs(ones / 4000 - 0.5) < 3 * math.sqrt(0.25 / 4000)


def test_instrument_matches_matrix_arithmetic():
    g = stream(9)
    a = np.array([[1, 0], [0, math.sqrt(0.3)]], complex)
    b = np.array([[0, math.sqrt(0.7)], [0, 0]], complex)
    step = QuantumInstrumentStep({"y": [a, b]})
    rho = qsim.random_density(2, g).entries
    _, post = qsim.run_instrument(step, rho, "", g)
    direct = a @ rho @ a.conj().T + b @ rho @ b.conj().T
    np.testing.assert_allclose(post.entries, direct / np.trace(direct), atol=1e-12)


def test_instrument_not_trace_preserving():
    step = QuantumInstrumentStep({"0": [np.diag([1, 0])]})
    with pytest.raises(qsim.NotTracePreserving):
        qsim.run_instrument(step, PureState.plus(0), "", stream(10))


def test_classical_input_selects_branches():
    step = QuantumInstrumentStep(lambda cin: {cin: [np.eye(2)]}, in_bits=3)
    y, _ = qsim.run_instrument(step, PureState.zeros(1), "101", stream(11))
    assert y == "101"


def test_json_roundtrip():
    s = PureState.plus(5)
    back = PureState.from_json(s.to_json())
    np.testing.assert_allclose(back.amplitudes, s.amplitudes)
    assert '"dim": 2' in s.density().to_json()
