import json

import numpy as np
import pytest

import oracle
from qfubqc import ubqc
from qfubqc.qsim import Octant
from qfubqc.rng import stream

# exact distributions from oracle.mbqc_distribution (full graph state, no
# column window), frozen here
FROZEN = {
    (1, 1, ((1,),)): {"0": 0.853553390593, "1": 0.146446609407},
    (1, 2, ((0, 0),)): {"0": 0.5, "1": 0.5},
    (1, 2, ((2, 2),)): {"0": 1.0},
    (2, 2, ((1, 3), (5, 2))): {"00": 0.109834957055, "01": 0.640165042945,
                               "10": 0.036611652352, "11": 0.213388347648},
    (2, 4, ((1, 2, 3, 4), (5, 6, 7, 0))): {"00": 0.125, "01": 0.021446609407,
                                           "10": 0.728553390593, "11": 0.125},
}

# brickwork template for 2x5, written out by hand
EDGES_2x5 = {((i, j), (i, j + 1)) for i in (1, 2) for j in range(1, 5)} | \
    {((1, 3), (2, 3)), ((1, 5), (2, 5))}


def test_brickwork_small():
    p = ubqc.build_brickwork(1, 1)
    assert p.edges == [] and p.x_deps[(1, 1)] == set() and p.z_deps[(1, 1)] == set()
    p = ubqc.build_brickwork(1, 2)
    assert p.x_deps[(1, 2)] == {(1, 1)}
    p = ubqc.build_brickwork(2, 5)
    assert len(p.nodes) == 10
    assert set(p.edges) == EDGES_2x5
    with pytest.raises(ubqc.BadDims):
        ubqc.build_brickwork(0, 3)
    with pytest.raises(ubqc.BadDims):
        ubqc.build_brickwork(2, 2, [[1, 2, 3]])


def test_brickwork_bricks_alternate():
    edges = set(ubqc.build_brickwork(4, 9).edges)
    vertical = sorted((a, b) for a, b in edges if a[1] == b[1])
    # rows 1-2 bridge at columns 3,5; rows 2-3 at 7,9 (1 excluded); rows 3-4 like 1-2
    assert vertical == sorted([((1, 3), (2, 3)), ((1, 5), (2, 5)), ((2, 7), (3, 7)),
                               ((2, 9), (3, 9)), ((3, 3), (4, 3)), ((3, 5), (4, 5))])


def test_flow_order_is_topological():
    p = ubqc.build_brickwork(3, 6)
    p.validate()
    pos = {v: k for k, v in enumerate(p.order)}
    assert p.order == sorted(p.order, key=lambda v: (v[1], v[0]))
    for v in p.order:
        assert all(pos[d] < pos[v] for d in p.x_deps[v] | p.z_deps[v])


def test_explicit_deps_take_precedence():
    p = ubqc.build_brickwork(1, 3, z_deps={(1, 3): {(1, 1)}}, x_deps={(1, 2): set()})
    assert p.z_deps[(1, 3)] == {(1, 1)} and p.x_deps[(1, 2)] == set()
    with pytest.raises(ubqc.BadDims):
        ubqc.build_brickwork(1, 3, x_deps={(1, 2): {(1, 3)}})


def test_pattern_json_roundtrip():
    p = ubqc.build_brickwork(2, 4, [[1, 2, 3, 4], [5, 6, 7, 0]])
    q = ubqc.MeasurementPattern.from_json(p.to_json())
    assert q.phi == p.phi and q.x_deps == p.x_deps and q.z_deps == p.z_deps
    d = {"n": 1, "m": 2, "phi": [[3, 1]]}
    assert ubqc.pattern_from_dict(json.loads(json.dumps(d))).phi[(1, 1)] == 3


def test_angle_update_examples():
    for phi in range(8):
        for theta in range(8):
            assert ubqc.angle_update(phi, theta, 0, 0, 0) == Octant(phi + theta)
            assert ubqc.angle_update(phi, theta, 0, 0, 1) == Octant(phi + theta + 4)
    assert ubqc.angle_update(1, 2, 1, 1, 0) == 5


@pytest.mark.parametrize("phi", range(8))
def test_delta_uniform(phi):
    for sx in (0, 1):
        for sz in (0, 1):
            assert ubqc.delta_is_uniform(phi, sx, sz)


def _oracle_dist(n, m, phi):
    p = ubqc.build_brickwork(n, m, phi)
    return oracle.mbqc_distribution(n, m, {v: int(a) for v, a in p.phi.items()}, p.edges,
                                    p.x_deps, p.z_deps)


@pytest.mark.parametrize("key", list(FROZEN))
def test_oracle_reproduces_frozen(key):
    n, m, phi = key
    got = _oracle_dist(n, m, [list(r) for r in phi])
    assert got.keys() == FROZEN[key].keys()
    for k, v in FROZEN[key].items():
        assert got[k] == pytest.approx(v, abs=1e-11)


@pytest.mark.parametrize("key", list(FROZEN))
def test_reference_mbqc_exact(key):
    n, m, phi = key
    ref = ubqc.reference_mbqc(ubqc.build_brickwork(n, m, [list(r) for r in phi]))
    for k, v in FROZEN[key].items():
        assert ref.get(k, 0.0) == pytest.approx(v, abs=1e-11)
    assert sum(ref.values()) == pytest.approx(1)


def test_reference_monte_carlo_and_too_large():
    p = ubqc.build_brickwork(2, 7)
    with pytest.raises(ubqc.TooLarge):
        ubqc.reference_mbqc(p)
    mc = ubqc.reference_mbqc(p, samples=2000, rng=stream(400))
    assert sum(mc.values()) == pytest.approx(1)
    with pytest.raises(ubqc.TooLarge):
        ubqc.reference_mbqc(ubqc.build_brickwork(7, 1))


def test_single_node_zero_angle_is_deterministic():
    p = ubqc.build_brickwork(1, 1, [[0]])
    for g in stream(401).spawn(200):
        out, sess = ubqc.run_ubqc(p, ubqc.QuantumChannel, rng=g)
        assert out == (0,)


def test_one_by_two_deterministic_pattern():
    p = ubqc.build_brickwork(1, 2, [[2, 2]])
    ref = ubqc.reference_mbqc(p)
    assert ref.keys() == {"0"} and ref["0"] == pytest.approx(1, abs=1e-12)
    outs = [ubqc.run_ubqc(p, rng=g)[0] for g in stream(402).spawn(1000)]
    assert set(outs) == {(0,)}


def test_session_invariants():
    p = ubqc.build_brickwork(2, 4, [[1, 2, 3, 4], [5, 6, 7, 0]])
    for g in stream(403).spawn(50):
        out, sess = ubqc.run_ubqc(p, rng=g)
        for v in p.nodes:
            assert sess.s_bar[v] == sess.s[v] ^ sess.r[v]
            sx = sum(sess.s_bar[u] for u in p.x_deps[v]) & 1
            sz = sum(sess.s_bar[u] for u in p.z_deps[v]) & 1
            assert sess.deltas[v] == ubqc.angle_update(p.phi[v], sess.thetas[v], sess.r[v], sx, sz)
        assert out == tuple(sess.s_bar[v] for v in p.output_nodes())
        assert sess.output_string() == "".join(map(str, out))
        json.dumps(sess.to_dict())


def test_blind_run_matches_reference_2x4():
    p = ubqc.build_brickwork(2, 4, [[1, 2, 3, 4], [5, 6, 7, 0]])
    emp = ubqc.sample_outputs(p, ubqc.QuantumChannel, 4000, stream(404))
    assert ubqc.total_variation(emp, ubqc.reference_mbqc(p)) <= 0.03


def test_source_swap_2x2():
    p = ubqc.build_brickwork(2, 2, [[1, 3], [5, 2]])
    qc = ubqc.sample_outputs(p, ubqc.QuantumChannel, 10_000, stream(405))
    qfs = ubqc.sample_outputs(p, ubqc.QFactory8Source(), 10_000, stream(406))
    assert ubqc.total_variation(qc, qfs) <= 0.02


def test_column_register_width():
    p = ubqc.build_brickwork(2, 6)
    from qfubqc.qsim import PureState
    reg = ubqc.ColumnRegister(p, lambda v: PureState.plus(0))
    g = stream(407)
    widest = 0
    for v in p.order:
        reg.measure(v, 0, g)
        widest = max(widest, reg.state.qubit_count + 1)
    assert widest <= 2 * p.n


def test_bad_server():
    with pytest.raises(ubqc.AdversaryProtocolViolation):
        ubqc.run_ubqc(ubqc.build_brickwork(1, 1), behavior=object(), rng=stream(1))

    class Liar(ubqc.UBQCServer):
        def measure(self, node, delta):
            return 7

    with pytest.raises(ubqc.AdversaryProtocolViolation):
        ubqc.run_ubqc(ubqc.build_brickwork(1, 1), behavior=Liar(), rng=stream(1))
