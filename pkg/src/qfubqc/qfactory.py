"""Four- and eight-state QFactory.

The client publishes a trapdoor key ``k``; the server answers with an image
``y`` and a bit string ``b`` and is left holding one BB84 qubit whose
description ``(B1, B2)`` only the trapdoor holder can compute. Two such runs
(the second measured in the ``|+-_{pi/2}>`` basis) are merged into one of the
eight equatorial states.

Message schedule is fixed: ``k -> y -> b`` per four-state run, then a single
``[s1, s2]`` message for the merge.

Engines for the honest server:

``dense``
    statevector over domain and range registers (toy family only).
``sparse``
    samples the post-measurement two-term superposition directly. It asks
    the key pair for the collapsed preimage set, standing in for the physics
    of measuring the image register; nothing derived from it is sent.
"""
from __future__ import annotations

import functools
import hashlib
import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from . import trapdoor as td
from .cc import (RECV, ClassicalChannel, ScheduleViolation, Send, Transcript,
                 decode_value, encode_value, run_two_party)
from .qsim import DensityMatrix, Octant, PureState, QuantumInstrumentStep
from .trapdoor import TrapdoorKeyPair, parity


class LengthMismatch(ValueError):
    pass


class NotSupported(ValueError):
    pass


# server behaviours ---------------------------------------------------------

class Honest:
    def __repr__(self):
        return "Honest"


HONEST = Honest()


@dataclass
class Scripted:
    """Malicious server as a list of instruments, one per outbound message.

    Branch labels are the JSON text of the message. ``schedule`` overrides the
    protocol's R/S pattern (only useful to provoke schedule violations).
    """

    steps: list[QuantumInstrumentStep]
    schedule: Sequence[str] | None = None


ServerBehavior = Honest | Scripted

SCHEDULE_4 = ("R", "S", "S")
SCHEDULE_8 = ("R", "S", "S", "R", "S", "S", "S")


# output formulas -----------------------------------------------------------

def _as_int(bits) -> tuple[int, int | None]:
    if isinstance(bits, (int, np.integer)):
        return int(bits), None
    seq = [int(v) & 1 for v in bits]
    out = 0
    for v in seq:
        out = (out << 1) | v
    return out, len(seq)


def compute_B2(d0: int, b, x, xp, hx: int, hxp: int) -> int:
    """``(d0 * (b . (x ^ x'))) ^ h(x) h(x')``. Bit strings are ints or sequences."""
    (bi, lb), (xi, lx), (pi, lp) = _as_int(b), _as_int(x), _as_int(xp)
    lens = {v for v in (lb, lx, lp) if v is not None}
    if len(lens) > 1:
        raise LengthMismatch(f"bit strings of lengths {sorted(lens)}")
    return (int(d0) & parity(bi & (xi ^ pi))) ^ (int(hx) & int(hxp))


def compute_B2_rotated(d0: int, b: int, x: int, xp: int, hx: int, hxp: int) -> int:
    """Rotated run: output is ``Sdg H^{B1} X^{B2} |0>``.

    With ``d0 = 1`` the relative phase between the two preimages is
    ``(-i)^(|x1| - |x0|) (-1)^(b.z)`` where ``x1`` carries ``h = 1``; an odd
    weight difference is what makes this a ``+-i`` phase.
    """
    if not d0:
        return int(hx)
    x1, x0 = (x, xp) if hx else (xp, x)
    w = int(x1).bit_count() - int(x0).bit_count()
    if w % 2 == 0:
        raise NotSupported("rotated run needs |x xor x'| odd")
    return parity(int(b) & (int(x) ^ int(xp))) ^ int(w % 4 == 3)


def compute_L(B1: int, B2: int, B1p: int, B2p: int, s1: int, s2: int) -> tuple[int, int, int]:
    L1 = B2p ^ B2 ^ (B1 & (s1 ^ s2))
    L2 = B1p ^ ((B2 ^ s2) & B1)
    return L1, L2, B1


def octant_of_L(L: Sequence[int]) -> Octant:
    return Octant(4 * L[0] + 2 * L[1] + L[2])


def merge_octant(B1: int, B2: int, B1p: int, B2p: int, s1: int, s2: int) -> Octant:
    """Angle actually produced by the merge gadget, in units of pi/4.

    Same bits as ``compute_L`` except that ``B1' + B1 (B2 ^ s2)`` is added,
    not xored, into the pi/2 digit; its carry lands on the pi digit.
    """
    return Octant(B1 + 2 * (B1p + (B1 & (B2 ^ s2))) + 4 * (B2p ^ B2 ^ (B1 & (s1 ^ s2))))


# in1 = BB84 qubit, in2 = rotated qubit, ancilla |+>; measure 2 -> s1 then 0 -> s2.
GADGET = (("H", 1), ("T", 2), ("CZ", 0, 1), ("CZ", 0, 2))
GADGET_MEASURE = (2, 0)


def merge_gadget(q1: PureState, q2: PureState, rng, forced: tuple[int, int] | None = None
                 ) -> tuple[int, int, PureState]:
    state = qsim.apply_circuit(q1.tensor(q2, PureState.plus(0)), GADGET)
    s1, state = qsim.measure_rotated(state, 2, 0, rng, None if forced is None else forced[0])
    s2, state = qsim.measure_rotated(state, 0, 0, rng, None if forced is None else forced[1])
    return s1, s2, state


def rotated_bb84(b1: int, b2: int) -> PureState:
    return qsim.apply_circuit(PureState.bb84(b1, b2), [("Sdg", 0)])


# outcomes ------------------------------------------------------------------

def _state_hash(state) -> str | None:
    if state is None:
        return None
    m = qsim.as_matrix(state)
    # global phase free: hash the density matrix
    return hashlib.sha256(np.round(m, 9).astype(np.complex128).tobytes()).hexdigest()[:16]


def key_ref(keys: TrapdoorKeyPair) -> str:
    return hashlib.sha256(keys.public_bytes()).hexdigest()[:16]


@dataclass
class QFactory4Outcome:
    y: object
    b: int
    B1: int
    B2: int
    server_state: PureState | DensityMatrix | None
    transcript: Transcript
    basis: str = "standard"
    inverted: bool = True
    preimages: tuple = ()

    def expected_state(self) -> PureState:
        s = PureState.bb84(self.B1, self.B2)
        return s if self.basis == "standard" else qsim.apply_circuit(s, [("Sdg", 0)])

    def fidelity(self) -> float:
        return qsim.trace_overlap(self.expected_state(), self.server_state)

    def record(self, keys: TrapdoorKeyPair) -> dict:
        return {"keys": key_ref(keys), "family": keys.family_tag, "basis": self.basis,
                "transcript": json.loads(self.transcript.to_json()),
                "outcome": {"B1": self.B1, "B2": self.B2, "inverted": self.inverted},
                "state_hash": _state_hash(self.server_state)}


@dataclass
class QFactory8Outcome:
    L: tuple[int, int, int]
    s1: int
    s2: int
    server_state: PureState | DensityMatrix | None
    sub_outcomes: tuple[QFactory4Outcome, QFactory4Outcome]
    theta: Octant = Octant(0)
    transcript: Transcript = field(default_factory=Transcript)

    @property
    def inverted(self) -> bool:
        return all(o.inverted for o in self.sub_outcomes)

    def fidelity(self) -> float:
        return qsim.trace_overlap(PureState.plus(self.theta), self.server_state)

    def record(self, keys1: TrapdoorKeyPair, keys2: TrapdoorKeyPair) -> dict:
        return {"keys": [key_ref(keys1), key_ref(keys2)],
                "transcript": json.loads(self.transcript.to_json()),
                "outcome": {"L": list(self.L), "theta": int(self.theta),
                            "s1": self.s1, "s2": self.s2, "inverted": self.inverted},
                "state_hash": _state_hash(self.server_state)}


# honest server engines -------------------------------------------------------

def _amp(basis: str, enc: int, b: int) -> complex:
    sign = -1.0 if parity(enc & b) else 1.0
    if basis == "standard":
        return sign
    return sign * (-1j) ** (enc.bit_count() % 4)


@functools.lru_cache(maxsize=32)
def _bra_product(n: int, basis: str) -> np.ndarray:
    delta = 0 if basis == "standard" else 2
    bras = np.array([qsim.plus_vec(delta).conj(), qsim.minus_vec(delta).conj()])
    return functools.reduce(np.kron, [bras] * n)


def _dense_server(keys: TrapdoorKeyPair, basis: str, rng):
    """Statevector run; returns (y, b, target qubit)."""
    if keys.family_tag != "toy":
        raise NotSupported("dense engine needs the toy family")
    k = keys.k
    n, r = k.domain_bits, k.range_bits
    xs = np.arange(1 << n)
    # U_f on H^n|0>|0>: rows index x, columns the image register
    psi = np.zeros((1 << n, 1 << r), dtype=complex)
    psi[xs, k.table().astype(np.int64)] = 2.0 ** (-n / 2)
    # measuring all r image qubits in Z at once samples y from the column weights
    py = np.einsum("xy,xy->y", psi, psi.conj()).real
    y = int(rng.choice(py.shape[0], p=py / py.sum()))
    dom = psi[:, y] / math.sqrt(py[y])
    # |x>|0> -> |x>|h(x)>
    reg = np.zeros((1 << n, 2), dtype=complex)
    reg[xs, k.hardcore_table().astype(np.int64)] = dom
    # product measurement of the n domain qubits: row b of the n-fold bra
    # product gives the target's amplitudes for outcome string b
    amps = _bra_product(n, basis) @ reg
    pb = np.einsum("bt,bt->b", amps, amps.conj()).real
    b = int(rng.choice(pb.shape[0], p=pb / pb.sum()))
    return y, b, PureState(amps[b] / math.sqrt(pb[b]), 1)


def _collapsed_target(keys, pre, b: int, basis: str) -> np.ndarray:
    v = np.zeros(2, dtype=complex)
    for x in pre:
        v[keys.hardcore(x)] += _amp(basis, keys.k.encode(x), b)
    return v


def _sparse_server(keys: TrapdoorKeyPair, basis: str, rng):
    k = keys.k
    x = k.sample_domain(rng)
    y = k.evaluate(x)
    pre = td.preimages(keys, y) or (x,)
    nb = k.domain_bits
    while True:
        b = td.rand_bits(rng, nb)
        v = _collapsed_target(keys, pre, b, basis)
        w = float(np.vdot(v, v).real)
        if rng.random() * len(pre) ** 2 < w:
            break
    return y, b, PureState(v / np.sqrt(w), 1)


def _engine_for(keys, engine: str) -> str:
    if engine == "auto":
        return "dense" if keys.family_tag == "toy" and keys.k.domain_bits <= 6 else "sparse"
    if engine not in ("dense", "sparse"):
        raise ValueError(f"unknown engine {engine!r}")
    return engine


def _wire(y):
    return list(y) if isinstance(y, tuple) else y


def _label(value) -> str:
    return encode_value(value).decode()


# coroutines -----------------------------------------------------------------

def _client_4states(keys: TrapdoorKeyPair, basis: str, rng, box: dict):
    yield Send({"k": keys.public_bytes()})
    y = yield RECV
    b = yield RECV
    box.update(_client_outputs(keys, y, b, basis, rng))
    return box["B1"], box["B2"]


def _client_outputs(keys: TrapdoorKeyPair, y, b, basis: str, rng) -> dict:
    d0 = keys.d0
    y_key = tuple(y) if isinstance(y, list) else y
    try:
        if not isinstance(b, int) or b < 0:
            raise td.NotTwoPreimages("b is not a bit string")
        x, xp = td.invert(keys, y_key)
    except (td.NotTwoPreimages, TypeError, ValueError):
        return {"y": y_key, "b": b, "B1": d0, "B2": int(rng.integers(2)),
                "inverted": False, "preimages": ()}
    ex, ep = keys.k.encode(x), keys.k.encode(xp)
    hx, hp = keys.hardcore(x), keys.hardcore(xp)
    B1 = hx ^ hp
    if basis == "standard":
        B2 = compute_B2(B1, b, ex, ep, hx, hp)
    else:
        B2 = compute_B2_rotated(B1, b, ex, ep, hx, hp)
    return {"y": y_key, "b": b, "B1": B1, "B2": B2, "inverted": True, "preimages": (x, xp)}


def _honest_server_4(oracle: TrapdoorKeyPair, basis: str, engine: str, rng, box: dict):
    msg = yield RECV
    if "k" not in (msg or {}):
        raise ScheduleViolation("expected the public key first")
    if _engine_for(oracle, engine) == "dense":
        y, b, state = _dense_server(oracle, basis, rng)
    else:
        y, b, state = _sparse_server(oracle, basis, rng)
    yield Send(_wire(y))
    yield Send(int(b))
    box["state"] = state
    return state


def _scripted_server(behavior: Scripted, schedule: Sequence[str], rng, box: dict,
                     start=None):
    sched = tuple(behavior.schedule or schedule)
    if behavior.schedule is None and sched.count("S") != len(behavior.steps):
        raise ScheduleViolation(f"{len(behavior.steps)} steps for {sched.count('S')} messages")
    rho = qsim.as_matrix(start) if start is not None else np.ones((1, 1), dtype=complex)
    inbound: list[str] = []
    steps = iter(behavior.steps)
    for act in sched:
        if act == "R":
            got = yield RECV
            inbound.append(_label(got))
            continue
        step = next(steps, None)
        if step is None:
            raise ScheduleViolation("scripted server ran out of steps")
        label, dm = qsim.run_instrument(step, rho, "".join(inbound), rng)
        rho = dm.entries
        inbound = []
        yield Send(json.loads(label))
    state = DensityMatrix(rho)
    box["state"] = state
    return state


# protocol runs ---------------------------------------------------------------

def client_4states(keys, basis="standard", rng=None, box=None):
    return _client_4states(keys, basis, rng, {} if box is None else box)


def server_4states(keys, behavior: ServerBehavior = HONEST, basis="standard",
                   engine="auto", rng=None, box=None):
    box = {} if box is None else box
    if isinstance(behavior, Scripted):
        return _scripted_server(behavior, SCHEDULE_4, rng, box)
    return _honest_server_4(keys, basis, engine, rng, box)


def run_4states(keys: TrapdoorKeyPair, behavior: ServerBehavior = HONEST,
                basis: str = "standard", rng=None, engine: str = "auto",
                transcript: Transcript | None = None) -> QFactory4Outcome:
    if basis not in ("standard", "rotated"):
        raise ValueError(f"basis must be 'standard' or 'rotated', got {basis!r}")
    rc, rs = rng.spawn(2)
    cbox, sbox = {}, {}
    tr = transcript if transcript is not None else Transcript()
    run_two_party(client_4states(keys, basis, rc, cbox),
                  server_4states(keys, behavior, basis, engine, rs, sbox),
                  ClassicalChannel(tr))
    return QFactory4Outcome(cbox["y"], cbox["b"], cbox["B1"], cbox["B2"], sbox.get("state"),
                            tr, basis, cbox["inverted"], cbox["preimages"])


def _client_8states(keys1, keys2, rng, box: dict):
    r1, r2 = rng.spawn(2)
    b1, b2 = {}, {}
    yield from _client_4states(keys1, "standard", r1, b1)
    yield from _client_4states(keys2, "rotated", r2, b2)
    s = yield RECV
    try:
        s1, s2 = (int(v) & 1 for v in s)
    except (TypeError, ValueError):
        s1, s2 = 0, 0
    box.update(sub=(b1, b2), s1=s1, s2=s2)
    return s1, s2


def _honest_server_8(keys1, keys2, engine, rng, box: dict):
    r1, r2, rg = rng.spawn(3)
    a, c = {}, {}
    q1 = yield from _honest_server_4(keys1, "standard", engine, r1, a)
    q2 = yield from _honest_server_4(keys2, "rotated", engine, r2, c)
    s1, s2, out = merge_gadget(q1, q2, rg)
    yield Send([s1, s2])
    box.update(state=out, sub_states=(q1, q2))
    return out


def run_8states(keys1: TrapdoorKeyPair, keys2: TrapdoorKeyPair,
                behavior: ServerBehavior = HONEST, rng=None, engine: str = "auto",
                transcript: Transcript | None = None) -> QFactory8Outcome:
    rc, rs = rng.spawn(2)
    cbox, sbox = {}, {}
    tr = transcript if transcript is not None else Transcript()
    if isinstance(behavior, Scripted):
        server = _scripted_server(behavior, SCHEDULE_8, rs, sbox)
    else:
        server = _honest_server_8(keys1, keys2, engine, rs, sbox)
    run_two_party(_client_8states(keys1, keys2, rc, cbox), server, ClassicalChannel(tr))
    (c1, c2), s1, s2 = cbox["sub"], cbox["s1"], cbox["s2"]
    subs = tuple(
        QFactory4Outcome(c["y"], c["b"], c["B1"], c["B2"], st, tr, basis, c["inverted"],
                         c["preimages"])
        for c, st, basis in zip((c1, c2), sbox.get("sub_states", (None, None)),
                                ("standard", "rotated")))
    L = compute_L(c1["B1"], c1["B2"], c2["B1"], c2["B2"], s1, s2)
    theta = merge_octant(c1["B1"], c1["B2"], c2["B1"], c2["B2"], s1, s2)
    return QFactory8Outcome(L, s1, s2, sbox.get("state"), subs, theta, tr)


# honest server as instruments (for classical emulation) ---------------------

def honest_server_steps(keys: TrapdoorKeyPair, basis: str = "standard"
                        ) -> list[QuantumInstrumentStep]:
    """Kraus form of the honest server: ``y`` step then ``b`` step (toy family)."""
    if keys.family_tag != "toy":
        raise NotSupported("instrument form needs an enumerable domain")
    k = keys.k
    n = k.domain_bits
    table = k.table()
    norm = 2.0 ** (-n / 2)
    step_y = {}
    for y in np.unique(table):
        col = np.zeros((1 << n, 1), dtype=complex)
        col[table == y, 0] = norm
        step_y[_label(int(y))] = [col]
    h = k.hardcore_table().astype(np.int64)
    xs = np.arange(1 << n)
    weights = np.array([int(x).bit_count() for x in xs])
    base = norm * ((-1j) ** (weights % 4) if basis == "rotated" else np.ones(1 << n))
    step_b = {}
    for b in range(1 << n):
        signs = 1.0 - 2.0 * (np.bitwise_count(xs & b) & 1)
        K = np.zeros((2, 1 << n), dtype=complex)
        K[h, xs] = base * signs
        step_b[_label(b)] = [K]
    return [QuantumInstrumentStep(step_y, label="y"), QuantumInstrumentStep(step_b, label="b")]


def random_scripted_steps(keys: TrapdoorKeyPair, rng, branches: int = 3,
                          dim: int = 2) -> list[QuantumInstrumentStep]:
    """A random two-step malicious server with plausible-looking labels."""
    k = keys.k
    ys = [_label(_wire(k.evaluate(k.sample_domain(rng)))) for _ in range(branches)]
    bs = [_label(td.rand_bits(rng, k.domain_bits)) for _ in range(branches)]
    ys, bs = list(dict.fromkeys(ys)), list(dict.fromkeys(bs))
    return [_random_step(ys, 1, dim, rng, "y"), _random_step(bs, dim, 2, rng, "b")]


def _random_step(labels, d_in, d_out, rng, name) -> QuantumInstrumentStep:
    kr = len(labels)
    g = rng.normal(size=(d_out * kr, d_in)) + 1j * rng.normal(size=(d_out * kr, d_in))
    V, _ = np.linalg.qr(g)
    V = V[:, :d_in]
    blocks = {lab: [V[i * d_out:(i + 1) * d_out, :]] for i, lab in enumerate(labels)}
    return QuantumInstrumentStep(blocks, label=name)


def fixed_scripted_steps(values: Sequence) -> list[QuantumInstrumentStep]:
    """Server that announces ``values`` in order no matter what, holding ``|0>``."""
    out = []
    for i, v in enumerate(values):
        lab = _label(v)
        if i == 0:
            ops = [np.array([[1.0], [0.0]], dtype=complex)]
        else:
            ops = [np.eye(2, dtype=complex)]
        out.append(QuantumInstrumentStep({lab: ops}, label=f"echo{i}"))
    return out
