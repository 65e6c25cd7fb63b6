"""A two-interface Constructive-Cryptography toolkit.

Resources expose interfaces ``A`` (left, client) and ``B`` (right, server).
A session is driven by ``Resource.run(inputs)`` and returns the outputs at
both interfaces together with the session :class:`Transcript`. Converters
rewrite what crosses one interface; a :class:`Filter` is the converter that
first emits ``c = 0`` and then forwards.

Interactive protocols are pairs of generator coroutines executed by
:func:`run_two_party` over a channel. A :class:`ClassicalChannel` refuses
quantum handles, so "the parties only talk classically" holds by
construction.
"""
from __future__ import annotations

import json
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np
from scipy.stats import binomtest

from . import qsim
from .qsim import Octant, PureState
from . import trapdoor as td

KIND_TAG = {"classical": 0x01, "qhandle": 0x02}
TAG_KIND = {v: k for k, v in KIND_TAG.items()}


class CCError(Exception):
    pass


class ChannelError(CCError):
    pass


class ArityMismatch(CCError):
    pass


class MissingDeviation(CCError):
    pass


class ScheduleViolation(CCError):
    pass


class _Err:
    """The ERR protocol constant (data, not an exception)."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "ERR"


ERR = _Err()


def _jsonable(obj):
    if obj is ERR:
        return {"__err__": True}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bytes, bytearray)):
        return {"__hex__": bytes(obj).hex()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def encode_value(obj) -> bytes:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":")).encode()


def _revive(obj):
    if isinstance(obj, dict):
        if obj.get("__err__"):
            return ERR
        if "__hex__" in obj:
            return bytes.fromhex(obj["__hex__"])
        return {k: _revive(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_revive(v) for v in obj]
    return obj


def decode_value(payload: bytes):
    return _revive(json.loads(payload.decode()))


@dataclass(frozen=True)
class Message:
    round: int
    sender: str
    kind: str
    payload: bytes
    handle: Any = field(default=None, compare=False, repr=False)

    def frame(self) -> bytes:
        return bytes([KIND_TAG[self.kind]]) + len(self.payload).to_bytes(4, "big") + self.payload

    @property
    def value(self):
        return decode_value(self.payload) if self.kind == "classical" else self.handle

    def key(self) -> tuple:
        return (self.sender, self.kind, self.payload)


def parse_frames(data: bytes) -> list[tuple[str, bytes]]:
    out, i = [], 0
    while i < len(data):
        kind = TAG_KIND[data[i]]
        ln = int.from_bytes(data[i + 1:i + 5], "big")
        out.append((kind, data[i + 5:i + 5 + ln]))
        i += 5 + ln
    return out


@dataclass
class Transcript:
    session: int = 0
    messages: list[Message] = field(default_factory=list)

    def append(self, sender: str, value=None, kind: str = "classical",
               payload: bytes | None = None, handle=None) -> Message:
        if kind not in KIND_TAG:
            raise ChannelError(f"unknown message kind {kind!r}")
        if payload is None:
            # handles are numbered among quantum messages only, so a filter's
            # extra classical bit does not shift them
            nq = sum(m.kind == "qhandle" for m in self.messages)
            payload = encode_value(value) if kind == "classical" else f"qhandle:{nq}".encode()
        msg = Message(len(self.messages), sender, kind, payload, handle)
        self.messages.append(msg)
        return msg

    def extend(self, other: "Transcript") -> None:
        for m in other.messages:
            self.messages.append(Message(len(self.messages), m.sender, m.kind, m.payload, m.handle))

    def values(self, sender: str | None = None, kind: str = "classical") -> list:
        return [m.value for m in self.messages
                if m.kind == kind and (sender is None or m.sender == sender)]

    def keys(self) -> list[tuple]:
        return [m.key() for m in self.messages]

    def to_bytes(self) -> bytes:
        return b"".join(m.frame() for m in self.messages)

    def to_json(self) -> str:
        return json.dumps({
            "session": int(self.session),
            "messages": [{"round": m.round, "from": m.sender, "kind": m.kind,
                          "payload": m.payload.hex()} for m in self.messages],
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Transcript":
        d = json.loads(text)
        t = cls(d["session"])
        for m in d["messages"]:
            t.messages.append(Message(m["round"], m["from"], m["kind"], bytes.fromhex(m["payload"])))
        return t

    def __eq__(self, other):
        return isinstance(other, Transcript) and self.session == other.session \
            and [(m.round, *m.key()) for m in self.messages] == \
                [(m.round, *m.key()) for m in other.messages]


class ClassicalChannel:
    """Relays classical messages between A and B and records them."""

    allow_quantum = False

    def __init__(self, transcript: Transcript | None = None):
        self.transcript = transcript if transcript is not None else Transcript()

    def send(self, sender: str, value=None, kind: str = "classical", handle=None) -> Message:
        if kind != "classical" and not self.allow_quantum:
            raise ChannelError("classical channel cannot carry quantum handles")
        return self.transcript.append(sender, value, kind=kind, handle=handle)


class QuantumChannel(ClassicalChannel):
    allow_quantum = True


# two-party execution ------------------------------------------------------

class Send(NamedTuple):
    value: Any = None
    kind: str = "classical"
    handle: Any = None


class _Recv:
    def __repr__(self):
        return "RECV"


RECV = _Recv()


def run_two_party(client, server, channel: ClassicalChannel) -> dict[str, Any]:
    """Drive two generator coroutines that yield ``Send(...)`` or ``RECV``.

    A party blocked on ``RECV`` is resumed with the peer's message value (or
    handle). Each coroutine's return value becomes its interface output.
    """
    gens = {"A": client, "B": server}
    state: dict[str, Any] = {}
    out: dict[str, Any] = {}
    for side, g in gens.items():
        try:
            state[side] = next(g)
        except StopIteration as stop:
            out[side] = stop.value
    other = {"A": "B", "B": "A"}
    while len(out) < 2:
        senders = [s for s in ("A", "B") if s not in out and isinstance(state[s], Send)]
        if not senders:
            raise ScheduleViolation("deadlock: no party is sending")
        if len(senders) == 2:
            raise ScheduleViolation("both parties tried to send in the same round")
        side = senders[0]
        peer = other[side]
        act: Send = state[side]
        msg = channel.send(side, act.value, kind=act.kind, handle=act.handle)
        if peer in out or state.get(peer) is not RECV:
            raise ScheduleViolation(f"{side} sent {msg.round} while {peer} was not listening")
        delivered = decode_value(msg.payload) if msg.kind == "classical" else msg.handle
        for s, val in ((peer, delivered), (side, None)):
            try:
                state[s] = gens[s].send(val)
            except StopIteration as stop:
                out[s] = stop.value
    return out


# resources and converters ---------------------------------------------------

@dataclass
class Outcome:
    outputs: dict[str, Any]
    transcript: Transcript


class Resource:
    """Two-interface system. Deterministic given its stream and the inputs."""

    arity = 1

    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng

    def run(self, inputs: dict[str, Any] | None = None,
            rng: np.random.Generator | None = None,
            transcript: Transcript | None = None) -> Outcome:
        rng = rng if rng is not None else self.rng
        tr = transcript if transcript is not None else Transcript()
        outputs = self._session(inputs or {}, rng, tr)
        return Outcome(outputs, tr)

    def _session(self, inputs, rng, transcript) -> dict[str, Any]:  # pragma: no cover
        raise NotImplementedError


class Converter:
    """Adapter on one interface. Subclasses override ``inward``/``outward``."""

    side = "A"

    def __init__(self, side: str | None = None):
        if side is not None:
            self.side = side

    def inward(self, outer_input, rng, transcript):
        return outer_input

    def outward(self, inner_output, rng, transcript):
        return inner_output


class Identity(Converter):
    pass


class Filter(Converter):
    """Emits the activation bit ``c = 0`` and forwards payloads unchanged."""

    side = "B"

    def inward(self, outer_input, rng, transcript):
        transcript.append("B", {"c": 0})
        inner = dict(outer_input or {})
        inner["c"] = 0
        return inner


class FunctionConverter(Converter):
    def __init__(self, side: str, inward=None, outward=None):
        super().__init__(side)
        self._in, self._out = inward, outward

    def inward(self, outer_input, rng, transcript):
        return self._in(outer_input) if self._in else outer_input

    def outward(self, inner_output, rng, transcript):
        return self._out(inner_output) if self._out else inner_output


class Chain(Converter):
    """``outer . inner`` as one converter on the same interface."""

    def __init__(self, outer: Converter, inner: Converter):
        if outer.side != inner.side:
            raise ArityMismatch("chained converters must share an interface")
        super().__init__(outer.side)
        self.outer, self.inner = outer, inner

    def inward(self, outer_input, rng, transcript):
        return self.inner.inward(self.outer.inward(outer_input, rng, transcript), rng, transcript)

    def outward(self, inner_output, rng, transcript):
        return self.outer.outward(self.inner.outward(inner_output, rng, transcript), rng, transcript)


class Attached(Resource):
    """``conv`` plugged onto one interface of ``inner``."""

    def __init__(self, conv: Converter, inner: Resource):
        if conv.side not in ("A", "B"):
            raise ArityMismatch(f"converter side {conv.side!r}")
        super().__init__(inner.rng)
        self.conv, self.inner = conv, inner
        self.arity = inner.arity

    def _session(self, inputs, rng, transcript):
        side = self.conv.side
        inner_inputs = dict(inputs)
        inner_inputs[side] = self.conv.inward(inputs.get(side), rng, transcript)
        res = self.inner.run(inner_inputs, rng, transcript)
        outs = dict(res.outputs)
        outs[side] = self.conv.outward(outs.get(side), rng, transcript)
        return outs


class Parallel(Resource):
    """``R || R'``: inputs and outputs at each interface are tuples."""

    def __init__(self, parts: Sequence[Resource]):
        super().__init__(None)
        self.parts = list(parts)
        self.arity = len(self.parts)

    def _session(self, inputs, rng, transcript):
        outs: dict[str, list] = {"A": [], "B": []}
        subs = rng.spawn(len(self.parts)) if rng is not None else [None] * len(self.parts)
        for side in ("A", "B"):
            v = inputs.get(side)
            if v is not None and len(v) != len(self.parts):
                raise ArityMismatch(f"{len(v)} inputs for {len(self.parts)} resources")
        for i, (part, sub) in enumerate(zip(self.parts, subs)):
            ins = {s: (inputs[s][i] if inputs.get(s) is not None else None) for s in ("A", "B")}
            res = part.run({k: v for k, v in ins.items() if v is not None}, sub, transcript)
            for s in ("A", "B"):
                outs[s].append(res.outputs.get(s))
        return {s: tuple(v) for s, v in outs.items()}


def compose(mode: str, partsA: Sequence = (), partsB: Sequence = (),
            resource: Resource | None = None) -> Resource:
    """Serial: ``partsA[0]...partsA[-1] R partsB[-1]...partsB[0]`` (outermost first).

    Parallel: ``partsA`` is the list of resources to run side by side.
    """
    if mode == "serial":
        if resource is None:
            raise ArityMismatch("serial composition needs a resource")
        r = resource
        for conv in reversed(list(partsA)):
            if conv.side != "A":
                raise ArityMismatch("left converter attached to the right interface")
            r = Attached(conv, r)
        for conv in reversed(list(partsB)):
            if conv.side != "B":
                raise ArityMismatch("right converter attached to the left interface")
            r = Attached(conv, r)
        return r
    if mode == "parallel":
        parts = list(partsA) + list(partsB)
        if len(parts) < 2:
            raise ArityMismatch("parallel composition needs two resources")
        return Parallel(parts)
    raise ValueError(f"unknown composition mode {mode!r}")


class TwoPartyProtocol(Resource):
    """``pi_A C pi_B``: two coroutine factories joined by a channel."""

    def __init__(self, client: Callable, server: Callable, channel_cls=ClassicalChannel,
                 rng=None):
        super().__init__(rng)
        self.client, self.server, self.channel_cls = client, server, channel_cls

    def _session(self, inputs, rng, transcript):
        ra, rb = rng.spawn(2)
        ch = self.channel_cls(transcript)
        return run_two_party(self.client(ra, inputs.get("A")), self.server(rb, inputs.get("B")), ch)


# ideal resources ----------------------------------------------------------

class IdealSZPi2(Resource):
    """Picks theta in Z pi/2; theta goes left, |+_theta> goes right."""

    def _session(self, inputs, rng, transcript):
        theta = Octant(2 * int(rng.integers(4)))
        state = PureState.plus(theta)
        transcript.append("R", int(theta))
        transcript.append("R", kind="qhandle", handle=state)
        return {"A": theta, "B": state}


def ideal_s_zpi2(rng=None) -> IdealSZPi2:
    return IdealSZPi2(rng)


class IdealRSPV(Resource):
    """Verifiable RSP: W in {X, Z} on the left, filtered bit c on the right."""

    def _session(self, inputs, rng, transcript):
        W = inputs.get("A", "X")
        c = int((inputs.get("B") or {}).get("c", 0))
        if c == 1:
            transcript.append("R", ERR)
            transcript.append("R", ERR)
            return {"A": ERR, "B": ERR}
        if W == "Z":
            b = int(rng.integers(2))
            right = qsim.DensityMatrix(np.diag([1.0 - b, float(b)]).astype(complex))
            left = b
        elif W == "X":
            left = Octant(int(rng.integers(8)))
            right = PureState.plus(left).density()
        else:
            raise ValueError(f"basis W must be 'X' or 'Z', got {W!r}")
        transcript.append("R", int(left))
        transcript.append("R", kind="qhandle", handle=right)
        return {"A": left, "B": right}


def ideal_rsp_v(W: str, c: int, rng) -> tuple[Any, Any]:
    out = IdealRSPV(rng).run({"A": W, "B": {"c": c}}).outputs
    return out["A"], out["B"]


def _octant_bits(phi: int) -> str:
    return format(int(phi) % 8, "03b")


class IdealSUBQC1(Resource):
    """Single-angle blind computation; c = 1 hands control to (xi, rho)."""

    def _session(self, inputs, rng, transcript):
        phi = Octant(inputs.get("A", 0))
        right = inputs.get("B") or {}
        c = int(right.get("c", 0))
        transcript.append("A", int(phi))
        if c == 0:
            s, _ = qsim.measure_rotated(PureState.plus(0), 0, phi, rng)
        else:
            dev = right.get("deviation")
            if dev is None:
                raise MissingDeviation("c = 1 requires a deviation (xi, rho)")
            step, rho = dev
            y, _ = qsim.run_instrument(step, rho, _octant_bits(phi), rng)
            s = int(y[-1])
        transcript.append("R", s)
        return {"A": s, "B": None}


def ideal_s_ubqc1(phi: int, c: int = 0, deviation=None, rng=None) -> int:
    if c == 1 and deviation is None:
        raise MissingDeviation("c = 1 requires a deviation (xi, rho)")
    inputs = {"A": phi, "B": {"c": c, "deviation": deviation}}
    return IdealSUBQC1(rng).run(inputs).outputs["A"]


@dataclass
class RSP4Session:
    B1: int
    B2: int
    state: PureState | None
    keys: td.TrapdoorKeyPair | None = None
    y0: np.ndarray | None = None


class IdealRSP4CC(Resource):
    """Fully leaky four-state RSP: honest c = 0 ships the state, c = 1 leaks (pk, y0)."""

    def __init__(self, n: int = 12, rng=None):
        super().__init__(rng)
        self.n = n

    def _session(self, inputs, rng, transcript):
        right = inputs.get("B") or {}
        c = int(right.get("c", 0))
        B1 = int(rng.integers(2))
        if c == 0:
            B2 = int(rng.integers(2))
            state = PureState.bb84(B1, B2)
            transcript.append("R", kind="qhandle", handle=state)
            sess = RSP4Session(B1, B2, state)
        else:
            f = right.get("deviation")
            if f is None:
                raise MissingDeviation("c = 1 requires the deviation f")
            kr, fr = rng.spawn(2)
            keys = td.lwe_gen(td.LWEParams(n=self.n, m=self.n), kr, B1=B1)
            transcript.append("R", {"pk": keys.public_bytes(), "y0": keys.k.y0})
            B2 = int(f(keys, B1, keys.k.y0, fr))
            sess = RSP4Session(B1, B2, None, keys, keys.k.y0)
        transcript.append("R", [sess.B1, sess.B2])
        return {"A": (sess.B1, sess.B2), "B": sess}


def ideal_rsp4_cc(n: int = 12, c: int = 0, rng=None, deviation=None) -> RSP4Session:
    out = IdealRSP4CC(n, rng).run({"B": {"c": c, "deviation": deviation}})
    return out.outputs["B"]


# distinguishing advantage -------------------------------------------------

@dataclass
class AdvantageEstimate:
    trials: int
    wins: int
    advantage: float
    ci95: tuple[float, float]

    def to_dict(self) -> dict:
        return {"trials": self.trials, "wins": self.wins, "advantage": self.advantage,
                "ci95": list(self.ci95)}


def wilson(wins: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(wins), int(trials)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def estimate_advantage(distinguisher: Callable, sysA, sysB, trials: int, rng) -> AdvantageEstimate:
    """A fair coin picks the system; ``distinguisher(system, rng)`` guesses 0 (A) or 1 (B).

    Systems are anything the distinguisher knows how to query (usually a
    Resource or a zero-argument session factory).
    """
    if trials < 100:
        raise ValueError("estimate_advantage needs at least 100 trials")
    wins = 0
    for i in range(trials):
        coin_rng, trial_rng = rng.spawn(2)
        coin = int(coin_rng.integers(2))
        guess = int(distinguisher(sysB if coin else sysA, trial_rng))
        wins += guess == coin
    lo, hi = wilson(wins, trials)
    adv = min(1.0, max(-1.0, 2 * wins / trials - 1))
    return AdvantageEstimate(trials, wins, adv, (2 * lo - 1, 2 * hi - 1))


def chi_square_uniform_p(counts: Sequence[int]) -> float:
    from scipy.stats import chisquare
    return float(chisquare(np.asarray(counts, dtype=float)).pvalue)


def independence_p(table: np.ndarray) -> float:
    from scipy.stats import chi2_contingency
    return float(chi2_contingency(np.asarray(table, dtype=float)).pvalue)


