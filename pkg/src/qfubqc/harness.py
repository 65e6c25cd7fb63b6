"""Security experiments run as code.

Every experiment returns a :class:`GameReport` (win counts with a Wilson
interval) or a :class:`DescriberResult`. Trials draw from independent child
streams of the ``rng`` they are given.
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import qfactory as qf
from . import qsim
from . import trapdoor as td
from . import ubqc
from .cc import Transcript, decode_value, wilson
from .qsim import ClassicalDescription, DensityMatrix, Octant, PureState


class HarnessError(Exception):
    pass


class BadIndex(HarnessError):
    pass


class TranscriptMismatch(HarnessError):
    pass


class NotSupported(HarnessError):
    pass


AdversaryProtocolViolation = ubqc.AdversaryProtocolViolation


@dataclass
class GameReport:
    game_id: str
    trials: int
    wins: int
    win_rate: float
    ci95: tuple[float, float]
    notes: str = ""
    baseline: float | None = None
    rows: list = field(default_factory=list, repr=False)

    @classmethod
    def from_counts(cls, game_id: str, trials: int, wins: int, notes: str = "",
                    baseline: float | None = None, rows=None) -> "GameReport":
        if not 0 <= wins <= trials:
            raise HarnessError(f"{wins} wins out of {trials}")
        ci = wilson(wins, trials) if trials else (0.0, 1.0)
        return cls(game_id, trials, wins, wins / trials if trials else 0.0, ci, notes,
                   baseline, list(rows or []))

    def sigma(self) -> float:
        p = self.baseline if self.baseline is not None else 0.5
        return math.sqrt(p * (1 - p) / self.trials)

    def within(self, target: float, k: float = 3.0) -> bool:
        p = target
        return abs(self.win_rate - p) <= k * math.sqrt(p * (1 - p) / self.trials)

    def ci(self, confidence: float) -> tuple[float, float]:
        return wilson(self.wins, self.trials, confidence)

    def to_dict(self) -> dict:
        d = {"game_id": self.game_id, "trials": self.trials, "wins": self.wins,
             "win_rate": self.win_rate, "ci95": list(self.ci95), "notes": self.notes}
        if self.baseline is not None:
            d["baseline"] = self.baseline
        return d

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class DescriberResult:
    mean_overlap: float
    overlaps: list[float]
    method_tag: str

    def to_dict(self) -> dict:
        return {"mean_overlap": self.mean_overlap, "trials": len(self.overlaps),
                "min_overlap": min(self.overlaps) if self.overlaps else None,
                "method_tag": self.method_tag}


def _subs(rng, k):
    return rng.spawn(k)


# adaptive blindness game -------------------------------------------------------

class BlindnessAdversary:
    """Chooses two angle tables, plays the server, then guesses ``c``."""

    def choose(self, shape, rng):
        n, m = shape
        return np.zeros((n, m), int), np.zeros((n, m), int)

    def server(self, rng) -> ubqc.UBQCServer:
        return ubqc.UBQCServer()

    def guess(self, view: dict, rng) -> int:
        return int(rng.integers(2))


class RandomGuessAdversary(BlindnessAdversary):
    def choose(self, shape, rng):
        n, m = shape
        return rng.integers(0, 8, (n, m)), rng.integers(0, 8, (n, m))


class HonestPlayAdversary(BlindnessAdversary):
    """Plays honestly and bets on the first sent angle."""

    def choose(self, shape, rng):
        n, m = shape
        a = np.zeros((n, m), int)
        b = a.copy()
        b[0, 0] = 2
        return a, b

    def guess(self, view, rng):
        first = view["deltas"][(1, 1)]
        return int(int(first) % 4 == 2)


class LeakAdversary(HonestPlayAdversary):
    """Reads theta from the leak oracle: delta - theta = phi + r pi."""

    def guess(self, view, rng):
        if view.get("leak") is None:
            raise AdversaryProtocolViolation("leak adversary needs leak mode")
        d = int(view["deltas"][(1, 1)]) - int(view["leak"][(1, 1)])
        return int(d % 4 == 2)


def _check_tables(tables, shape):
    try:
        a, b = (np.asarray(t, dtype=np.int64) for t in tables)
    except (TypeError, ValueError) as exc:
        raise AdversaryProtocolViolation(f"bad angle tables: {exc}") from None
    if a.shape != tuple(shape) or b.shape != tuple(shape):
        raise AdversaryProtocolViolation(f"angle tables must both be {shape}")
    return a % 8, b % 8


def blindness_game(adversary: BlindnessAdversary, graph_size=(1, 1), trials: int = 1000,
                   rng=None, source=ubqc.QuantumChannel, leak: bool = False) -> GameReport:
    n, m = graph_size
    wins, rows = 0, []
    for i, g in enumerate(_subs(rng, trials)):
        ga, gc, gp, gg = g.spawn(4)
        tables = _check_tables(adversary.choose((n, m), ga), (n, m))
        c = int(gc.integers(2))
        pattern = ubqc.build_brickwork(n, m, tables[c])
        _, sess = ubqc.run_ubqc(pattern, source, adversary.server(gp), gp)
        view = {"deltas": sess.deltas, "transcript": sess.transcript,
                "leak": dict(sess.thetas) if leak else None}
        guess = int(adversary.guess(view, gg))
        wins += guess == c
        rows.append((i, c, guess))
    return GameReport.from_counts("blindness", trials, wins,
                                  "leak mode" if leak else "", 0.5, rows)


# hybrid games ----------------------------------------------------------------

class HybridAdversary:
    """Single-qubit QF-UBQC adversary for Games 1-7."""

    def choose(self, rng) -> tuple[int, int]:
        return int(rng.integers(8)), int(rng.integers(8))

    def respond(self, view: dict, rng) -> dict:
        return {"y": int(rng.integers(1 << 16)), "b": int(rng.integers(1 << 16)),
                "yp": int(rng.integers(1 << 16)), "bp": int(rng.integers(1 << 16)),
                "s1": int(rng.integers(2)), "s2": int(rng.integers(2))}

    def measure(self, view: dict, rng) -> int:
        return int(rng.integers(2))

    def guess(self, view: dict, rng) -> int:
        return int(rng.integers(2))


class DeltaGuessAdversary(HybridAdversary):
    """Picks 0 against pi/4 and reads c off delta's parity (which B1 masks)."""

    def choose(self, rng):
        return 0, 1

    def guess(self, view, rng):
        d = view.get("delta")
        return int(rng.integers(2)) if d is None else int(d) & 1


def _keyed_f(sk_tag: bytes, B1: int, y: int, b: int) -> int:
    """B2 = f(sk, B1, y, b): keyed parity, deterministic in its arguments."""
    h = hashlib.sha256(sk_tag + int(y).to_bytes(32, "big", signed=False)).digest()[0] & 1
    return (B1 & td.parity(int(y) & int(b))) ^ h


class _RealCrypto:
    def __init__(self, rng):
        self.rng = rng

    def keygen(self):
        kp = td.regev_keygen(rng=self.rng)
        return kp, kp.pk

    def enc(self, pk, bit):
        return td.regev_enc(pk, bit, self.rng)

    def f(self, kp, B1, y, b):
        return _keyed_f(kp.sk.tobytes(), B1, int(y) % (1 << 256), int(b) % (1 << 256))


class _SymbolicCrypto:
    """Ciphertexts become ``("Enc", tag, bit)``; f returns the adversary's chosen value."""

    def keygen(self):
        self._n = getattr(self, "_n", 0) + 1
        return ("sk", self._n), ("pk", self._n)

    def enc(self, pk, bit):
        return ("Enc", pk[1], int(bit))

    def f(self, kp, B1, y, b):
        return int(y) & 1


def _challenger(game: int, phis: tuple[int, int], c: int, hidden: dict, crypto,
                respond: Callable[[dict], dict]) -> dict:
    """One session of Game ``game``; returns the adversary's view."""
    view: dict = {}
    if game <= 6:
        view["phis"] = tuple(phis)
    B1, B1p = hidden["B1"], hidden["B1p"]
    r = hidden["r"]
    if game <= 4:
        kp, pk = crypto.keygen()
        view["pk"], view["ct"] = pk, crypto.enc(pk, B1)
        if game <= 2:
            kpp, pkp = crypto.keygen()
            view["pkp"], view["ctp"] = pkp, crypto.enc(pkp, B1p)
    if game <= 3:
        resp = respond(view)
        B2 = crypto.f(kp, B1, resp["y"], resp["b"])
        s1, s2 = int(resp["s1"]) & 1, int(resp["s2"]) & 1
        if game == 1:
            B2p = crypto.f(kpp, B1p, resp["yp"], resp["bp"])
            L1 = B2p ^ B2 ^ (B1 & (s1 ^ s2))
        else:
            L1 = 0
        L2 = B1p ^ ((B2 ^ s2) & B1)
    else:
        L1, L2 = 0, hidden["L2"]
    L3 = B1
    if game <= 5:
        view["delta"] = Octant(phis[c] + L3 + 2 * L2 + 4 * L1 + 4 * r)
    return view


_HIDDEN = ("B1", "B1p", "r", "L2")


def run_hybrid(game_index: int, adversary: HybridAdversary | None = None, trials: int = 1000,
               rng=None) -> GameReport:
    if game_index not in range(1, 8):
        raise BadIndex(f"games are numbered 1..7, got {game_index}")
    adversary = adversary or HybridAdversary()
    wins, rows = 0, []
    for i, g in enumerate(_subs(rng, trials)):
        ga, gc, gk, gr = g.spawn(4)
        phis = tuple(int(v) % 8 for v in adversary.choose(ga))
        c = int(gc.integers(2))
        hidden = {k: int(v) for k, v in zip(_HIDDEN, gc.integers(0, 2, 4))}
        view = _challenger(game_index, phis, c, hidden, _RealCrypto(gk),
                           lambda v: adversary.respond(v, gr))
        if game_index == 1:
            adversary.measure(view, gr)
        guess = int(adversary.guess(view, gr))
        wins += guess == c
        rows.append((i, c, guess))
    return GameReport.from_counts(f"game{game_index}", trials, wins, "", 0.5, rows)


def _view_key(view: dict, drop=()) -> tuple:
    return tuple((k, view[k]) for k in sorted(view) if k not in drop)


def _view_dist(game, phis, c, respond_for, fixed: dict | None = None) -> Counter:
    """Exact view distribution (integer counts over the hidden bits)."""
    out: Counter = Counter()
    for bits in itertools.product((0, 1), repeat=len(_HIDDEN)):
        hidden = dict(zip(_HIDDEN, bits))
        if fixed and any(hidden[k] != v for k, v in fixed.items()):
            continue
        view = _challenger(game, phis, c, hidden, _SymbolicCrypto(), respond_for)
        out[_view_key(view)] += 1
    return out


def _responses():
    for y, yp, s1, s2 in itertools.product((0, 1), repeat=4):
        yield {"y": y, "b": 0, "yp": yp, "bp": 0, "s1": s1, "s2": s2}


@dataclass
class RewriteCheck:
    transition: str
    cases: int
    discrepancies: int

    @property
    def ok(self) -> bool:
        return self.discrepancies == 0 and self.cases > 0


def check_rewrite_1_2() -> RewriteCheck:
    """Folding L1 into r: identical views at every c and phi.

    The adversary's answer may depend on its view, which before answering is
    (pk, pk', Enc(B1), Enc(B1')); the view distribution splits into blocks by
    (B1, B1'), so constant answers per block cover every strategy. ``f`` is
    left free: its value is part of the answer.
    """
    cases = bad = 0
    for phis in itertools.product(range(8), repeat=2):
        for c in (0, 1):
            for B1, B1p in itertools.product((0, 1), repeat=2):
                for resp in _responses():
                    fix = {"B1": B1, "B1p": B1p}
                    d1 = _view_dist(1, phis, c, lambda v: resp, fix)
                    d2 = _view_dist(2, phis, c, lambda v: resp, fix)
                    cases += 1
                    bad += d1 != d2
    return RewriteCheck("1<->2", cases, bad)


def check_rewrite_3_4() -> RewriteCheck:
    """B1' pads L2: Game 3 and Game 4 views coincide, and L2 is uniform in Game 3."""
    cases = bad = 0
    for phis in itertools.product(range(8), repeat=2):
        for c in (0, 1):
            for B1 in (0, 1):
                for resp in _responses():
                    fix = {"B1": B1}
                    d3 = _view_dist(3, phis, c, lambda v: resp, fix)
                    d4 = _view_dist(4, phis, c, lambda v: resp, fix)
                    cases += 1
                    bad += d3 != d4
    return RewriteCheck("3<->4", cases, bad)


def game3_L2_marginal(resp: dict, B1: int) -> Counter:
    out: Counter = Counter()
    for B1p in (0, 1):
        B2 = int(resp["y"]) & 1
        out[B1p ^ ((B2 ^ resp["s2"]) & B1)] += 1
    return out


def check_rewrite_5_6_7() -> RewriteCheck:
    """Game 5's view is Game 6's times a uniform delta; Games 6 and 7 views carry nothing of c."""
    cases = bad = 0
    for phis in itertools.product(range(8), repeat=2):
        for c in (0, 1):
            d5 = _view_dist(5, phis, c, None)
            d6 = _view_dist(6, phis, c, None)
            d7 = _view_dist(7, phis, c, None)
            deltas = Counter()
            for key, cnt in d5.items():
                kv = dict(key)
                deltas[int(kv["delta"])] += cnt
                rest = tuple((k, v) for k, v in key if k != "delta")
                bad += rest not in {k for k in d6}
            bad += sorted(deltas.values()) != [2] * 8 or len(deltas) != 8
            bad += set(d6) != {(("phis", tuple(phis)),)}
            bad += set(d7) != {()}
            cases += 1
    # the view in Games 6 and 7 must not depend on c
    for phis in itertools.product(range(8), repeat=2):
        bad += _view_dist(6, phis, 0, None) != _view_dist(6, phis, 1, None)
        bad += _view_dist(7, phis, 0, None) != _view_dist(7, phis, 1, None)
        cases += 1
    return RewriteCheck("5<->6<->7", cases, bad)


def check_exact_rewrites() -> list[RewriteCheck]:
    return [check_rewrite_1_2(), check_rewrite_3_4(), check_rewrite_5_6_7()]


# basis blindness ---------------------------------------------------------------

def _k_messages(transcript: Transcript) -> list[td.TrapdoorKeyPair]:
    keys = []
    for m in transcript.messages:
        if m.sender == "A" and m.kind == "classical":
            v = decode_value(m.payload)
            if isinstance(v, dict) and "k" in v:
                keys.append(td.TrapdoorKeyPair.from_json(v["k"].decode()))
    return keys


def _server_messages(transcript: Transcript) -> list:
    return [decode_value(m.payload) for m in transcript.messages
            if m.sender == "B" and m.kind == "classical"]


def blind_guesser(transcript, rng, kind="fourState"):
    if kind == "fourState":
        return int(rng.integers(2))
    return int(rng.integers(2)), int(rng.integers(2))


def _toy_bruteforce_outputs(pub: td.ToyPublic, y: int, b: int, basis: str):
    pre = pub.preimages_bruteforce(int(y))
    if len(pre) != 2:
        return None
    x, xp = pre
    hx, hp = pub.hardcore(x), pub.hardcore(xp)
    B1 = hx ^ hp
    if basis == "standard":
        return B1, qf.compute_B2(B1, b, x, xp, hx, hp)
    return B1, qf.compute_B2_rotated(B1, b, x, xp, hx, hp)


def _require_toy(keys):
    for k in keys:
        if k.family_tag != "toy":
            raise NotSupported("brute force is limited to the toy family")
        if k.k.domain_bits > 16:
            raise NotSupported("brute force is limited to 2^16 domain points")


def _bruteforce_bits(transcript):
    """Everything the client knows, rebuilt from the public transcript."""
    keys = _k_messages(transcript)
    _require_toy(keys)
    msgs = _server_messages(transcript)
    if len(keys) == 1:
        return [_toy_bruteforce_outputs(keys[0].k, msgs[0], msgs[1], "standard")], None
    a = _toy_bruteforce_outputs(keys[0].k, msgs[0], msgs[1], "standard")
    b = _toy_bruteforce_outputs(keys[1].k, msgs[2], msgs[3], "rotated")
    return [a, b], tuple(msgs[4])


def bruteforce_guesser(transcript, rng, kind="fourState"):
    """Recovers d0 of a toy key from its kernel (exhaustive over the domain)."""
    keys = _k_messages(transcript)
    _require_toy(keys)
    if kind == "fourState":
        pub = keys[0].k
        pre = pub.preimages_bruteforce(int(pub.table()[0]))
        z = pre[0] ^ pre[1]
        return pub.hardcore(z)
    outs, (s1, s2) = _bruteforce_bits(transcript)
    (B1, B2), (B1p, _) = outs
    return B1p ^ ((B2 ^ s2) & B1), B1


def basis_blindness_estimate(kind: str, guesser: Callable, trials: int, rng,
                             family: str = "toy", n: int = 6, engine: str = "auto") -> GameReport:
    if kind not in ("fourState", "eightState"):
        raise ValueError(f"kind must be fourState or eightState, got {kind!r}")
    wins, rows = 0, []
    for i, g in enumerate(_subs(rng, trials)):
        gk, gs, gg = g.spawn(3)
        if kind == "fourState":
            keys = td.gen(family, gk, n=n)
            out = qf.run_4states(keys, qf.HONEST, "standard", gs, engine)
            truth = out.B1
        else:
            k1, k2 = td.gen(family, gk, n=n), td.gen(family, gk, n=n)
            out = qf.run_8states(k1, k2, qf.HONEST, gs, engine)
            truth = (out.L[1], out.L[2])
        guess = guesser(out.transcript, gg, kind)
        guess = int(guess) if kind == "fourState" else tuple(int(v) for v in guess)
        wins += guess == truth
        rows.append((i, str(truth), str(guess)))
    base = 0.5 if kind == "fourState" else 0.25
    return GameReport.from_counts(f"basis-{kind}", trials, wins, "", base, rows)


# classical emulation ---------------------------------------------------------------

def emulate_classical_converter(steps: Sequence[qsim.QuantumInstrumentStep],
                                transcript: Transcript) -> ClassicalDescription:
    """Replay a classically interacting server from its transcript.

    Each step handles the inbound messages since the previous outbound one
    and must have a Kraus branch labelled by the outbound payload. Only
    matrices are tracked.
    """
    rho = np.ones((1, 1), dtype=complex)
    inbound: list[str] = []
    steps = list(steps)
    used = 0
    for m in transcript.messages:
        if m.kind != "classical":
            raise TranscriptMismatch("quantum message in a classical transcript")
        if m.sender != "B":
            inbound.append(m.payload.decode())
            continue
        if used >= len(steps):
            raise TranscriptMismatch("more server messages than instrument steps")
        step = steps[used]
        used += 1
        label = m.payload.decode()
        try:
            out = step.apply_branch(rho, label, "".join(inbound))
        except KeyError:
            raise TranscriptMismatch(f"step {used} has no branch {label!r}") from None
        tr = float(np.trace(out).real)
        if tr < 1e-14:
            raise TranscriptMismatch(f"step {used} cannot emit {label!r}")
        rho = out / tr
        inbound = []
    if used != len(steps):
        raise TranscriptMismatch(f"{len(steps) - used} instrument step(s) left unused")
    return ClassicalDescription.of(DensityMatrix(rho))


@dataclass
class EmulationCheck:
    sessions: int
    min_overlap: float
    failures: int


def emulation_check(honest_sessions: int, scripted_sessions: int, rng, n: int = 6,
                    tol: float = 1e-9) -> tuple[EmulationCheck, EmulationCheck]:
    """Live runs against transcript replays, honest (dense engine) and random scripted."""
    results = []
    for count, scripted in ((honest_sessions, False), (scripted_sessions, True)):
        worst, fails = 1.0, 0
        for g in _subs(rng, count):
            gk, gs, gb = g.spawn(3)
            keys = td.toy_gen(n, gk)
            basis = "standard" if not scripted else ("standard", "rotated")[int(gb.integers(2))]
            if scripted:
                steps = qf.random_scripted_steps(keys, gb)
                out = qf.run_4states(keys, qf.Scripted(steps), basis, gs)
            else:
                basis = ("standard", "rotated")[int(gb.integers(2))]
                steps = qf.honest_server_steps(keys, basis)
                out = qf.run_4states(keys, qf.HONEST, basis, gs, engine="dense")
            desc = emulate_classical_converter(steps, out.transcript)
            ov = qsim.trace_overlap(desc.matrix, out.server_state)
            worst = min(worst, ov)
            fails += ov < 1 - tol
        results.append(EmulationCheck(count, worst, fails))
    return results[0], results[1]


# describability ---------------------------------------------------------------

class TrapdoorDescriber:
    tag = "TrapdoorDescriber"

    def __init__(self, keys: Sequence[td.TrapdoorKeyPair]):
        self.keys = list(keys)

    def describe(self, transcript: Transcript, rng) -> np.ndarray:
        msgs = _server_messages(transcript)
        if len(self.keys) == 1:
            o = qf._client_outputs(self.keys[0], msgs[0], msgs[1], "standard", rng)
            return _bb84_or_mixed(o)
        a = qf._client_outputs(self.keys[0], msgs[0], msgs[1], "standard", rng)
        b = qf._client_outputs(self.keys[1], msgs[2], msgs[3], "rotated", rng)
        s1, s2 = (int(v) for v in msgs[4])
        th = qf.merge_octant(a["B1"], a["B2"], b["B1"], b["B2"], s1, s2)
        return PureState.plus(th).density().entries


def _bb84_or_mixed(o: dict) -> np.ndarray:
    if o["inverted"]:
        return PureState.bb84(o["B1"], o["B2"]).density().entries
    return 0.5 * (PureState.bb84(o["B1"], 0).density().entries
                  + PureState.bb84(o["B1"], 1).density().entries)


class BruteForceDescriber:
    """Unbounded converter at desk scale: inverts toy keys by enumeration."""

    tag = "BruteForceDescriber"

    def describe(self, transcript: Transcript, rng) -> np.ndarray:
        outs, s = _bruteforce_bits(transcript)
        if any(o is None for o in outs):
            return np.eye(2, dtype=complex) / 2
        if s is None:
            return PureState.bb84(*outs[0]).density().entries
        (B1, B2), (B1p, B2p) = outs
        return PureState.plus(qf.merge_octant(B1, B2, B1p, B2p, *s)).density().entries


class BlindDescriber:
    tag = "MeasureAndPrepare"

    def describe(self, transcript, rng) -> np.ndarray:
        return np.eye(2, dtype=complex) / 2


def describability_attack(target: str, describer: str | object, trials: int, rng,
                          family: str = "toy", n: int = 6) -> DescriberResult:
    """Mean Tr(rho rho') between the client's description and the describer's guess."""
    if target not in ("QFactory4", "QFactory8"):
        raise ValueError(f"unknown target {target!r}")
    if describer == "BruteForceDescriber" and family != "toy":
        raise NotSupported("brute force needs the toy family")
    overlaps = []
    for g in _subs(rng, trials):
        gk, gs, gd = g.spawn(3)
        if target == "QFactory4":
            keys = [td.gen(family, gk, n=n)]
            out = qf.run_4states(keys[0], qf.HONEST, "standard", gs)
            client = (PureState.bb84(out.B1, out.B2) if out.inverted else None)
        else:
            keys = [td.gen(family, gk, n=n), td.gen(family, gk, n=n)]
            out = qf.run_8states(keys[0], keys[1], qf.HONEST, gs)
            client = PureState.plus(out.theta) if out.inverted else None
        if describer == "TrapdoorDescriber":
            d = TrapdoorDescriber(keys)
        elif describer == "BruteForceDescriber":
            d = BruteForceDescriber()
        elif describer in ("MeasureAndPrepare", "BlindDescriber"):
            d = BlindDescriber()
        else:
            d = describer
        guess = d.describe(out.transcript, gd)
        rho = client.density().entries if client is not None else np.eye(2) / 2
        overlaps.append(float(np.clip(np.trace(rho @ guess).real, 0.0, 1.0)))
    tag = getattr(d, "tag", type(d).__name__)
    return DescriberResult(float(np.mean(overlaps)), overlaps, tag)


# cloning bound ---------------------------------------------------------------------

ZPI2 = tuple(PureState.plus(k).density().entries for k in (0, 2, 4, 6))

# measure-and-prepare optimum for {|+_theta>: theta in Z pi/2}, frozen from the grid run
CLONING_BOUND = 0.75


def _bloch(rho: np.ndarray) -> np.ndarray:
    return np.array([2 * rho[0, 1].real, -2 * rho[0, 1].imag, (rho[0, 0] - rho[1, 1]).real])


def cloning_bound_search(omega: Sequence = ZPI2, grid_resolution: int = 1000) -> float:
    """Best uniform-average overlap over projective measure-and-prepare maps.

    For a measurement axis ``u`` the best state to prepare on outcome ``o``
    is the top eigenvector of ``sum_theta p(o|theta) rho_theta``, so only the
    axis is gridded: polar angle in ``[0, pi]`` and azimuth in ``[0, 2 pi)``.
    """
    mats = np.array([qsim.as_matrix(w) for w in omega])
    k = len(mats)
    bl = np.array([_bloch(m) for m in mats])  # (k, 3)
    pol = np.linspace(0.0, math.pi, grid_resolution + 1)
    az = np.linspace(0.0, 2 * math.pi, grid_resolution, endpoint=False)
    P, A = np.meshgrid(pol, az, indexing="ij")
    u = np.stack([np.sin(P) * np.cos(A), np.sin(P) * np.sin(A), np.cos(P)], -1)  # (..., 3)
    proj = u @ bl.T  # (..., k)
    total = np.zeros(P.shape)
    for sign in (1.0, -1.0):
        w = 0.5 * (1 + sign * proj)  # p(o|theta)
        M = np.einsum("...t,tij->...ij", w, mats)
        a, d, b = M[..., 0, 0].real, M[..., 1, 1].real, M[..., 0, 1]
        total += 0.5 * (a + d + np.sqrt((a - d) ** 2 + 4 * np.abs(b) ** 2))
    return float(total.max() / k)


def strategy_overlap(strategy: str, omega: Sequence = ZPI2) -> float:
    """Reference points: ``copy`` knows theta (1.0); ``mixed`` outputs I/2 (0.5)."""
    mats = [qsim.as_matrix(w) for w in omega]
    if strategy == "copy":
        return float(np.mean([np.trace(m @ m).real for m in mats]))
    if strategy == "mixed":
        return float(np.mean([np.trace(m @ np.eye(2) / 2).real for m in mats]))
    raise ValueError(f"unknown strategy {strategy!r}")


# signaling game ------------------------------------------------------------------

def signaling_game(strategy: Callable, trials: int, rng, leak: bool = False) -> GameReport:
    """C draws phi0 in Z pi/2 and tells D nothing; D guesses phi0 mod pi.

    ``strategy(side_channel, rng)`` returns an octant; it is compared mod 4.
    The side channel is ``None`` unless ``leak`` is set.
    """
    wins, rows = 0, []
    for i, g in enumerate(_subs(rng, trials)):
        gc, gd = g.spawn(2)
        phi0 = 2 * int(gc.integers(4))
        guess = int(strategy(phi0 if leak else None, gd))
        ok = guess % 4 == phi0 % 4
        wins += ok
        rows.append((i, phi0, guess))
    return GameReport.from_counts(
        "signaling", trials, wins,
        "baseline 1/2 over two classes mod pi; the 1/4 reading is not used", 0.5, rows)


def constant_strategy(side, rng):
    return 0


def random_strategy(side, rng):
    return 2 * int(rng.integers(2))


def leaky_strategy(side, rng):
    return int(side) if side is not None else 0


# trace lemma suite -----------------------------------------------------------------

@dataclass
class LemmaSuite:
    identity_residual: float
    identity_pairs: int
    properties_checked: int
    properties_active: int
    properties_violations: int
    transitivity_checked: int
    transitivity_active: int
    transitivity_violations: int
    closeness_violations: int

    @property
    def ok(self) -> bool:
        return (self.identity_residual < 1e-12 and self.properties_violations == 0
                and self.transitivity_violations == 0 and self.closeness_violations == 0)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ok"] = self.ok
        return d


def _near(rho: np.ndarray, rng, scale: float) -> np.ndarray:
    d = rho.shape[0]
    noise = qsim.random_density(d, rng).entries
    return (1 - scale) * rho + scale * noise


def verify_lemmas(rng, samples: int = 1000, dims: Sequence[int] = (2, 4)) -> LemmaSuite:
    resid = 0.0
    pairs = 0
    for d in dims:
        for g in _subs(rng.spawn(1)[0], samples):
            a = qsim.random_density(d, g, rank=int(g.integers(1, d + 1)))
            b = qsim.random_density(d, g, rank=int(g.integers(1, d + 1)))
            lhs, rhs = qsim.check_trace_identity(a, b)
            resid = max(resid, abs(lhs - rhs))
            pairs += 1
    pa = pv = ca = cv = clv = 0
    gp, gt = rng.spawn(2)
    for g in _subs(gp, samples):
        d = dims[int(g.integers(len(dims)))]
        base = qsim.random_pure(d, g).density().entries
        a = _near(base, g, float(g.uniform(0, 0.2)))
        b = _near(base, g, float(g.uniform(0, 0.2)))
        eps = 1 - float(np.trace(a @ b).real) + float(g.uniform(0, 0.01))
        pa += float(np.trace(a @ b).real) >= 1 - eps
        pv += not qsim.trace_properties_hold(a, b, eps)
        clv += qsim.trace_distance(a, b) > qsim.closeness_bound(eps, d) + 1e-12
    for g in _subs(gt, samples):
        d = dims[int(g.integers(len(dims)))]
        base = qsim.random_pure(d, g).density().entries
        r1, r2, r3 = (_near(base, g, float(g.uniform(0, 0.15))) for _ in range(3))
        e1 = 1 - float(np.trace(r1 @ r2).real)
        e2 = 1 - float(np.trace(r2 @ r3).real)
        ca += 1
        cv += not qsim.transitivity_holds(r1, r2, r3, e1, e2)
    return LemmaSuite(resid, pairs, samples, pa, pv, samples, ca, cv, clv)
