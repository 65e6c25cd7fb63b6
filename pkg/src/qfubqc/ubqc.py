"""Brickwork patterns and blind execution of them.

Nodes are 1-indexed ``(row, column)`` pairs. The flow is ``f(i, j) = (i, j+1)``
so a node X-depends on its row predecessor and Z-depends on every earlier
node whose flow successor neighbours it. Measurement is column-major and the
server keeps at most two columns alive.
"""
from __future__ import annotations

import json
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import qsim
from . import trapdoor as td
from .cc import ChannelError, Transcript
from .qfactory import HONEST, Honest, run_8states
from .qsim import Octant, PureState

Node = tuple[int, int]

MAX_ROWS = 6


class UBQCError(Exception):
    pass


class BadDims(UBQCError):
    pass


class TooLarge(UBQCError):
    pass


class AdversaryProtocolViolation(UBQCError):
    pass


# patterns ----------------------------------------------------------------------

def brickwork_edges(n: int, m: int) -> list[tuple[Node, Node]]:
    edges = [((i, j), (i, j + 1)) for i in range(1, n + 1) for j in range(1, m)]
    for j in range(1, m + 1):
        for i in range(1, n):
            r = j % 8
            if (i % 2 == 1 and r in (3, 5)) or (i % 2 == 0 and r in (7, 1) and j != 1):
                edges.append(((i, j), (i + 1, j)))
    return edges


def _neighbours(edges) -> dict[Node, set[Node]]:
    nb: dict[Node, set[Node]] = {}
    for a, b in edges:
        nb.setdefault(a, set()).add(b)
        nb.setdefault(b, set()).add(a)
    return nb


def flow_dependencies(n: int, m: int, edges) -> tuple[dict, dict]:
    nb = _neighbours(edges)
    x_deps = {(i, j): ({(i, j - 1)} if j > 1 else set())
              for j in range(1, m + 1) for i in range(1, n + 1)}
    z_deps = {v: set() for v in x_deps}
    for (i, j) in x_deps:
        if j == m:
            continue
        for w in nb.get((i, j + 1), ()):
            if w != (i, j):
                z_deps[w].add((i, j))
    return x_deps, z_deps


@dataclass
class MeasurementPattern:
    n: int
    m: int
    phi: dict[Node, Octant]
    x_deps: dict[Node, frozenset]
    z_deps: dict[Node, frozenset]
    order: list[Node]
    edges: list[tuple[Node, Node]] = field(default_factory=list)

    @property
    def nodes(self) -> list[Node]:
        return list(self.order)

    def column(self, j: int) -> list[Node]:
        return [(i, j) for i in range(1, self.n + 1)]

    def output_nodes(self) -> list[Node]:
        return self.column(self.m)

    def validate(self) -> None:
        pos = {v: k for k, v in enumerate(self.order)}
        for v in self.order:
            for d in self.x_deps[v] | self.z_deps[v]:
                if d not in pos or pos[d] >= pos[v]:
                    raise BadDims(f"dependency {d} of {v} is not earlier in the order")

    def to_json(self) -> str:
        def deps(d):
            return {f"{i},{j}": sorted([list(u) for u in s]) for (i, j), s in d.items()}
        return json.dumps({
            "n": self.n, "m": self.m,
            "phi": [[int(self.phi[(i, j)]) for j in range(1, self.m + 1)]
                    for i in range(1, self.n + 1)],
            "x_deps": deps(self.x_deps), "z_deps": deps(self.z_deps),
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "MeasurementPattern":
        d = json.loads(text)
        return pattern_from_dict(d)


def pattern_from_dict(d: Mapping) -> MeasurementPattern:
    x = d.get("x_deps")
    z = d.get("z_deps")

    def parse(dd):
        if dd is None:
            return None
        return {tuple(int(t) for t in k.split(",")): {tuple(u) for u in v} for k, v in dd.items()}
    return build_brickwork(int(d["n"]), int(d["m"]), d.get("phi"), parse(x), parse(z))


def _phi_table(n: int, m: int, phi) -> dict[Node, Octant]:
    if phi is None:
        return {(i, j): Octant(0) for i in range(1, n + 1) for j in range(1, m + 1)}
    if isinstance(phi, Mapping):
        return {(i, j): Octant(phi.get((i, j), 0)) for i in range(1, n + 1) for j in range(1, m + 1)}
    arr = np.asarray(phi, dtype=np.int64)
    if arr.shape != (n, m):
        raise BadDims(f"angle table has shape {arr.shape}, graph is {n}x{m}")
    return {(i + 1, j + 1): Octant(int(arr[i, j])) for i in range(n) for j in range(m)}


def build_brickwork(n: int, m: int, phi=None, x_deps=None, z_deps=None) -> MeasurementPattern:
    """Brickwork graph, canonical flow and column-major order.

    Explicit ``x_deps``/``z_deps`` take precedence over the generated ones.
    """
    if n < 1 or m < 1:
        raise BadDims(f"graph must be at least 1x1, got {n}x{m}")
    edges = brickwork_edges(n, m)
    gx, gz = flow_dependencies(n, m, edges)
    xd = gx if x_deps is None else {v: set(x_deps.get(v, ())) for v in gx}
    zd = gz if z_deps is None else {v: set(z_deps.get(v, ())) for v in gz}
    order = [(i, j) for j in range(1, m + 1) for i in range(1, n + 1)]
    pat = MeasurementPattern(n, m, _phi_table(n, m, phi),
                             {v: frozenset(s) for v, s in xd.items()},
                             {v: frozenset(s) for v, s in zd.items()}, order, edges)
    pat.validate()
    return pat


def angle_update(phi: int, theta: int, r: int, sX: int, sZ: int) -> Octant:
    return Octant((-1) ** (sX & 1) * int(phi) + 4 * (sZ & 1) + int(theta) + 4 * (r & 1))


def adapted_angle(phi: int, sX: int, sZ: int) -> Octant:
    return angle_update(phi, 0, 0, sX, sZ)


def _dep_bits(pattern: MeasurementPattern, v: Node, sbar: Mapping[Node, int]) -> tuple[int, int]:
    sx = sum(sbar[u] for u in pattern.x_deps[v]) & 1
    sz = sum(sbar[u] for u in pattern.z_deps[v]) & 1
    return sx, sz


# a two-column register -----------------------------------------------------------

class ColumnRegister:
    """Live qubits of the brickwork state, two columns at most."""

    def __init__(self, pattern: MeasurementPattern, qubit_of: Callable[[Node], PureState]):
        if 2 * pattern.n > qsim.MAX_QUBITS:
            raise TooLarge(f"{pattern.n} rows need {2 * pattern.n} live qubits")
        self.p = pattern
        self.qubit_of = qubit_of
        self.state: PureState | None = None
        self.live: list[Node] = []
        self.vertical = {}
        for a, b in pattern.edges:
            if a[1] == b[1]:
                self.vertical.setdefault(a[1], []).append((a, b))
        self.loaded = 0

    def _add_column(self, j: int) -> None:
        col = self.p.column(j)
        new = [self.qubit_of(v) for v in col]
        self.state = new[0].tensor(*new[1:]) if self.state is None else self.state.tensor(*new)
        self.live += col
        gates = [("CZ", self.live.index(a), self.live.index(b)) for a, b in self.vertical.get(j, ())]
        if j > 1:
            gates += [("CZ", self.live.index((i, j - 1)), self.live.index((i, j))) for i in range(1, self.p.n + 1)]
        self.state = qsim.apply_circuit(self.state, gates)
        self.loaded = j

    def measure(self, v: Node, delta: int, rng, forced: int | None = None) -> int:
        j = v[1]
        while self.loaded < min(j + 1, self.p.m):
            self._add_column(self.loaded + 1)
        q = self.live.index(v)
        s, self.state = qsim.measure_rotated(self.state, q, delta, rng, forced)
        self.live.pop(q)
        return s

    def branch(self) -> "ColumnRegister":
        other = ColumnRegister.__new__(ColumnRegister)
        other.__dict__.update(self.__dict__)
        other.live = list(self.live)
        return other


# servers -----------------------------------------------------------------------

class UBQCServer:
    """Server side of the computation phase. Subclass to deviate."""

    def start(self, pattern_shape: tuple[int, int], qubits: Mapping[Node, PureState],
              transcript: Transcript, rng) -> None:
        self.rng = rng
        self.transcript = transcript
        self.pattern = build_brickwork(*pattern_shape)
        self.qubits = dict(qubits)
        self.register = ColumnRegister(self.pattern, self.qubits.__getitem__)

    def measure(self, node: Node, delta: Octant) -> int:
        return self.register.measure(node, int(delta), self.rng)


HonestUBQCServer = UBQCServer


@dataclass
class UBQCSession:
    thetas: dict[Node, Octant]
    r: dict[Node, int]
    s: dict[Node, int]
    s_bar: dict[Node, int]
    deltas: dict[Node, Octant]
    source_tag: str
    transcript: Transcript
    output: tuple[int, ...] = ()

    def output_string(self) -> str:
        return "".join(str(b) for b in self.output)

    def to_dict(self) -> dict:
        key = lambda v: f"{v[0]},{v[1]}"  # noqa: E731
        return {"source": self.source_tag, "output": self.output_string(),
                "thetas": {key(v): int(t) for v, t in self.thetas.items()},
                "r": {key(v): b for v, b in self.r.items()},
                "s": {key(v): b for v, b in self.s.items()},
                "deltas": {key(v): int(d) for v, d in self.deltas.items()}}


@dataclass(frozen=True)
class QuantumChannelSource:
    tag = "QuantumChannel"


@dataclass
class QFactory8Source:
    """Each node's |+_theta> comes from an eight-state QFactory run.

    ``keys`` maps node -> (keys1, keys2); when absent, fresh toy keys of size
    ``n`` are drawn per node.
    """

    keys: Mapping[Node, tuple] | None = None
    n: int = 4
    engine: str = "auto"
    tag = "QFactory8"


QuantumChannel = QuantumChannelSource()


def _prepare(pattern, source, rng, transcript):
    thetas, qubits = {}, {}
    if isinstance(source, QuantumChannelSource):
        for v in pattern.order:
            thetas[v] = Octant(int(rng.integers(8)))
            qubits[v] = PureState.plus(thetas[v])
            transcript.append("A", kind="qhandle", handle=qubits[v])
        return thetas, qubits
    if isinstance(source, QFactory8Source):
        for v in pattern.order:
            kr, sr = rng.spawn(2)
            if source.keys is not None:
                k1, k2 = source.keys[v]
            else:
                k1, k2 = td.toy_gen(source.n, kr), td.toy_gen(source.n, kr)
            out = run_8states(k1, k2, HONEST, sr, engine=source.engine, transcript=transcript)
            thetas[v] = out.theta
            qubits[v] = out.server_state
        return thetas, qubits
    raise ChannelError(f"unknown qubit source {source!r}")


def run_ubqc(pattern: MeasurementPattern, source=QuantumChannel, behavior=HONEST,
             rng=None) -> tuple[tuple[int, ...], UBQCSession]:
    """Blind execution; returns the corrected last-column bits and the session."""
    prep_rng, client_rng, server_rng = rng.spawn(3)
    tr = Transcript()
    thetas, qubits = _prepare(pattern, source, prep_rng, tr)
    server = UBQCServer() if behavior is None or isinstance(behavior, Honest) else behavior
    if not isinstance(server, UBQCServer):
        raise AdversaryProtocolViolation(f"{behavior!r} is not a UBQC server")
    server.start((pattern.n, pattern.m), qubits, tr, server_rng)
    r, s, sbar, deltas = {}, {}, {}, {}
    for v in pattern.order:
        r[v] = int(client_rng.integers(2))
        sx, sz = _dep_bits(pattern, v, sbar)
        deltas[v] = angle_update(pattern.phi[v], thetas[v], r[v], sx, sz)
        tr.append("A", int(deltas[v]))
        got = server.measure(v, deltas[v])
        if got not in (0, 1):
            raise AdversaryProtocolViolation(f"server answered {got!r} for node {v}")
        tr.append("B", int(got))
        s[v] = int(got)
        sbar[v] = s[v] ^ r[v]
    out = tuple(sbar[v] for v in pattern.output_nodes())
    tag = getattr(source, "tag", "QuantumChannel")
    return out, UBQCSession(thetas, r, s, sbar, deltas, tag, tr, out)


# unblinded oracle ----------------------------------------------------------------

def reference_mbqc(pattern: MeasurementPattern, samples: int | None = None, rng=None
                   ) -> dict[str, float]:
    """Output distribution of the plain pattern on |+>^n inputs.

    Exact by branch enumeration when ``n*m <= 12``; Monte Carlo with
    ``samples`` draws otherwise.
    """
    if 2 * pattern.n > qsim.MAX_QUBITS:
        raise TooLarge(f"{pattern.n} rows exceed the simulator width")
    plus = PureState.plus(0)
    if pattern.n * pattern.m <= 12:
        dist: dict[str, float] = {}

        def walk(reg: ColumnRegister, k: int, sbar: dict, p: float):
            if p < 1e-15:
                return
            if k == len(pattern.order):
                key = "".join(str(sbar[v]) for v in pattern.output_nodes())
                dist[key] = dist.get(key, 0.0) + p
                return
            v = pattern.order[k]
            sx, sz = _dep_bits(pattern, v, sbar)
            delta = int(adapted_angle(pattern.phi[v], sx, sz))
            for bit in (0, 1):
                sub = reg.branch()
                j = v[1]
                while sub.loaded < min(j + 1, pattern.m):
                    sub._add_column(sub.loaded + 1)
                q = sub.live.index(v)
                br = qsim.kernels.contract(sub.state.amplitudes, sub.state.qubit_count, q,
                                           np.ascontiguousarray(
                                               (qsim.plus_vec(delta) if bit == 0
                                                else qsim.minus_vec(delta)).conj()))
                pb = float(np.vdot(br, br).real)
                if pb < 1e-15:
                    continue
                sub.state = PureState(br / np.sqrt(pb), sub.state.qubit_count - 1)
                sub.live.pop(q)
                walk(sub, k + 1, {**sbar, v: bit}, p * pb)

        walk(ColumnRegister(pattern, lambda v: plus), 0, {}, 1.0)
        return {k: dist[k] for k in sorted(dist)}
    if samples is None or rng is None:
        raise TooLarge("pattern too large for exact enumeration; pass samples and rng")
    counts: dict[str, int] = {}
    for _ in range(samples):
        reg = ColumnRegister(pattern, lambda v: plus)
        sbar = {}
        for v in pattern.order:
            sx, sz = _dep_bits(pattern, v, sbar)
            sbar[v] = reg.measure(v, int(adapted_angle(pattern.phi[v], sx, sz)), rng)
        key = "".join(str(sbar[v]) for v in pattern.output_nodes())
        counts[key] = counts.get(key, 0) + 1
    return {k: counts[k] / samples for k in sorted(counts)}


def total_variation(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def empirical(outputs: Sequence[Sequence[int] | str]) -> dict[str, float]:
    counts: dict[str, int] = {}
    for o in outputs:
        key = o if isinstance(o, str) else "".join(str(int(b)) for b in o)
        counts[key] = counts.get(key, 0) + 1
    total = len(outputs)
    return {k: counts[k] / total for k in sorted(counts)}


def sample_outputs(pattern, source, samples: int, rng) -> dict[str, float]:
    subs = rng.spawn(samples)
    return empirical([run_ubqc(pattern, source, HONEST, g)[0] for g in subs])


def delta_is_uniform(phi: int, sX: int, sZ: int) -> bool:
    """Every delta hit by exactly two of the sixteen (theta, r) pairs."""
    counts = np.zeros(8, dtype=int)
    for theta in range(8):
        for r in (0, 1):
            counts[int(angle_update(phi, theta, r, sX, sZ))] += 1
    return bool(np.all(counts == 2))
