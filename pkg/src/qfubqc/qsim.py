"""Dense statevector / density-matrix simulation for a dozen qubits or so.

Conventions: qubit 0 is the leftmost tensor factor (most significant index
bit); ``|+_k>`` means ``(|0> + e^{i k pi/4}|1>)/sqrt(2)``; measured qubits are
removed from the register.
"""
from __future__ import annotations

import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels

STATE_TOL = 1e-9
IDENTITY_TOL = 1e-12
INSTRUMENT_TOL = 1e-6
MAX_QUBITS = 12


class QsimError(Exception):
    pass


class BadTarget(QsimError):
    pass


class ZeroNorm(QsimError):
    pass


class DimMismatch(QsimError):
    pass


class EmptySet(QsimError):
    pass


class NotTracePreserving(QsimError):
    pass


class Octant(int):
    """Angle ``k*pi/4`` with arithmetic mod 8."""

    def __new__(cls, k: int = 0):
        return super().__new__(cls, int(k) % 8)

    def __add__(self, other):
        return Octant(int(self) + int(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Octant(int(self) - int(other))

    def __rsub__(self, other):
        return Octant(int(other) - int(self))

    def __neg__(self):
        return Octant(-int(self))

    def __mul__(self, other):
        return Octant(int(self) * int(other))

    __rmul__ = __mul__

    @property
    def radians(self) -> float:
        return int(self) * math.pi / 4

    def __repr__(self) -> str:
        return f"Octant({int(self)})"


# gate matrices -------------------------------------------------------------

_S2 = 1 / math.sqrt(2)
H = np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
S = np.diag([1, 1j]).astype(complex)
T = np.diag([1, np.exp(1j * math.pi / 4)]).astype(complex)
I2 = np.eye(2, dtype=complex)


def rz(k: int) -> np.ndarray:
    """Phase gate diag(1, e^{i k pi/4}); maps |+> to |+_k>."""
    return np.diag([1, np.exp(1j * math.pi * (int(k) % 8) / 4)]).astype(complex)


def phase(k: int) -> complex:
    return complex(np.exp(1j * math.pi * (int(k) % 8) / 4))


def plus_vec(k: int) -> np.ndarray:
    return np.array([_S2, _S2 * phase(k)], dtype=complex)


def minus_vec(k: int) -> np.ndarray:
    return np.array([_S2, -_S2 * phase(k)], dtype=complex)


def bb84_vec(b1: int, b2: int) -> np.ndarray:
    """H^{b1} X^{b2} |0>."""
    v = np.array([1, 0], dtype=complex) if not b2 else np.array([0, 1], dtype=complex)
    return H @ v if b1 else v


# states --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray
    qubit_count: int

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        object.__setattr__(self, "amplitudes", amps)
        if amps.shape[0] != 1 << self.qubit_count:
            raise DimMismatch(f"{amps.shape[0]} amplitudes for {self.qubit_count} qubits")
        if abs(np.linalg.norm(amps) - 1) > STATE_TOL:
            raise ZeroNorm(f"state norm {np.linalg.norm(amps):.3g} != 1")

    @classmethod
    def from_vector(cls, vec, normalize: bool = True) -> "PureState":
        v = np.asarray(vec, dtype=np.complex128).reshape(-1)
        q = int(round(math.log2(v.shape[0])))
        if normalize:
            nrm = np.linalg.norm(v)
            if nrm < 1e-12:
                raise ZeroNorm("cannot normalise a zero vector")
            v = v / nrm
        return cls(v, q)

    @classmethod
    def zeros(cls, n: int) -> "PureState":
        v = np.zeros(1 << n, dtype=complex)
        v[0] = 1
        return cls(v, n)

    @classmethod
    def plus(cls, k: int = 0) -> "PureState":
        return cls(plus_vec(k), 1)

    @classmethod
    def bb84(cls, b1: int, b2: int) -> "PureState":
        return cls(bb84_vec(b1, b2), 1)

    def tensor(self, *others: "PureState") -> "PureState":
        v, q = self.amplitudes, self.qubit_count
        for o in others:
            v = np.kron(v, o.amplitudes)
            q += o.qubit_count
        return PureState(v, q)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "PureState") -> float:
        """|<self|other>|^2"""
        return float(abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2)

    def to_json(self) -> str:
        inter = np.column_stack([self.amplitudes.real, self.amplitudes.imag]).reshape(-1)
        return json.dumps({"qubits": self.qubit_count, "amplitudes": inter.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "PureState":
        d = json.loads(text)
        a = np.asarray(d["amplitudes"], dtype=float).reshape(-1, 2)
        return cls(a[:, 0] + 1j * a[:, 1], d["qubits"])


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimMismatch("density matrix must be square")
        object.__setattr__(self, "entries", m)
        if np.max(np.abs(m - m.conj().T), initial=0.0) > STATE_TOL:
            raise QsimError("density matrix is not Hermitian")
        tr = float(np.trace(m).real)
        if tr < -STATE_TOL or tr > 1 + STATE_TOL:
            raise QsimError(f"trace {tr} outside [0, 1]")
        if m.shape[0] and np.linalg.eigvalsh(m).min() < -STATE_TOL:
            raise QsimError("density matrix is not positive semidefinite")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def normalized(self) -> "DensityMatrix":
        tr = self.trace
        if tr < 1e-12:
            raise ZeroNorm("cannot normalise a zero-trace operator")
        return DensityMatrix(self.entries / tr)

    def purity(self) -> float:
        return float(np.trace(self.entries @ self.entries).real)

    def to_json(self) -> str:
        m = self.entries
        return json.dumps({"dim": self.dim,
                           "entries": np.stack([m.real, m.imag], -1).reshape(-1).tolist()})


StateLike = Union[PureState, DensityMatrix, np.ndarray]


def as_matrix(x: StateLike) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.entries
    if isinstance(x, PureState):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    if isinstance(x, ClassicalDescription):
        return x.matrix if x.matrix is not None else np.zeros((x.dim, x.dim), complex)
    a = np.asarray(x, dtype=complex)
    return np.outer(a, a.conj()) if a.ndim == 1 else a


@dataclass(frozen=True, eq=False)
class ClassicalDescription:
    """``[rho]``: a trace-one matrix, or the Null (all-zero) abort marker."""

    matrix: np.ndarray | None
    dim: int = 2

    def __post_init__(self):
        if self.matrix is None:
            return
        m = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "dim", m.shape[0])
        if abs(np.trace(m).real - 1) > STATE_TOL:
            raise QsimError("classical description must have unit trace")

    @classmethod
    def of(cls, state: StateLike) -> "ClassicalDescription":
        return cls(as_matrix(state))

    @classmethod
    def null(cls, dim: int = 2) -> "ClassicalDescription":
        return cls(None, dim)

    @property
    def is_null(self) -> bool:
        return self.matrix is None


NULL = ClassicalDescription.null()


# circuits ------------------------------------------------------------------

_ONE_Q = {"H": H, "X": X, "Z": Z, "S": S, "T": T,
          "Sdg": np.ascontiguousarray(S.conj().T), "Tdg": np.ascontiguousarray(T.conj().T)}


def _gate_parts(g) -> tuple[str, tuple[int, ...], object]:
    name = g[0]
    tgt = g[1]
    targets = tuple(tgt) if isinstance(tgt, (tuple, list)) else (int(tgt),)
    if name == "Rz":
        # ("Rz", q, k) or ("Rz", (q,), k)
        return name, targets, (g[2] if len(g) > 2 else 0)
    if name in ("CZ", "CNOT") and len(targets) == 1:
        targets = (targets[0], int(g[2]))
    return name, targets, None


def apply_circuit(state: PureState, gates: Iterable) -> PureState:
    """Apply gates given as ``(name, target[s][, param])`` tuples.

    Supported names: H X Z S T Sdg Tdg CZ CNOT Rz. ``Rz`` takes an octant.
    """
    n = state.qubit_count
    psi = state.amplitudes.copy()
    for g in gates:
        name, targets, param = _gate_parts(g)
        for q in targets:
            if not 0 <= q < n:
                raise BadTarget(f"{name} on qubit {q} of {n}")
        if name in _ONE_Q:
            kernels.apply_1q(psi, n, targets[0], _ONE_Q[name])
        elif name == "Rz":
            kernels.apply_phase(psi, n, targets[0], phase(int(param)))
        elif name == "CZ":
            if targets[0] == targets[1]:
                raise BadTarget("CZ needs two distinct qubits")
            kernels.apply_cz(psi, n, targets[0], targets[1])
        elif name == "CNOT":
            if targets[0] == targets[1]:
                raise BadTarget("CNOT needs two distinct qubits")
            kernels.apply_cnot(psi, n, targets[0], targets[1])
        else:
            raise BadTarget(f"unknown gate {name!r}")
    return PureState(psi, n)


def measure_basis(state: PureState, qubit: int, bras: Sequence[np.ndarray],
                  rng: np.random.Generator | None, forced: int | None = None
                  ) -> tuple[int, PureState]:
    """Projective measurement with outcome ``j`` on ``<bras[j]|``; qubit removed."""
    n = state.qubit_count
    if not 0 <= qubit < n:
        raise BadTarget(f"measure qubit {qubit} of {n}")
    branches = [kernels.contract(state.amplitudes, n, qubit, np.ascontiguousarray(b, complex))
                for b in bras]
    probs = np.array([float(np.vdot(v, v).real) for v in branches])
    if forced is None:
        p0 = probs[0] / probs.sum()
        s = 0 if rng.random() < p0 else 1
    else:
        s = int(forced)
        if probs[s] < 1e-12:
            raise ZeroNorm(f"forced outcome {s} has probability {probs[s]:.2e}")
    v = branches[s] / math.sqrt(probs[s])
    return s, PureState(v, n - 1)


def measure_rotated(state: PureState, qubit: int, delta: int,
                    rng: np.random.Generator | None, forced: int | None = None
                    ) -> tuple[int, PureState]:
    """Measure in ``{|+_delta>, |-_delta>}``; outcome 0 is ``|+_delta>``."""
    return measure_basis(state, qubit, [plus_vec(delta).conj(), minus_vec(delta).conj()],
                         rng, forced)


def measure_z(state: PureState, qubit: int, rng, forced=None) -> tuple[int, PureState]:
    return measure_basis(state, qubit, [np.array([1, 0], complex), np.array([0, 1], complex)],
                         rng, forced)


# overlaps and trace-lemma toolkit -------------------------------------------

def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    ma, mb = as_matrix(a), as_matrix(b)
    if ma.shape != mb.shape:
        raise DimMismatch(f"{ma.shape} vs {mb.shape}")
    return ma, mb


def trace_overlap(a: StateLike, b: StateLike) -> float:
    ma, mb = _pair(a, b)
    val = np.trace(ma @ mb)
    if abs(val.imag) > STATE_TOL:
        raise QsimError(f"Tr(ab) has imaginary part {val.imag:.2e}")
    return float(val.real)


def hs_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(m, "fro"))


def trace_distance(a: StateLike, b: StateLike) -> float:
    ma, mb = _pair(a, b)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(ma - mb)).sum())


def check_trace_identity(a: StateLike, b: StateLike) -> tuple[float, float]:
    """Both sides of Tr(ab) = (Tr a^2 + Tr b^2)/2 - ||a-b||_HS^2 / 2."""
    ma, mb = _pair(a, b)
    lhs = float(np.trace(ma @ mb).real)
    rhs = 0.5 * (float(np.trace(ma @ ma).real) + float(np.trace(mb @ mb).real)) \
        - 0.5 * hs_norm(ma - mb) ** 2
    return lhs, rhs


def trace_properties_hold(a: StateLike, b: StateLike, eps: float, tol: float = 1e-12) -> bool:
    """If Tr(ab) >= 1-eps then purities >= 1-2eps and ||a-b||_HS <= sqrt(2 eps)."""
    ma, mb = _pair(a, b)
    if float(np.trace(ma @ mb).real) < 1 - eps:
        return True
    return (float(np.trace(ma @ ma).real) >= 1 - 2 * eps - tol
            and float(np.trace(mb @ mb).real) >= 1 - 2 * eps - tol
            and hs_norm(ma - mb) <= math.sqrt(2 * eps) + tol)


def transitivity_holds(r1, r2, r3, eps1: float, eps2: float, tol: float = 1e-12) -> bool:
    """Tr(r1 r2) >= 1-eps1 and Tr(r2 r3) >= 1-eps2 imply Tr(r1 r3) >= 1-3(eps1+eps2)."""
    if trace_overlap(r1, r2) < 1 - eps1 or trace_overlap(r2, r3) < 1 - eps2:
        return True
    return trace_overlap(r1, r3) >= 1 - 3 * (eps1 + eps2) - tol


def closeness_bound(eps: float, dim: int) -> float:
    """Trace-distance bound implied by Tr(ab) >= 1-eps, via ||.||_1 <= sqrt(d) ||.||_HS."""
    return 0.5 * math.sqrt(dim) * math.sqrt(2 * eps)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None,
                   trace: float = 1.0) -> DensityMatrix:
    """Ginibre-sampled density matrix of the given rank and trace."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    m = (m + m.conj().T) / 2
    return DensityMatrix(trace * m / np.trace(m).real)


def random_pure(dim: int, rng: np.random.Generator) -> PureState:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return PureState.from_vector(v)


def mix(states: Sequence[StateLike], weights: Sequence[float]) -> DensityMatrix:
    return DensityMatrix(sum(w * as_matrix(s) for s, w in zip(states, weights)))


# POVM and rounding ---------------------------------------------------------

def povm_accuracy(desc: ClassicalDescription, state: StateLike, rng: np.random.Generator) -> int:
    """Sample the POVM {E0 = rho, E1 = I - rho}; 0 means "accepted"."""
    ms = as_matrix(state)
    if desc.is_null:
        if desc.dim != ms.shape[0]:
            raise DimMismatch("description and state dimensions differ")
        return 1
    p0 = trace_overlap(desc.matrix, ms)
    return 0 if rng.random() < p0 else 1


def round_to_set(omega: Sequence[ClassicalDescription], desc: ClassicalDescription | StateLike) -> int:
    """argmax_i Tr(omega_i desc); ties go to the lowest index."""
    if not omega:
        raise EmptySet("rounding set is empty")
    m = as_matrix(desc)
    best, best_i = -math.inf, 0
    for i, w in enumerate(omega):
        if w.is_null:
            raise QsimError("rounding set must hold matrices only")
        v = trace_overlap(w.matrix, m)
        if v > best + IDENTITY_TOL:
            best, best_i = v, i
    return best_i


def octant_descriptions(step: int = 1) -> list[ClassicalDescription]:
    return [ClassicalDescription.of(PureState.plus(k)) for k in range(0, 8, step)]


# quantum instruments -------------------------------------------------------

Branches = Mapping[str, Sequence[np.ndarray]]


@dataclass
class QuantumInstrumentStep:
    """One server round: Kraus branches keyed by the emitted classical string.

    ``kraus_branches`` is either a fixed mapping or a callable taking the
    classical input (a bit string of length ``in_bits``) and returning one.
    Kraus operators may be rectangular (registers can grow or shrink).
    """

    kraus_branches: Branches | Callable[[str], Branches]
    in_bits: int = 0
    label: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    def branches(self, classical_in: str = "") -> Branches:
        if callable(self.kraus_branches):
            if classical_in not in self._cache:
                self._cache[classical_in] = self.kraus_branches(classical_in)
            return self._cache[classical_in]
        return self.kraus_branches

    def completeness_error(self, classical_in: str = "") -> float:
        br = self.branches(classical_in)
        acc = None
        for ops in br.values():
            for k in ops:
                k = np.asarray(k)
                term = k.conj().T @ k
                acc = term if acc is None else acc + term
        if acc is None:
            return math.inf
        return float(np.max(np.abs(acc - np.eye(acc.shape[0]))))

    def check(self, classical_in: str = "", tol: float = INSTRUMENT_TOL) -> None:
        err = self.completeness_error(classical_in)
        if err > tol:
            raise NotTracePreserving(f"sum of K^dag K deviates from identity by {err:.2e}")

    def apply_branch(self, rho: np.ndarray, y: str, classical_in: str = "") -> np.ndarray:
        """Unnormalised ``E_y(rho) = sum_k K rho K^dag``."""
        ops = self.branches(classical_in).get(y)
        if ops is None:
            raise KeyError(y)
        out = None
        for k in ops:
            k = np.asarray(k)
            term = k @ rho @ k.conj().T
            out = term if out is None else out + term
        return out


def run_instrument(step: QuantumInstrumentStep, input: StateLike, classical_in: str = "",
                   rng: np.random.Generator | None = None, forced: str | None = None
                   ) -> tuple[str, DensityMatrix]:
    """Sample ``y`` with probability Tr E_y(rho) and return the renormalised branch."""
    step.check(classical_in)
    rho = as_matrix(input)
    br = step.branches(classical_in)
    keys = list(br.keys())
    if forced is not None:
        outs = {forced: step.apply_branch(rho, forced, classical_in)}
        y = forced
    else:
        outs = {y: step.apply_branch(rho, y, classical_in) for y in keys}
        probs = np.array([max(float(np.trace(outs[y]).real), 0.0) for y in keys])
        y = keys[int(rng.choice(len(keys), p=probs / probs.sum()))]
    tr = float(np.trace(outs[y]).real)
    if tr < 1e-12:
        raise ZeroNorm(f"instrument branch {y!r} has zero probability")
    return y, DensityMatrix(outs[y] / tr)
