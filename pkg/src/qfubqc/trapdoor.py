"""Two-regular trapdoor families with a homomorphic hardcore bit, plus Regev PKE.

Two interchangeable families sit behind :class:`TrapdoorKeyPair`:

* ``toy``: f(x) = A x over GF(2) with ker A = {0, z}. Exact and tiny, so every
  statement can be checked exhaustively. It is insecure on purpose.
* ``lwe``: an LWE-shaped family with a gadget trapdoor at desk parameters.
  The key carries ``y0``, an encoding of the hardcore bit d0 = B1, which is
  exactly the leakage analysed for the four-state protocol. No security is
  claimed at these sizes.

Domain points are Python ints (toy) or :class:`LWEPoint` tuples; ``encode``
maps either to the bit string the server holds in its preimage register.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .rng import bits as rand_bits


class TrapdoorError(Exception):
    pass


class NotTwoPreimages(TrapdoorError):
    """``y`` does not have exactly two well-formed preimages."""


class InversionFailed(NotTwoPreimages):
    """LWE flavour of :class:`NotTwoPreimages` (decoding found != 2 preimages)."""


class DecodeAmbiguous(TrapdoorError):
    pass


def parity(v: int) -> int:
    return v.bit_count() & 1


def inner(a: int, b: int) -> int:
    return parity(a & b)


def _gf2_rank(rows: list[int]) -> int:
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    return len(basis)


def _gf2_solve(rows: list[int], y: int, n: int) -> int | None:
    """Some x with (rows[i] . x) = bit i of y (row 0 = MSB); None if inconsistent."""
    m = len(rows)
    aug = [(rows[i] << 1) | ((y >> (m - 1 - i)) & 1) for i in range(m)]
    pivots = []
    r = 0
    for col in range(n - 1, -1, -1):
        bitm = 1 << (col + 1)
        piv = next((i for i in range(r, m) if aug[i] & bitm), None)
        if piv is None:
            continue
        aug[r], aug[piv] = aug[piv], aug[r]
        for i in range(m):
            if i != r and aug[i] & bitm:
                aug[i] ^= aug[r]
        pivots.append(col)
        r += 1
    if any(aug[i] == 1 for i in range(r, m)):
        return None
    x = 0
    for i, col in enumerate(pivots):
        if aug[i] & 1:
            x |= 1 << col
    return x


# toy family ----------------------------------------------------------------

@dataclass(frozen=True)
class ToyPublic:
    n: int
    rows: tuple[int, ...]  # n rows of A, row 0 -> most significant bit of y
    c: int                 # hardcore vector, h(x) = <c, x>

    @property
    def domain_bits(self) -> int:
        return self.n

    @property
    def range_bits(self) -> int:
        return len(self.rows)

    def evaluate(self, x: int) -> int:
        y = 0
        for r in self.rows:
            y = (y << 1) | inner(r, x)
        return y

    def hardcore(self, x: int) -> int:
        return inner(self.c, x)

    def encode(self, x: int) -> int:
        return x

    def table(self) -> np.ndarray:
        """f(x) for every x (used by the dense server and brute-force attacks)."""
        cached = self.__dict__.get("_table")
        if cached is None:
            cached = kernels.parity_table(np.array(self.rows, dtype=np.uint64), self.n)
            object.__setattr__(self, "_table", cached)
        return cached

    def hardcore_table(self) -> np.ndarray:
        return kernels.parity_table(np.array([self.c], dtype=np.uint64), self.n)

    def sample_domain(self, rng) -> int:
        return rand_bits(rng, self.n)

    def preimages_bruteforce(self, y: int) -> list[int]:
        return [int(x) for x in np.nonzero(self.table() == y)[0]]

    def to_dict(self) -> dict:
        return {"rows": list(self.rows), "c": self.c}


@dataclass(frozen=True)
class ToyTrapdoor:
    z: int
    c: int


# LWE family ----------------------------------------------------------------

@dataclass(frozen=True)
class LWEParams:
    n: int = 12
    m: int = 12
    q: int = 4093
    noise: int = 1       # |e0| bound; entries are rounded Gaussians clipped here
    bound: int = 480     # domain bound E on the error part of x
    sigma: float = 0.5

    @property
    def k(self) -> int:
        return math.ceil(math.log2(self.q))

    @property
    def half(self) -> int:
        return self.q // 2

    @property
    def ebits(self) -> int:
        return math.ceil(math.log2(2 * self.bound + 1))


class LWEPoint(NamedTuple):
    s: tuple[int, ...]
    e: tuple[int, ...]
    v: int
    c: int


def _centered(a, q):
    a = np.mod(a, q)
    return np.where(a > q // 2, a - q, a)


@dataclass(frozen=True, eq=False)
class LWEPublic:
    params: LWEParams
    K: np.ndarray   # (m + n k) x n over Z_q
    y0: np.ndarray  # K s0 + [e0; 0] + B1 floor(q/2) u1

    @property
    def domain_bits(self) -> int:
        p = self.params
        return p.n * p.k + p.m * p.ebits + 3

    def _raw(self, pt: LWEPoint) -> np.ndarray:
        p = self.params
        y = self.K @ np.asarray(pt.s, dtype=np.int64)
        y[: p.m] += np.asarray(pt.e, dtype=np.int64)
        y[0] += pt.v * p.half
        if pt.c:
            y = y + self.y0
        return np.mod(y, p.q)

    def evaluate(self, x: LWEPoint) -> tuple[int, ...]:
        return tuple(int(v) for v in self._raw(x))

    def hardcore(self, x: LWEPoint) -> int:
        return int(x.v)

    def encode(self, x: LWEPoint) -> int:
        """Bit string of the register: s | e+E | v | c | p, p fixing |x| = c mod 2."""
        p = self.params
        out = 0
        for si in x.s:
            out = (out << p.k) | int(si)
        for ei in x.e:
            out = (out << p.ebits) | (int(ei) + p.bound)
        out = (out << 1) | x.v
        out = (out << 1) | x.c
        par = parity(out) ^ x.c
        return (out << 1) | par

    def in_domain(self, x: LWEPoint) -> bool:
        p = self.params
        return all(0 <= si < p.q for si in x.s) and all(abs(ei) <= p.bound for ei in x.e)

    def sample_domain(self, rng) -> LWEPoint:
        p = self.params
        s = tuple(int(v) for v in rng.integers(0, p.q, p.n))
        e = tuple(int(v) for v in rng.integers(-p.bound, p.bound + 1, p.m))
        return LWEPoint(s, e, int(rng.integers(2)), int(rng.integers(2)))

    def to_dict(self) -> dict:
        return {"K": _b64(self.K), "y0": _b64(self.y0), "shape": list(self.K.shape)}


@dataclass(frozen=True, eq=False)
class LWETrapdoor:
    R: np.ndarray  # (n k) x m, one +-1 per row
    B1: int


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<i8").tobytes()).decode()


def _unb64(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<i8").reshape(shape).copy()


def _gadget(params: LWEParams) -> np.ndarray:
    g = np.array([1 << j for j in range(params.k)], dtype=np.int64)
    return np.kron(np.eye(params.n, dtype=np.int64), g.reshape(-1, 1))


def _decode_gadget(w: np.ndarray, params: LWEParams, slack: int) -> np.ndarray | None:
    """Recover s from w = G s + noise, |noise| <= slack < q/4."""
    q, k = params.q, params.k
    pw = (1 << np.arange(k, dtype=np.int64))
    s = np.empty(params.n, dtype=np.int64)
    offs = np.arange(-slack, slack + 1, dtype=np.int64)
    for i in range(params.n):
        wi = w[i * k:(i + 1) * k]
        cand = np.mod(wi[0] + offs, q)
        res = _centered(wi[None, :] - cand[:, None] * pw[None, :], q)
        score = np.abs(res).max(axis=1)
        j = int(np.argmin(score))
        if score[j] > slack:
            return None
        s[i] = cand[j]
    return s


# unified key pair -----------------------------------------------------------

@dataclass(eq=False)
class TrapdoorKeyPair:
    k: ToyPublic | LWEPublic
    t_k: ToyTrapdoor | LWETrapdoor
    family_tag: str
    _inv_cache: dict = field(default_factory=dict, repr=False)

    @property
    def d0(self) -> int:
        if self.family_tag == "toy":
            return inner(self.t_k.c, self.t_k.z)
        return self.t_k.B1

    def evaluate(self, x):
        return self.k.evaluate(x)

    def hardcore(self, x) -> int:
        return self.k.hardcore(x)

    def invert(self, y):
        return invert(self, y)

    def params_block(self) -> dict:
        if self.family_tag == "toy":
            return {"family": "toy", "n": self.k.n, "q": 2, "noise": 0}
        p = self.k.params
        return {"family": "lwe", "n": p.n, "q": p.q, "noise": p.noise,
                "m": p.m, "bound": p.bound}

    def to_json(self, include_trapdoor: bool = False) -> str:
        d = {"params": self.params_block(), "k": self.k.to_dict()}
        if include_trapdoor:
            if self.family_tag == "toy":
                d["t_k"] = {"z": self.t_k.z, "c": self.t_k.c}
            else:
                d["t_k"] = {"R": _b64(self.t_k.R), "B1": self.t_k.B1,
                            "shape": list(self.t_k.R.shape)}
        return json.dumps(d, sort_keys=True)

    def public_bytes(self) -> bytes:
        return self.to_json(include_trapdoor=False).encode()

    @classmethod
    def from_json(cls, text: str) -> "TrapdoorKeyPair":
        d = json.loads(text)
        pb = d["params"]
        if pb["family"] == "toy":
            k = ToyPublic(pb["n"], tuple(d["k"]["rows"]), d["k"]["c"])
            t = d.get("t_k")
            return cls(k, ToyTrapdoor(t["z"], t["c"]) if t else None, "toy")
        params = LWEParams(n=pb["n"], m=pb["m"], q=pb["q"], noise=pb["noise"], bound=pb["bound"])
        shape = d["k"]["shape"]
        k = LWEPublic(params, _unb64(d["k"]["K"], shape), _unb64(d["k"]["y0"], (shape[0],)))
        t = d.get("t_k")
        td = LWETrapdoor(_unb64(t["R"], t["shape"]), t["B1"]) if t else None
        return cls(k, td, "lwe")


def toy_gen(n: int, rng, odd_kernel: bool = True) -> TrapdoorKeyPair:
    """Toy key: A is n x n of rank n-1 with kernel {0, z}; h(x) = <c, x>.

    With ``odd_kernel`` the secret z has odd Hamming weight, which the rotated
    four-state run needs (its phase depends on |x xor x'| mod 2).
    """
    if not 2 <= n <= 12:
        raise ValueError("toy family needs 2 <= n <= 12")
    while True:
        z = rand_bits(rng, n)
        if z and (not odd_kernel or parity(z)):
            break
    while True:
        rows = []
        while len(rows) < n:
            r = rand_bits(rng, n)
            if inner(r, z) == 0:
                rows.append(r)
        if _gf2_rank(rows) == n - 1:
            break
    c = rand_bits(rng, n)
    return TrapdoorKeyPair(ToyPublic(n, tuple(rows), c), ToyTrapdoor(z, c), "toy")


def _sample_noise(params: LWEParams, size, rng) -> np.ndarray:
    e = np.rint(rng.normal(0.0, params.sigma, size)).astype(np.int64)
    return np.clip(e, -params.noise, params.noise)


def lwe_gen(params: LWEParams | None = None, rng=None, B1: int | None = None) -> TrapdoorKeyPair:
    """Gadget-trapdoor key with ``y0`` encoding the hardcore bit ``B1``."""
    p = params or LWEParams()
    if 4 * (p.bound + p.noise + 1) >= p.q:
        raise ValueError("domain bound too large for unique decoding")
    A = rng.integers(0, p.q, (p.m, p.n)).astype(np.int64)
    R = np.zeros((p.n * p.k, p.m), dtype=np.int64)
    R[np.arange(p.n * p.k), rng.integers(0, p.m, p.n * p.k)] = rng.choice([-1, 1], p.n * p.k)
    K = np.mod(np.vstack([A, _gadget(p) - R @ A]), p.q)
    b1 = int(rng.integers(2)) if B1 is None else int(B1)
    s0 = rng.integers(0, p.q, p.n).astype(np.int64)
    e0 = _sample_noise(p, p.m, rng)
    y0 = K @ s0
    y0[: p.m] += e0
    y0[0] += b1 * p.half
    return TrapdoorKeyPair(LWEPublic(p, K, np.mod(y0, p.q)), LWETrapdoor(R, b1), "lwe")


def _lwe_try(kp: TrapdoorKeyPair, w: np.ndarray, slack: int, ebound: int):
    """Decode w = K s + [e; 0] with |e| <= ebound; returns (s, e) or None."""
    p = kp.k.params
    top, bottom = w[: p.m], w[p.m:]
    g = np.mod(bottom + kp.t_k.R @ top, p.q)
    s = _decode_gadget(g, p, slack)
    if s is None:
        return None
    e = _centered(top - kp.k.K[: p.m] @ s, p.q)
    if np.abs(e).max(initial=0) > ebound:
        return None
    if np.any(np.mod(kp.k.K[p.m:] @ s - bottom, p.q)):
        return None
    return s, e


def lwe_decrypt_y0(kp: TrapdoorKeyPair, y0: np.ndarray | None = None) -> int:
    """Dec_{t_k}(y0): which B1 makes y0 - B1 floor(q/2) u1 a small-noise LWE sample."""
    p = kp.k.params
    y0 = kp.k.y0 if y0 is None else np.asarray(y0, dtype=np.int64)
    hits = []
    for b in (0, 1):
        w = y0.copy()
        w[0] -= b * p.half
        if _lwe_try(kp, np.mod(w, p.q), p.noise + 1, p.noise + 1) is not None:
            hits.append(b)
    if len(hits) != 1:
        raise DecodeAmbiguous(f"y0 decodes to {hits}")
    return hits[0]


def invert(kp: TrapdoorKeyPair, y):
    """Both preimages of ``y`` in lexicographic order of their encodings."""
    if kp.family_tag == "toy":
        k: ToyPublic = kp.k
        if not isinstance(y, (int, np.integer)) or not 0 <= int(y) < (1 << k.range_bits):
            raise NotTwoPreimages(f"{y!r} is not a range element")
        x = _gf2_solve(list(k.rows), int(y), k.n)
        if x is None:
            raise NotTwoPreimages(f"y={y} is outside the image")
        x2 = x ^ kp.t_k.z
        return tuple(sorted((x, x2)))
    return _lwe_invert(kp, y)


def _lwe_invert(kp: TrapdoorKeyPair, y):
    p = kp.k.params
    try:
        yv = np.mod(np.asarray(y, dtype=np.int64).reshape(-1), p.q)
    except (TypeError, ValueError) as exc:
        raise InversionFailed(f"malformed y: {exc}") from None
    if yv.shape[0] != kp.k.K.shape[0]:
        raise InversionFailed("wrong range length")
    key = yv.tobytes()
    if key in kp._inv_cache:
        res = kp._inv_cache[key]
        if isinstance(res, Exception):
            raise res
        return res
    found = []
    for c in (0, 1):
        for v in (0, 1):
            w = yv - (kp.k.y0 if c else 0)
            w = w.copy()
            w[0] -= v * p.half
            got = _lwe_try(kp, np.mod(w, p.q), p.bound + 1, p.bound)
            if got is not None:
                s, e = got
                found.append(LWEPoint(tuple(int(t) for t in s), tuple(int(t) for t in e), v, c))
    if len(found) != 2:
        err = InversionFailed(f"found {len(found)} preimage(s)")
        kp._inv_cache[key] = err
        raise err
    res = tuple(sorted(found, key=kp.k.encode))
    kp._inv_cache[key] = res
    return res


def preimages(kp: TrapdoorKeyPair, y) -> tuple:
    """Physical preimage set (no exception): what a superposition collapses onto."""
    try:
        return invert(kp, y)
    except NotTwoPreimages:
        if kp.family_tag == "toy":
            return tuple(kp.k.preimages_bruteforce(int(y)))
        p = kp.k.params
        yv = np.mod(np.asarray(y, dtype=np.int64), p.q)
        out = []
        for c in (0, 1):
            for v in (0, 1):
                w = (yv - (kp.k.y0 if c else 0)).copy()
                w[0] -= v * p.half
                got = _lwe_try(kp, np.mod(w, p.q), p.bound + 1, p.bound)
                if got is not None:
                    out.append(LWEPoint(tuple(map(int, got[0])), tuple(map(int, got[1])), v, c))
        return tuple(out)


def gen(family: str, rng, n: int = 6, params: LWEParams | None = None) -> TrapdoorKeyPair:
    if family == "toy":
        return toy_gen(n, rng)
    if family == "lwe":
        return lwe_gen(params, rng)
    raise ValueError(f"unknown family {family!r}")


# Regev public-key encryption ---------------------------------------------

@dataclass(frozen=True)
class RegevParams:
    n: int = 16
    m: int = 64
    q: int = 4093
    noise: int = 2

    @property
    def logq(self) -> int:
        return math.ceil(math.log2(self.q))


@dataclass(frozen=True, eq=False)
class RegevPublicKey:
    params: RegevParams
    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class RegevKeyPair:
    pk: RegevPublicKey
    sk: np.ndarray

    @property
    def params(self) -> RegevParams:
        return self.pk.params


@dataclass(frozen=True, eq=False)
class RegevCiphertext:
    u: np.ndarray
    w: int
    q: int

    @property
    def bit_length(self) -> int:
        return (len(self.u) + 1) * math.ceil(math.log2(self.q))

    def to_bytes(self) -> bytes:
        width = math.ceil(math.log2(self.q))
        acc = 0
        for v in list(self.u) + [self.w]:
            acc = (acc << width) | int(v)
        return acc.to_bytes((self.bit_length + 7) // 8, "big")

    def __eq__(self, other):
        return isinstance(other, RegevCiphertext) and self.w == other.w \
            and np.array_equal(self.u, other.u)

    def __hash__(self):
        return hash(self.to_bytes())


def regev_keygen(params: RegevParams | None = None, rng=None) -> RegevKeyPair:
    p = params or RegevParams()
    A = rng.integers(0, p.q, (p.m, p.n)).astype(np.int64)
    s = rng.integers(0, p.q, p.n).astype(np.int64)
    e = rng.integers(-p.noise, p.noise + 1, p.m).astype(np.int64)
    return RegevKeyPair(RegevPublicKey(p, A, np.mod(A @ s + e, p.q)), s)


def regev_enc(pk: RegevPublicKey, bit: int, rng) -> RegevCiphertext:
    p = pk.params
    r = rng.integers(0, 2, p.m).astype(np.int64)
    u = np.mod(pk.A.T @ r, p.q)
    w = int((pk.b @ r + int(bit) * (p.q // 2)) % p.q)
    return RegevCiphertext(u, w, p.q)


def regev_dec(kp: RegevKeyPair, ct: RegevCiphertext) -> int:
    q = kp.params.q
    d = int(_centered(np.int64(ct.w - int(ct.u @ kp.sk)), q))
    if abs(d) <= q // 8:
        return 0
    if abs(d) >= 3 * q // 8:
        return 1
    raise DecodeAmbiguous(f"centred value {d} too close to q/4")
