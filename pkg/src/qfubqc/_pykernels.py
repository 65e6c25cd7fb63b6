"""Pure numpy versions of the statevector kernels (fallback backend)."""
import numpy as np


def _view(psi, n, q):
    return psi.reshape(1 << q, 2, 1 << (n - 1 - q))


def apply_1q(psi, n, q, u):
    v = _view(psi, n, q)
    a = v[:, 0, :].copy()
    b = v[:, 1, :]
    v[:, 0, :] = u[0, 0] * a + u[0, 1] * b
    v[:, 1, :] = u[1, 0] * a + u[1, 1] * b


def apply_cz(psi, n, qa, qb):
    lo, hi = sorted((qa, qb))
    v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - 1 - hi))
    v[:, 1, :, 1, :] *= -1


def apply_cnot(psi, n, qc, qt):
    lo, hi = sorted((qc, qt))
    v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (n - 1 - hi))
    if qc == lo:
        v[:, 1, :, :, :] = v[:, 1, :, ::-1, :].copy()
    else:
        v[:, :, :, 1, :] = v[:, ::-1, :, 1, :].copy()


def apply_phase(psi, n, q, phase):
    _view(psi, n, q)[:, 1, :] *= phase


def contract(psi, n, q, bra):
    v = _view(psi, n, q)
    return (bra[0] * v[:, 0, :] + bra[1] * v[:, 1, :]).reshape(-1)


def parity_table(rows, n):
    xs = np.arange(1 << n, dtype=np.uint64)
    out = np.zeros(1 << n, dtype=np.uint64)
    for r in rows:
        bit = np.bitwise_count(xs & np.uint64(r)).astype(np.uint64) & np.uint64(1)
        out = (out << np.uint64(1)) | bit
    return out
