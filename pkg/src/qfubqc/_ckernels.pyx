# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled statevector kernels.

Qubit 0 is the most significant bit of the basis index. All routines
mirror ``_pykernels`` exactly; the selector in ``kernels`` picks one.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def apply_1q(double complex[::1] psi, int n, int q, double complex[:, ::1] u):
    cdef Py_ssize_t stride = (<Py_ssize_t>1) << (n - 1 - q)
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t base, j
    cdef double complex a, b
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    for base in range(0, dim, 2 * stride):
        for j in range(base, base + stride):
            a = psi[j]
            b = psi[j + stride]
            psi[j] = u00 * a + u01 * b
            psi[j + stride] = u10 * a + u11 * b


def apply_cz(double complex[::1] psi, int n, int qa, int qb):
    cdef Py_ssize_t ma = (<Py_ssize_t>1) << (n - 1 - qa)
    cdef Py_ssize_t mb = (<Py_ssize_t>1) << (n - 1 - qb)
    cdef Py_ssize_t both = ma | mb
    cdef Py_ssize_t i, dim = psi.shape[0]
    for i in range(dim):
        if (i & both) == both:
            psi[i] = -psi[i]


def apply_cnot(double complex[::1] psi, int n, int qc, int qt):
    cdef Py_ssize_t mc = (<Py_ssize_t>1) << (n - 1 - qc)
    cdef Py_ssize_t mt = (<Py_ssize_t>1) << (n - 1 - qt)
    cdef Py_ssize_t i, dim = psi.shape[0]
    cdef double complex tmp
    for i in range(dim):
        if (i & mc) and not (i & mt):
            tmp = psi[i]
            psi[i] = psi[i | mt]
            psi[i | mt] = tmp


def apply_phase(double complex[::1] psi, int n, int q, double complex phase):
    cdef Py_ssize_t m = (<Py_ssize_t>1) << (n - 1 - q)
    cdef Py_ssize_t i, dim = psi.shape[0]
    for i in range(dim):
        if i & m:
            psi[i] = psi[i] * phase


def contract(double complex[::1] psi, int n, int q, double complex[::1] bra):
    """Contract qubit ``q`` with ``bra`` and drop it (unnormalized)."""
    cdef Py_ssize_t stride = (<Py_ssize_t>1) << (n - 1 - q)
    cdef Py_ssize_t dim = psi.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(dim // 2, dtype=np.complex128)
    cdef double complex[::1] o = out
    cdef double complex b0 = bra[0], b1 = bra[1]
    cdef Py_ssize_t hi, lo, k = 0, base
    for base in range(0, dim, 2 * stride):
        for lo in range(stride):
            o[k] = b0 * psi[base + lo] + b1 * psi[base + stride + lo]
            k += 1
    return out


def parity_table(cnp.uint64_t[::1] rows, int n):
    """Evaluate the GF(2) map x -> (row_r . x)_r for every x < 2**n.

    Row 0 lands in the most significant output bit.
    """
    cdef Py_ssize_t nx = (<Py_ssize_t>1) << n
    cdef Py_ssize_t nr = rows.shape[0]
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.zeros(nx, dtype=np.uint64)
    cdef cnp.uint64_t[::1] o = out
    cdef Py_ssize_t x, r
    cdef cnp.uint64_t acc, v
    for x in range(nx):
        acc = 0
        for r in range(nr):
            v = rows[r] & <cnp.uint64_t>x
            v ^= v >> 32
            v ^= v >> 16
            v ^= v >> 8
            v ^= v >> 4
            v ^= v >> 2
            v ^= v >> 1
            acc = (acc << 1) | (v & 1)
        o[x] = acc
    return out
