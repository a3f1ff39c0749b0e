# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bit-twiddling kernels.

All routines mutate their output argument in place and release the GIL.
Row index bit ``q`` encodes qubit ``q``.
"""

cimport cython
from libc.stdint cimport int64_t


cdef inline int _popcount(int64_t v) nogil:
    cdef int c = 0
    while v:
        v &= v - 1
        c += 1
    return c


def apply_1q(double complex[:, :] mat, int qubit, double complex[:, ::1] u):
    cdef Py_ssize_t dim = mat.shape[0]
    cdef Py_ssize_t ncols = mat.shape[1]
    cdef int64_t bit = (<int64_t>1) << qubit
    cdef double complex u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    cdef double complex a0, a1
    cdef Py_ssize_t i, j, c
    with nogil:
        for i in range(dim):
            if i & bit:
                continue
            j = i | bit
            for c in range(ncols):
                a0 = mat[i, c]
                a1 = mat[j, c]
                mat[i, c] = u00 * a0 + u01 * a1
                mat[j, c] = u10 * a0 + u11 * a1


def flip_mask_apply(int64_t[::1] masks, double complex[:, ::1] diags,
                    double complex[:, ::1] psi, double complex[:, ::1] out):
    cdef Py_ssize_t nmask = masks.shape[0]
    cdef Py_ssize_t dim = psi.shape[0]
    cdef Py_ssize_t ncols = psi.shape[1]
    cdef Py_ssize_t k, x, src, c
    cdef double complex d
    with nogil:
        for k in range(nmask):
            for x in range(dim):
                d = diags[k, x]
                if d.real == 0.0 and d.imag == 0.0:
                    continue
                src = x ^ masks[k]
                for c in range(ncols):
                    out[x, c] = out[x, c] + d * psi[src, c]


def decay_dissipator(double complex[:, ::1] rho, double complex[:, ::1] out,
                     double gamma, int64_t jump_mask):
    cdef Py_ssize_t dim = rho.shape[0]
    cdef Py_ssize_t x, y
    cdef int64_t b, free_bits
    cdef double half = 0.5 * gamma
    cdef int px
    with nogil:
        for x in range(dim):
            px = _popcount(x & jump_mask)
            for y in range(dim):
                out[x, y] = out[x, y] - half * (px + _popcount(y & jump_mask)) * rho[x, y]
                # sigma^- rho sigma^+ lands on (x, y) only where both bits are clear
                free_bits = jump_mask & ~x & ~y
                while free_bits:
                    b = free_bits & (-free_bits)
                    out[x, y] = out[x, y] + gamma * rho[x | b, y | b]
                    free_bits ^= b
