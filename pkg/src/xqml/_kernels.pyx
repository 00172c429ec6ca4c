# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for applying small dense matrices to qubit registers.

A register of ``n`` qubits is a flat complex vector of length ``2**n`` with
qubit 0 as the most significant bit. Density matrices are handled by the
caller as ``2n``-qubit vectors (row qubits first, then column qubits).
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF MAX_K = 4


cdef void _single(const double complex[::1] vec, double complex[::1] out,
                  double complex* m, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t size = vec.shape[0]
    cdef Py_ssize_t block, i
    cdef double complex a, b
    cdef double complex m00 = m[0], m01 = m[1], m10 = m[2], m11 = m[3]
    block = 0
    while block < size:
        for i in range(block, block + stride):
            a = vec[i]
            b = vec[i + stride]
            out[i] = m00 * a + m01 * b
            out[i + stride] = m10 * a + m11 * b
        block += 2 * stride


def apply_matrix(const double complex[::1] vec, const double complex[:, ::1] mat,
                 targets, int n_qubits):
    """Return ``mat`` applied to ``vec`` on the qubits ``targets``."""
    cdef int k = len(targets)
    if k < 1 or k > MAX_K:
        raise ValueError(f"kernel supports 1..{MAX_K} target qubits, got {k}")
    cdef Py_ssize_t dim = 1 << k
    if mat.shape[0] != dim or mat.shape[1] != dim:
        raise ValueError("matrix shape does not match target count")
    if vec.shape[0] != (<Py_ssize_t>1 << n_qubits):
        raise ValueError("vector length does not match qubit count")

    cdef Py_ssize_t offsets[1 << MAX_K]
    cdef int positions[MAX_K]
    cdef int sorted_pos[MAX_K]
    cdef double complex tmp[1 << MAX_K]
    cdef double complex m[(1 << MAX_K) * (1 << MAX_K)]
    cdef int i, j, p, t
    for i in range(k):
        t = targets[i]
        if t < 0 or t >= n_qubits:
            raise ValueError(f"target {t} out of range")
        positions[i] = n_qubits - 1 - t
        sorted_pos[i] = positions[i]
    # insertion sort, k <= 4
    for i in range(1, k):
        p = sorted_pos[i]
        j = i - 1
        while j >= 0 and sorted_pos[j] > p:
            sorted_pos[j + 1] = sorted_pos[j]
            j -= 1
        sorted_pos[j + 1] = p
    for i in range(1, k):
        if sorted_pos[i] == sorted_pos[i - 1]:
            raise ValueError("target qubits must be distinct")
    for j in range(dim):
        offsets[j] = 0
        for i in range(k):
            if (j >> (k - 1 - i)) & 1:
                offsets[j] += (<Py_ssize_t>1) << positions[i]

    cdef Py_ssize_t r, c
    for r in range(dim):
        for c in range(dim):
            m[r * dim + c] = mat[r, c]

    out_arr = np.empty(vec.shape[0], dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    if k == 1:
        _single(vec, out, m, (<Py_ssize_t>1) << positions[0])
        return out_arr
    cdef Py_ssize_t n_groups = (<Py_ssize_t>1) << (n_qubits - k)
    cdef Py_ssize_t g, base
    cdef double acc_re, acc_im
    with nogil:
        for g in range(n_groups):
            base = g
            for i in range(k):
                p = sorted_pos[i]
                base = ((base >> p) << (p + 1)) | (base & (((<Py_ssize_t>1) << p) - 1))
            for c in range(dim):
                tmp[c] = vec[base + offsets[c]]
            for r in range(dim):
                acc_re = 0.0
                acc_im = 0.0
                for c in range(dim):
                    acc_re = acc_re + m[r * dim + c].real * tmp[c].real - m[r * dim + c].imag * tmp[c].imag
                    acc_im = acc_im + m[r * dim + c].real * tmp[c].imag + m[r * dim + c].imag * tmp[c].real
                out[base + offsets[r]].real = acc_re
                out[base + offsets[r]].imag = acc_im
    return out_arr


def apply_diagonal(const double complex[::1] vec, const double complex[::1] diag,
                   targets, int n_qubits):
    """Return ``diag(diag)`` applied to ``vec`` on the qubits ``targets``."""
    cdef int k = len(targets)
    if k < 1 or k > MAX_K:
        raise ValueError(f"kernel supports 1..{MAX_K} target qubits, got {k}")
    if diag.shape[0] != (1 << k):
        raise ValueError("diagonal length does not match target count")
    cdef int positions[MAX_K]
    cdef int i, j, t
    for i in range(k):
        t = targets[i]
        if t < 0 or t >= n_qubits:
            raise ValueError(f"target {t} out of range")
        positions[i] = n_qubits - 1 - t
        for j in range(i):
            if positions[j] == positions[i]:
                raise ValueError("target qubits must be distinct")
    if vec.shape[0] != (<Py_ssize_t>1 << n_qubits):
        raise ValueError("vector length does not match qubit count")
    out_arr = np.empty(vec.shape[0], dtype=np.complex128)
    cdef double complex[::1] out = out_arr
    cdef Py_ssize_t idx, size = vec.shape[0]
    cdef int sub
    with nogil:
        for idx in range(size):
            sub = 0
            for i in range(k):
                sub = (sub << 1) | <int>((idx >> positions[i]) & 1)
            out[idx] = vec[idx] * diag[sub]
    return out_arr
