# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: blocked bank search and harmonic window painting.

Semantics mirror ``patchmem.kernels.pure`` exactly, including block
boundaries and first-index tie-breaking, so both backends are
interchangeable bit-for-bit.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_blas cimport sgemm

cnp.import_array()


def bank_search(const cnp.float32_t[:, ::1] queries,
                const cnp.float32_t[:, ::1] bank,
                Py_ssize_t block_rows=8192):
    """Exact max-dot search; fuses the argmax into the block loop."""
    cdef Py_ssize_t nq = queries.shape[0]
    cdef Py_ssize_t d = queries.shape[1]
    cdef Py_ssize_t n = bank.shape[0]
    best_arr = np.full(nq, -2.0, dtype=np.float32)
    idx_arr = np.zeros(nq, dtype=np.int64)
    cdef cnp.float32_t[::1] best = best_arr
    cdef cnp.int64_t[::1] best_idx = idx_arr
    if n == 0 or nq == 0:
        return best_arr, idx_arr
    if block_rows > n:
        block_rows = n
    buf_arr = np.empty((block_rows, nq), dtype=np.float32)
    cdef cnp.float32_t[:, ::1] buf = buf_arr
    cdef Py_ssize_t start = 0, b, i, j
    cdef int m_i, n_i, k_i, lda, ldb, ldc
    cdef float alpha = 1.0, beta = 0.0, v
    cdef char *trans_a = "T"
    cdef char *trans_b = "N"
    with nogil:
        while start < n:
            b = block_rows if start + block_rows <= n else n - start
            # Row-major buf[j, i] = dot(bank[start+j], queries[i]) via a
            # column-major sgemm on the transposed view.
            m_i = <int> nq
            n_i = <int> b
            k_i = <int> d
            lda = <int> d
            ldb = <int> d
            ldc = <int> nq
            # sgemm never writes A or B; cast away const for the f2py-era
            # BLAS signature.
            sgemm(trans_a, trans_b, &m_i, &n_i, &k_i, &alpha,
                  <cnp.float32_t *> <void *> &queries[0, 0], &lda,
                  <cnp.float32_t *> <void *> &bank[start, 0], &ldb,
                  &beta, &buf[0, 0], &ldc)
            for j in range(b):
                for i in range(nq):
                    v = buf[j, i]
                    if v > best[i]:
                        best[i] = v
                        best_idx[i] = start + j
            start += b
    return best_arr, idx_arr


def paint_harmonic(const cnp.int64_t[:, ::1] boxes,
                   const cnp.float64_t[::1] scores,
                   Py_ssize_t rows, Py_ssize_t cols, double eps):
    """Accumulate reciprocal scores and coverage counts over window boxes."""
    recip_arr = np.zeros((rows, cols), dtype=np.float64)
    count_arr = np.zeros((rows, cols), dtype=np.float64)
    cdef cnp.float64_t[:, ::1] recip = recip_arr
    cdef cnp.float64_t[:, ::1] count = count_arr
    cdef Py_ssize_t k = boxes.shape[0]
    cdef Py_ssize_t t, r, c, r0, c0, r1, c1
    cdef double s, inv
    with nogil:
        for t in range(k):
            s = scores[t]
            if s < eps:
                s = eps
            inv = 1.0 / s
            r0 = boxes[t, 0]
            c0 = boxes[t, 1]
            r1 = r0 + boxes[t, 2]
            c1 = c0 + boxes[t, 3]
            for r in range(r0, r1):
                for c in range(c0, c1):
                    recip[r, c] += inv
                    count[r, c] += 1.0
    return recip_arr, count_arr
