# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernel. Mirrors ``_trajectory_py.run_trajectories`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

DEF OP_U1 = 0
DEF OP_CZ = 1
DEF OP_DEP1 = 2
DEF OP_DEP2 = 3
DEF OP_AMPD = 4
DEF OP_DEPH = 5


cdef inline void _apply_u1(double* re, double* im, int dim, int mask,
                           double[:, :, ::1] mre, double[:, :, ::1] mim, int k) nogil:
    cdef int s, s1
    cdef double m00r = mre[k, 0, 0], m00i = mim[k, 0, 0]
    cdef double m01r = mre[k, 0, 1], m01i = mim[k, 0, 1]
    cdef double m10r = mre[k, 1, 0], m10i = mim[k, 1, 0]
    cdef double m11r = mre[k, 1, 1], m11i = mim[k, 1, 1]
    cdef double ar0, ai0, ar1, ai1
    for s in range(dim):
        if s & mask:
            continue
        s1 = s | mask
        ar0 = re[s]
        ai0 = im[s]
        ar1 = re[s1]
        ai1 = im[s1]
        re[s] = (m00r * ar0 - m00i * ai0) + (m01r * ar1 - m01i * ai1)
        im[s] = (m00r * ai0 + m00i * ar0) + (m01r * ai1 + m01i * ar1)
        re[s1] = (m10r * ar0 - m10i * ai0) + (m11r * ar1 - m11i * ai1)
        im[s1] = (m10r * ai0 + m10i * ar0) + (m11r * ai1 + m11i * ar1)


def run_trajectories(const int[::1] opcode, const int[::1] qa, const int[::1] qb,
                     const double[::1] param, const int[::1] midx,
                     double[:, :, ::1] mre, double[:, :, ::1] mim,
                     int nq, const int[::1] meas,
                     const double[::1] ro01, const double[::1] ro10,
                     const double[:, ::1] uni):
    cdef Py_ssize_t B = uni.shape[0]
    cdef Py_ssize_t n_instr = opcode.shape[0]
    cdef int n_meas = meas.shape[0]
    cdef int dim = 1 << nq
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out_arr = np.zeros(B, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    cdef double* re = <double*> malloc(dim * sizeof(double))
    cdef double* im = <double*> malloc(dim * sizeof(double))
    cdef Py_ssize_t t, i
    cdef int s, d, op, k, ka, kb, ma, mb, m, chosen, last, j, bit
    cdef double u, p, g, p1, scale, f0, f1, c, w
    cdef long long outcome
    if re == NULL or im == NULL:
        free(re)
        free(im)
        raise MemoryError()
    try:
        with nogil:
            for t in range(B):
                for s in range(dim):
                    re[s] = 0.0
                    im[s] = 0.0
                re[0] = 1.0
                d = 0
                for i in range(n_instr):
                    op = opcode[i]
                    if op == OP_U1:
                        _apply_u1(re, im, dim, 1 << (nq - 1 - qa[i]), mre, mim, midx[i])
                    elif op == OP_CZ:
                        ma = 1 << (nq - 1 - qa[i])
                        mb = 1 << (nq - 1 - qb[i])
                        for s in range(dim):
                            if (s & ma) and (s & mb):
                                re[s] = -re[s]
                                im[s] = -im[s]
                    elif op == OP_DEP1:
                        u = uni[t, d]
                        d += 1
                        p = param[i]
                        if u < p:
                            k = <int> ((u / p) * 4.0)
                            if k > 3:
                                k = 3
                            if k != 0:
                                _apply_u1(re, im, dim, 1 << (nq - 1 - qa[i]), mre, mim, k)
                    elif op == OP_DEP2:
                        u = uni[t, d]
                        d += 1
                        p = param[i]
                        if u < p:
                            k = <int> ((u / p) * 16.0)
                            if k > 15:
                                k = 15
                            ka = k >> 2
                            kb = k & 3
                            if ka != 0:
                                _apply_u1(re, im, dim, 1 << (nq - 1 - qa[i]), mre, mim, ka)
                            if kb != 0:
                                _apply_u1(re, im, dim, 1 << (nq - 1 - qb[i]), mre, mim, kb)
                    elif op == OP_AMPD:
                        u = uni[t, d]
                        d += 1
                        g = param[i]
                        m = 1 << (nq - 1 - qa[i])
                        p1 = 0.0
                        for s in range(dim):
                            if s & m:
                                p1 = p1 + (re[s] * re[s] + im[s] * im[s])
                        if u < g * p1:
                            scale = 1.0 / sqrt(p1)
                            for s in range(dim):
                                if s & m:
                                    re[s ^ m] = re[s] * scale
                                    im[s ^ m] = im[s] * scale
                                    re[s] = 0.0
                                    im[s] = 0.0
                        else:
                            f0 = 1.0 / sqrt(1.0 - g * p1)
                            f1 = sqrt(1.0 - g) * f0
                            for s in range(dim):
                                if s & m:
                                    re[s] = re[s] * f1
                                    im[s] = im[s] * f1
                                else:
                                    re[s] = re[s] * f0
                                    im[s] = im[s] * f0
                    elif op == OP_DEPH:
                        u = uni[t, d]
                        d += 1
                        if u < param[i]:
                            _apply_u1(re, im, dim, 1 << (nq - 1 - qa[i]), mre, mim, 3)
                # sample a basis state
                u = uni[t, d]
                d += 1
                c = 0.0
                chosen = -1
                last = 0
                for s in range(dim):
                    w = re[s] * re[s] + im[s] * im[s]
                    if w > 0.0:
                        last = s
                    c = c + w
                    if u < c:
                        chosen = s
                        break
                if chosen < 0:
                    chosen = last
                outcome = 0
                for j in range(n_meas):
                    bit = (chosen >> (nq - 1 - meas[j])) & 1
                    u = uni[t, d + j]
                    if bit == 0:
                        if u < ro01[j]:
                            bit = 1
                    else:
                        if u < ro10[j]:
                            bit = 0
                    outcome = (outcome << 1) | bit
                out[t] = outcome
    finally:
        free(re)
        free(im)
    return out_arr
