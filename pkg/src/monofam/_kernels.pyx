# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled all-pairs kernels; see ``_kernels_py`` for the reference versions."""
import numpy as np

from libc.math cimport fabs, floor, pow, sqrt, INFINITY, isinf


cdef inline int _int_power(double q) noexcept nogil:
    # small integer exponents are multiplied out, pow is slow per element
    if q == floor(q) and 1.0 <= q <= 8.0:
        return <int>q
    return 0


cdef inline double _powq(double a, double q, int iq) noexcept nogil:
    cdef double r
    cdef int k
    if iq == 0:
        return pow(a, q)
    r = a
    for k in range(1, iq):
        r *= a
    return r


cdef inline double _root(double acc, double q) noexcept nogil:
    if q == 1.0:
        return acc
    if q == 2.0:
        return sqrt(acc)
    return pow(acc, 1.0 / q)


def weighted_lq_rows(U, W, double q):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0], d = u.shape[1], i, m
    out = np.zeros(n)
    cdef double[::1] o = out
    cdef double acc, a
    cdef bint sup = isinf(q)
    cdef int iq = 0 if sup else _int_power(q)
    with nogil:
        for i in range(n):
            acc = 0.0
            if sup:
                for m in range(d):
                    if w[i, m] > 0:
                        a = fabs(u[i, m])
                        if a > acc:
                            acc = a
                o[i] = acc
            elif iq == 2:
                for m in range(d):
                    acc += w[i, m] * u[i, m] * u[i, m]
                o[i] = sqrt(acc)
            else:
                for m in range(d):
                    acc += w[i, m] * _powq(fabs(u[i, m]), q, iq)
                o[i] = _root(acc, q)
    return out


def pair_gradient_violation(U, W, double q, G):
    cdef const double[:, ::1] u = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[:, ::1] w = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t n = u.shape[0], d = u.shape[1], s, t, m
    cdef double worst = -INFINITY, acc, a, lhs, rhs, r
    cdef Py_ssize_t ws = -1, wt = -1
    cdef bint sup = isinf(q)
    cdef int iq = 0 if sup else _int_power(q)
    with nogil:
        for t in range(n):
            for s in range(t + 1):
                acc = 0.0
                # zero weights contribute nothing to the sums, so only sup needs the mask
                if sup:
                    for m in range(d):
                        if w[t, m] > 0:
                            a = fabs(u[t, m] - u[s, m])
                            if a > acc:
                                acc = a
                    lhs = acc
                elif iq == 2:
                    for m in range(d):
                        a = u[t, m] - u[s, m]
                        acc += w[t, m] * a * a
                    lhs = sqrt(acc)
                elif iq == 1:
                    for m in range(d):
                        acc += w[t, m] * fabs(u[t, m] - u[s, m])
                    lhs = acc
                else:
                    for m in range(d):
                        acc += w[t, m] * _powq(fabs(u[t, m] - u[s, m]), q, iq)
                    lhs = _root(acc, q)
                rhs = g[t] - g[s]
                r = (lhs - rhs) / (rhs if rhs > 1.0 else 1.0)
                if r > worst:
                    worst = r
                    ws = s
                    wt = t
    return worst, ws, wt


def scalar_pair_violation(N, G):
    cdef const double[::1] nv = np.ascontiguousarray(N, dtype=np.float64)
    cdef const double[::1] g = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t n = nv.shape[0], s, t
    cdef double worst = -INFINITY, lhs, rhs, r
    cdef Py_ssize_t ws = -1, wt = -1
    with nogil:
        for t in range(n):
            for s in range(t + 1):
                lhs = fabs(nv[t] - nv[s])
                rhs = g[t] - g[s]
                r = (lhs - rhs) / (rhs if rhs > 1.0 else 1.0)
                if r > worst:
                    worst = r
                    ws = s
                    wt = t
    return worst, ws, wt
