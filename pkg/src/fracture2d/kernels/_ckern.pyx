# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of py_backend: batched element integration loops."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def u_internal_force(double[:, :, :, ::1] B, double[:, ::1] detJw, double[:, :, ::1] sigma):
    cdef Py_ssize_t n = B.shape[0], q = B.shape[1], d = B.shape[3]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, d))
    cdef double[:, ::1] f = out
    cdef Py_ssize_t e, p, i, a
    cdef double w
    with nogil:
        for e in range(n):
            for p in range(q):
                w = detJw[e, p]
                for a in range(d):
                    for i in range(3):
                        f[e, a] += w * B[e, p, i, a] * sigma[e, p, i]
    return out


def u_stiffness(double[:, :, :, ::1] B, double[:, ::1] detJw, double[:, :, :, ::1] dmat):
    cdef Py_ssize_t n = B.shape[0], q = B.shape[1], d = B.shape[3]
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((n, d, d))
    cdef double[:, :, ::1] K = out
    cdef Py_ssize_t e, p, i, j, a, b
    cdef double w, db[3]
    with nogil:
        for e in range(n):
            for p in range(q):
                w = detJw[e, p]
                for b in range(d):
                    for i in range(3):
                        db[i] = 0.0
                        for j in range(3):
                            db[i] += dmat[e, p, i, j] * B[e, p, j, b]
                    for a in range(d):
                        K[e, a, b] += w * (
                            B[e, p, 0, a] * db[0] + B[e, p, 1, a] * db[1] + B[e, p, 2, a] * db[2]
                        )
    return out


def scalar_residual(double[:, ::1] N, double[:, :, :, ::1] Bs, double[:, ::1] detJw,
                    double[:, ::1] c1, double[::1] gcoef, double[:, ::1] phi):
    cdef Py_ssize_t n = Bs.shape[0], q = Bs.shape[1], k = Bs.shape[3]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, k))
    cdef double[:, ::1] r = out
    cdef Py_ssize_t e, p, a, b
    cdef double w, gx, gy, g
    with nogil:
        for e in range(n):
            g = gcoef[e]
            for p in range(q):
                w = detJw[e, p]
                gx = 0.0
                gy = 0.0
                for b in range(k):
                    gx += Bs[e, p, 0, b] * phi[e, b]
                    gy += Bs[e, p, 1, b] * phi[e, b]
                for a in range(k):
                    r[e, a] += w * (
                        N[p, a] * c1[e, p] + g * (Bs[e, p, 0, a] * gx + Bs[e, p, 1, a] * gy)
                    )
    return out


def scalar_stiffness(double[:, ::1] N, double[:, :, :, ::1] Bs, double[:, ::1] detJw,
                     double[:, ::1] c2, double[::1] gcoef):
    cdef Py_ssize_t n = Bs.shape[0], q = Bs.shape[1], k = Bs.shape[3]
    cdef cnp.ndarray[double, ndim=3] out = np.zeros((n, k, k))
    cdef double[:, :, ::1] K = out
    cdef Py_ssize_t e, p, a, b
    cdef double w, g, cc
    with nogil:
        for e in range(n):
            g = gcoef[e]
            for p in range(q):
                w = detJw[e, p]
                cc = c2[e, p]
                for a in range(k):
                    for b in range(k):
                        K[e, a, b] += w * (
                            cc * N[p, a] * N[p, b]
                            + g * (Bs[e, p, 0, a] * Bs[e, p, 0, b] + Bs[e, p, 1, a] * Bs[e, p, 1, b])
                        )
    return out
