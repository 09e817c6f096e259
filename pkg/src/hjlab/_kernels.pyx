# Compiled stencil kernels for H(x, p) = c(x) K(p) - V(x) on periodic grids.
#
# Arrays are C-contiguous float64, 1-D (N,) or 2-D (N, N) with axis i <-> x_i.
# params = [s, m, beta, q, shift]; kind 0 = power family, 1 = shifted abs.

from libc.math cimport fabs
import numpy as np


cdef inline double _ipow(double x, int n) nogil:
    cdef double r = 1.0
    while n > 0:
        r *= x
        n -= 1
    return r


cdef inline double _K(int kind, double s, int mh, double beta, double q, double shift,
                      double p0, double p1) nogil:
    cdef double r2, q2
    if kind == 1:
        return fabs(p0 + shift) - shift
    r2 = p0 * p0 + p1 * p1
    q2 = r2 + beta * p0 * p0
    return s * _ipow(r2, mh) * q2 - q * r2


cdef inline void _DK(int kind, double s, int mh, double beta, double q, double shift,
                     double p0, double p1, double* g0, double* g1) nogil:
    cdef double r2, q2, base, extra
    if kind == 1:
        g0[0] = 1.0 if p0 + shift >= 0.0 else -1.0
        g1[0] = 0.0
        return
    r2 = p0 * p0 + p1 * p1
    q2 = r2 + beta * p0 * p0
    base = _ipow(r2, mh)
    extra = 0.0
    if mh > 0:
        extra = 2.0 * mh * _ipow(r2, mh - 1) * q2
    g0[0] = s * (2.0 * p0 * base * (1.0 + beta) + extra * p0) - 2.0 * q * p0
    g1[0] = s * (2.0 * p1 * base + extra * p1) - 2.0 * q * p1


cdef inline int _mh(double m):
    return (<int> m - 2) // 2


# 4-point Gauss-Legendre on [0, 1]: exact for D_pK of degree <= 7
cdef double[4] GL_S = [0.06943184420297371, 0.33000947820757187, 0.6699905217924281, 0.9305681557970262]
cdef double[4] GL_W = [0.17392742256872684, 0.3260725774312731, 0.3260725774312731, 0.17392742256872684]


# ---------------------------------------------------------------- 1-D

def speeds_1d(double[::1] u, double dx, int kind, double[::1] prm, double[::1] c):
    cdef Py_ssize_t N = u.shape[0], j
    cdef int mh = _mh(prm[1])
    cdef double p, g0, g1, b, pmax = 0.0
    for j in range(N):
        p = (u[(j + 1) % N] - u[(j + N - 1) % N]) / (2.0 * dx)
        _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p, 0.0, &g0, &g1)
        b = fabs(c[j] * g0)
        if b > pmax:
            pmax = b
    return pmax, pmax


def viscous_step_1d(double[::1] u, double[::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[::1] c, double[::1] V):
    cdef Py_ssize_t N = u.shape[0], j, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p, lap, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        p = (u[jp] - u[jm]) * inv2dx
        lap = (u[jp] - 2.0 * u[j] + u[jm]) * invdx2
        out[j] = u[j] - dt * (c[j] * _K(kind, prm[0], mh, prm[2], prm[3], prm[4], p, 0.0) - V[j] - eps * lap)


def adjoint_step_1d(double[::1] u, double[::1] s, double[::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[::1] c):
    cdef Py_ssize_t N = u.shape[0], j, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p, g0, g1, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    cdef double[::1] bs = np.empty(N)
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        p = (u[jp] - u[jm]) * inv2dx
        _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p, 0.0, &g0, &g1)
        bs[j] = c[j] * g0 * s[j]
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        out[j] = s[j] + dt * ((bs[jp] - bs[jm]) * inv2dx + eps * (s[jp] - 2.0 * s[j] + s[jm]) * invdx2)


def tangent_step_1d(double[::1] u, double[::1] w, double[::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[::1] c):
    cdef Py_ssize_t N = u.shape[0], j, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p, g0, g1, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        p = (u[jp] - u[jm]) * inv2dx
        _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p, 0.0, &g0, &g1)
        out[j] = w[j] - dt * (c[j] * g0 * (w[jp] - w[jm]) * inv2dx
                              - eps * (w[jp] - 2.0 * w[j] + w[jm]) * invdx2)


def lf_step_1d(double[::1] u, double[::1] out, double dt, double alpha, double dx,
               int kind, double[::1] prm, double[::1] c, double[::1] V):
    cdef Py_ssize_t N = u.shape[0], j, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double dp, dm
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        dp = (u[jp] - u[j]) / dx
        dm = (u[j] - u[jm]) / dx
        out[j] = u[j] - dt * (c[j] * _K(kind, prm[0], mh, prm[2], prm[3], prm[4], 0.5 * (dp + dm), 0.0)
                              - V[j] - 0.5 * alpha * (dp - dm))


# ---------------------------------------------------------------- 2-D

def speeds_2d(double[:, ::1] u, double dx, int kind, double[::1] prm, double[:, ::1] c):
    cdef Py_ssize_t N = u.shape[0], i, j
    cdef int mh = _mh(prm[1])
    cdef double p0, p1, g0, g1, l1, li, P1 = 0.0, Pi = 0.0
    for i in range(N):
        for j in range(N):
            p0 = (u[(i + 1) % N, j] - u[(i + N - 1) % N, j]) / (2.0 * dx)
            p1 = (u[i, (j + 1) % N] - u[i, (j + N - 1) % N]) / (2.0 * dx)
            _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p0, p1, &g0, &g1)
            g0 = fabs(c[i, j] * g0)
            g1 = fabs(c[i, j] * g1)
            l1 = g0 + g1
            li = g0 if g0 > g1 else g1
            if l1 > P1:
                P1 = l1
            if li > Pi:
                Pi = li
    return P1, Pi


def viscous_step_2d(double[:, ::1] u, double[:, ::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[:, ::1] c, double[:, ::1] V):
    cdef Py_ssize_t N = u.shape[0], i, j, ip, im, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p0, p1, lap, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            p0 = (u[ip, j] - u[im, j]) * inv2dx
            p1 = (u[i, jp] - u[i, jm]) * inv2dx
            lap = (u[ip, j] + u[im, j] + u[i, jp] + u[i, jm] - 4.0 * u[i, j]) * invdx2
            out[i, j] = u[i, j] - dt * (c[i, j] * _K(kind, prm[0], mh, prm[2], prm[3], prm[4], p0, p1)
                                        - V[i, j] - eps * lap)


def adjoint_step_2d(double[:, ::1] u, double[:, ::1] s, double[:, ::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[:, ::1] c):
    cdef Py_ssize_t N = u.shape[0], i, j, ip, im, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p0, p1, g0, g1, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    cdef double[:, ::1] b0s = np.empty((N, N))
    cdef double[:, ::1] b1s = np.empty((N, N))
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            p0 = (u[ip, j] - u[im, j]) * inv2dx
            p1 = (u[i, jp] - u[i, jm]) * inv2dx
            _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p0, p1, &g0, &g1)
            b0s[i, j] = c[i, j] * g0 * s[i, j]
            b1s[i, j] = c[i, j] * g1 * s[i, j]
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            out[i, j] = s[i, j] + dt * ((b0s[ip, j] - b0s[im, j] + b1s[i, jp] - b1s[i, jm]) * inv2dx
                                        + eps * (s[ip, j] + s[im, j] + s[i, jp] + s[i, jm] - 4.0 * s[i, j]) * invdx2)


def tangent_step_2d(double[:, ::1] u, double[:, ::1] w, double[:, ::1] out, double dt, double eps, double dx,
                    int kind, double[::1] prm, double[:, ::1] c):
    cdef Py_ssize_t N = u.shape[0], i, j, ip, im, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double p0, p1, g0, g1, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            p0 = (u[ip, j] - u[im, j]) * inv2dx
            p1 = (u[i, jp] - u[i, jm]) * inv2dx
            _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p0, p1, &g0, &g1)
            out[i, j] = w[i, j] - dt * (c[i, j] * (g0 * (w[ip, j] - w[im, j]) + g1 * (w[i, jp] - w[i, jm])) * inv2dx
                                        - eps * (w[ip, j] + w[im, j] + w[i, jp] + w[i, jm] - 4.0 * w[i, j]) * invdx2)


def lf_step_2d(double[:, ::1] u, double[:, ::1] out, double dt, double alpha, double dx,
               int kind, double[::1] prm, double[:, ::1] c, double[:, ::1] V):
    cdef Py_ssize_t N = u.shape[0], i, j, ip, im, jp, jm
    cdef int mh = _mh(prm[1])
    cdef double dp0, dm0, dp1, dm1
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            dp0 = (u[ip, j] - u[i, j]) / dx
            dm0 = (u[i, j] - u[im, j]) / dx
            dp1 = (u[i, jp] - u[i, j]) / dx
            dm1 = (u[i, j] - u[i, jm]) / dx
            out[i, j] = u[i, j] - dt * (c[i, j] * _K(kind, prm[0], mh, prm[2], prm[3], prm[4],
                                                     0.5 * (dp0 + dm0), 0.5 * (dp1 + dm1))
                                        - V[i, j] - 0.5 * alpha * (dp0 - dm0 + dp1 - dm1))


# ---------------------------------------------------------------- secant adjoint

def secant_adjoint_1d(double[::1] u0, double[::1] u1, double[:, ::1] S, double[:, ::1] out, double dt,
                      double eps, double dx, int kind, double[::1] prm, double[::1] c):
    cdef Py_ssize_t N = u0.shape[0], B = S.shape[0], j, jp, jm, r
    cdef int mh = _mh(prm[1]), q
    cdef double p, d, g0, g1, acc, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    cdef double[::1] b = np.empty(N)
    for j in range(N):
        jp = j + 1 if j + 1 < N else 0
        jm = j - 1 if j > 0 else N - 1
        p = (u0[jp] - u0[jm]) * inv2dx
        d = (u1[jp] - u1[jm]) * inv2dx - p
        acc = 0.0
        for q in range(4):
            _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p + GL_S[q] * d, 0.0, &g0, &g1)
            acc += GL_W[q] * g0
        b[j] = c[j] * acc
    for r in range(B):
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            out[r, j] = S[r, j] + dt * ((b[jp] * S[r, jp] - b[jm] * S[r, jm]) * inv2dx
                                        + eps * (S[r, jp] - 2.0 * S[r, j] + S[r, jm]) * invdx2)


def secant_adjoint_2d(double[:, ::1] u0, double[:, ::1] u1, double[:, :, ::1] S, double[:, :, ::1] out,
                      double dt, double eps, double dx, int kind, double[::1] prm, double[:, ::1] c):
    cdef Py_ssize_t N = u0.shape[0], B = S.shape[0], i, j, ip, im, jp, jm, r
    cdef int mh = _mh(prm[1]), q
    cdef double p0, p1, d0, d1, g0, g1, a0, a1, inv2dx = 1.0 / (2.0 * dx), invdx2 = 1.0 / (dx * dx)
    cdef double[:, ::1] b0 = np.empty((N, N))
    cdef double[:, ::1] b1 = np.empty((N, N))
    for i in range(N):
        ip = i + 1 if i + 1 < N else 0
        im = i - 1 if i > 0 else N - 1
        for j in range(N):
            jp = j + 1 if j + 1 < N else 0
            jm = j - 1 if j > 0 else N - 1
            p0 = (u0[ip, j] - u0[im, j]) * inv2dx
            p1 = (u0[i, jp] - u0[i, jm]) * inv2dx
            d0 = (u1[ip, j] - u1[im, j]) * inv2dx - p0
            d1 = (u1[i, jp] - u1[i, jm]) * inv2dx - p1
            a0 = 0.0
            a1 = 0.0
            for q in range(4):
                _DK(kind, prm[0], mh, prm[2], prm[3], prm[4], p0 + GL_S[q] * d0, p1 + GL_S[q] * d1, &g0, &g1)
                a0 += GL_W[q] * g0
                a1 += GL_W[q] * g1
            b0[i, j] = c[i, j] * a0
            b1[i, j] = c[i, j] * a1
    for r in range(B):
        for i in range(N):
            ip = i + 1 if i + 1 < N else 0
            im = i - 1 if i > 0 else N - 1
            for j in range(N):
                jp = j + 1 if j + 1 < N else 0
                jm = j - 1 if j > 0 else N - 1
                out[r, i, j] = S[r, i, j] + dt * (
                    (b0[ip, j] * S[r, ip, j] - b0[im, j] * S[r, im, j]
                     + b1[i, jp] * S[r, i, jp] - b1[i, jm] * S[r, i, jm]) * inv2dx
                    + eps * (S[r, ip, j] + S[r, im, j] + S[r, i, jp] + S[r, i, jm] - 4.0 * S[r, i, j]) * invdx2)
