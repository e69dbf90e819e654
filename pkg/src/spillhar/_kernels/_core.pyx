# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot recursions.

Mirrors :mod:`._pyref` function for function; the NumPy module is the
readable reference and both backends are tested for agreement.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()

BACKEND = "cython"

cdef double H_FLOOR = 1e-300
cdef double LOG_2PI = 1.8378770664093453


def garch_path(r, double omega, double alpha, double gamma, double beta,
               double h1):
    """Conditional variance recursion h_t = w + (a + g*1[r<0]) r^2 + b h."""
    r_arr = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] rv = r_arr
    cdef Py_ssize_t n = rv.shape[0], t
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] h = out
    cdef double arch, prev
    h[0] = h1 if h1 > H_FLOOR else H_FLOOR
    for t in range(1, n):
        prev = rv[t - 1]
        arch = (alpha + (gamma if prev < 0 else 0.0)) * prev * prev
        h[t] = omega + arch + beta * h[t - 1]
        if h[t] < H_FLOOR:
            h[t] = H_FLOOR
    return out


def garch_nll(r, double omega, double alpha, double gamma, double beta,
              double h1):
    """Gaussian negative log-likelihood under the variance recursion."""
    r_arr = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] rv = r_arr
    cdef Py_ssize_t n = rv.shape[0], t
    cdef double h = h1 if h1 > H_FLOOR else H_FLOOR
    cdef double nll = 0.5 * (LOG_2PI + log(h) + rv[0] * rv[0] / h)
    cdef double arch, prev
    for t in range(1, n):
        prev = rv[t - 1]
        arch = (alpha + (gamma if prev < 0 else 0.0)) * prev * prev
        h = omega + arch + beta * h
        if h < H_FLOOR:
            h = H_FLOOR
        nll += 0.5 * (LOG_2PI + log(h) + rv[t] * rv[t] / h)
    return nll


def qvar_filter(Y, Z, double tau, double kappa, B0, P0, Sigma0,
                double weight_eps, fixed_weights=None):
    """Forgetting-factor recursion with check-loss observation weights.

    See the reference implementation for the definitions; inputs and outputs
    match it exactly.
    """
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef double[:, ::1] Zv = np.ascontiguousarray(Z, dtype=np.float64)
    cdef bint has_fixed = fixed_weights is not None
    cdef double[:, ::1] Wv
    if has_fixed:
        Wv = np.ascontiguousarray(fixed_weights, dtype=np.float64)
    else:
        Wv = np.empty((1, 1), dtype=np.float64)
    cdef Py_ssize_t T = Yv.shape[0], N = Yv.shape[1], k = Zv.shape[1]
    B_arr = np.array(B0, dtype=np.float64, copy=True, order="C")
    P_arr = np.array(P0, dtype=np.float64, copy=True, order="C")
    S_arr = np.array(Sigma0, dtype=np.float64, copy=True, order="C")
    B_path = np.empty((T, N, k), dtype=np.float64)
    S_path = np.empty((T, N, N), dtype=np.float64)
    resid = np.empty((T, N), dtype=np.float64)
    cdef double[:, ::1] B = B_arr
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, ::1] S = S_arr
    cdef double[:, :, ::1] Bp = B_path
    cdef double[:, :, ::1] Sp = S_path
    cdef double[:, ::1] res = resid
    pz_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] Pz = pz_arr
    cdef Py_ssize_t t, i, j, a, b
    cdef double e, e_eff, w, s, acc, g, m

    for t in range(T):
        for i in range(N):
            for a in range(k):
                for b in range(k):
                    P[i, a, b] /= kappa
            acc = 0.0
            for a in range(k):
                acc += B[i, a] * Zv[t, a]
            e = Yv[t, i] - acc
            res[t, i] = e
            if has_fixed:
                w = Wv[t, i]
            else:
                w = 0.5 / ((e if e >= 0 else -e) + weight_eps)
            # check-loss majorizer: weighted quadratic plus a linear tilt,
            # absorbed as a response shift of (tau - 1/2) / w
            e_eff = e + (tau - 0.5) / w
            s = 1.0 / w
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += P[i, a, b] * Zv[t, b]
                Pz[a] = acc
                s += acc * Zv[t, a]
            for a in range(k):
                B[i, a] += Pz[a] / s * e_eff
            for a in range(k):
                g = Pz[a] / s
                for b in range(k):
                    P[i, a, b] -= g * Pz[b]
            for a in range(k):
                for b in range(a + 1, k):
                    m = 0.5 * (P[i, a, b] + P[i, b, a])
                    P[i, a, b] = m
                    P[i, b, a] = m
        for i in range(N):
            for j in range(N):
                S[i, j] = kappa * S[i, j] + (1.0 - kappa) * res[t, i] * res[t, j]
        for i in range(N):
            for a in range(k):
                Bp[t, i, a] = B[i, a]
            for j in range(N):
                Sp[t, i, j] = S[i, j]
    return B_path, S_path, P_arr, resid


cdef void _gfevd_into(double[:, :] A, double[:, :] Sigma, int horizon,
                      double[:, ::1] power, double[:, ::1] pnew,
                      double[:, ::1] AS, double[:, ::1] num,
                      double[::1] den, double[:, :] out) noexcept:
    cdef Py_ssize_t N = A.shape[0], m = A.shape[1]
    cdef Py_ssize_t h, i, j, l
    cdef double acc, rowsum
    for i in range(m):
        for j in range(m):
            power[i, j] = 1.0 if i == j else 0.0
    for i in range(N):
        den[i] = 0.0
        for j in range(N):
            num[i, j] = 0.0
    for h in range(horizon):
        for i in range(N):
            for j in range(N):
                acc = 0.0
                for l in range(N):
                    acc += power[i, l] * Sigma[l, j]
                AS[i, j] = acc
        for i in range(N):
            acc = 0.0
            for j in range(N):
                num[i, j] += AS[i, j] * AS[i, j]
                acc += AS[i, j] * power[i, j]
            den[i] += acc
        # next companion power: the companion holds A on top and the shifted
        # identity below, so the bottom rows of pnew copy power upward
        for i in range(N):
            for j in range(m):
                acc = 0.0
                for l in range(m):
                    acc += A[i, l] * power[l, j]
                pnew[i, j] = acc
        for i in range(N, m):
            for j in range(m):
                pnew[i, j] = power[i - N, j]
        for i in range(m):
            for j in range(m):
                power[i, j] = pnew[i, j]
    for i in range(N):
        rowsum = 0.0
        for j in range(N):
            out[i, j] = num[i, j] / Sigma[j, j] / den[i]
            rowsum += out[i, j]
        for j in range(N):
            out[i, j] /= rowsum


def gfevd_single(A, Sigma, int horizon):
    """Row-normalized generalized FEVD shares for one coefficient matrix."""
    A_arr = np.ascontiguousarray(A, dtype=np.float64)
    S_arr = np.ascontiguousarray(Sigma, dtype=np.float64)
    if np.any(np.diag(S_arr) <= 0):
        raise ValueError("innovation covariance needs a strictly positive diagonal")
    cdef Py_ssize_t N = A_arr.shape[0], m = A_arr.shape[1]
    out = np.empty((N, N), dtype=np.float64)
    power = np.empty((m, m), dtype=np.float64)
    pnew = np.empty((m, m), dtype=np.float64)
    AS = np.empty((N, N), dtype=np.float64)
    num = np.empty((N, N), dtype=np.float64)
    den = np.empty(N, dtype=np.float64)
    _gfevd_into(A_arr, S_arr, horizon, power, pnew, AS, num, den, out)
    return out


def gfevd_path(A_path, Sigma_path, int horizon):
    """GFEVD shares along a fitted (T, N, N*p) coefficient path."""
    A_arr = np.ascontiguousarray(A_path, dtype=np.float64)
    S_arr = np.ascontiguousarray(Sigma_path, dtype=np.float64)
    cdef Py_ssize_t T = A_arr.shape[0], N = A_arr.shape[1], m = A_arr.shape[2]
    if np.any(S_arr[:, np.arange(N), np.arange(N)] <= 0):
        raise ValueError("innovation covariance needs a strictly positive diagonal")
    out = np.empty((T, N, N), dtype=np.float64)
    power = np.empty((m, m), dtype=np.float64)
    pnew = np.empty((m, m), dtype=np.float64)
    AS = np.empty((N, N), dtype=np.float64)
    num = np.empty((N, N), dtype=np.float64)
    den = np.empty(N, dtype=np.float64)
    cdef double[:, :, ::1] Av = A_arr
    cdef double[:, :, ::1] Sv = S_arr
    cdef double[:, :, ::1] outv = out
    cdef Py_ssize_t t
    for t in range(T):
        _gfevd_into(Av[t], Sv[t], horizon, power, pnew, AS, num, den, outv[t])
    return out
