"""Numba-jitted kernels for the hot inner loops.

Same contracts as ``_kernels_numpy``; see that module for shape conventions.
The scan/conv recurrences cannot be vectorized across time steps, and the
elementwise discretization grid is large enough that fusing its ~20 array
passes into one loop pays off; these carry the @njit treatment.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def scan_forward(a_hat, b_hat, c, x):
    L, E, H = a_hat.shape
    h_all = np.empty((L, E, H))
    y = np.empty((L, E))
    for l in range(L):
        for e in range(E):
            acc = 0.0
            for k in range(H):
                h_prev = h_all[l - 1, e, k] if l > 0 else 0.0
                h = a_hat[l, e, k] * h_prev + b_hat[l, e, k] * x[l, e]
                h_all[l, e, k] = h
                acc += c[l, k] * h
            y[l, e] = acc
    return y, h_all


@njit(cache=True)
def scan_backward(a_hat, b_hat, c, x, h_all, gy):
    L, E, H = a_hat.shape
    ga = np.empty((L, E, H))
    gb = np.empty((L, E, H))
    gc = np.zeros((L, H))
    gx = np.empty((L, E))
    g = np.zeros((E, H))
    for l in range(L - 1, -1, -1):
        for e in range(E):
            acc_x = 0.0
            for k in range(H):
                gk = g[e, k] + c[l, k] * gy[l, e]
                h_prev = h_all[l - 1, e, k] if l > 0 else 0.0
                ga[l, e, k] = gk * h_prev
                gb[l, e, k] = gk * x[l, e]
                acc_x += gk * b_hat[l, e, k]
                gc[l, k] += gy[l, e] * h_all[l, e, k]
                g[e, k] = gk * a_hat[l, e, k]
            gx[l, e] = acc_x
    return ga, gb, gc, gx


@njit(cache=True)
def chunked_scan_forward(a_hat, b_hat, c, x, chunk):
    L, E, H = a_hat.shape
    y = np.empty((L, E))
    h_carry = np.zeros((E, H))
    a_pref = np.empty((E, H))
    b_pref = np.empty((E, H))
    for start in range(0, L, chunk):
        stop = min(start + chunk, L)
        for l in range(start, stop):
            first = l == start
            for e in range(E):
                acc = 0.0
                for k in range(H):
                    step_b = b_hat[l, e, k] * x[l, e]
                    if first:
                        a_pref[e, k] = a_hat[l, e, k]
                        b_pref[e, k] = step_b
                    else:
                        a_pref[e, k] = a_hat[l, e, k] * a_pref[e, k]
                        b_pref[e, k] = a_hat[l, e, k] * b_pref[e, k] + step_b
                    h_lk = a_pref[e, k] * h_carry[e, k] + b_pref[e, k]
                    acc += c[l, k] * h_lk
                y[l, e] = acc
        for e in range(E):
            for k in range(H):
                h_carry[e, k] = a_pref[e, k] * h_carry[e, k] + b_pref[e, k]
    return y


@njit(cache=True)
def discretize_forward(a, b, delta, series_threshold):
    L, E = delta.shape
    H = a.shape[1]
    z = np.empty((L, E, H))
    f = np.empty((L, E, H))
    a_hat = np.empty((L, E, H))
    b_hat = np.empty((L, E, H))
    for l in range(L):
        for e in range(E):
            d = delta[l, e]
            for k in range(H):
                zz = d * a[e, k]
                ah = math.exp(zz)
                if abs(zz) < series_threshold:
                    ff = 1.0 + 0.5 * zz
                else:
                    ff = math.expm1(zz) / zz
                z[l, e, k] = zz
                f[l, e, k] = ff
                a_hat[l, e, k] = ah
                b_hat[l, e, k] = ff * d * b[l, k]
    return a_hat, b_hat, f, z


@njit(cache=True)
def discretize_backward(a, b, delta, a_hat, f, z, g_a, g_b, deriv_threshold):
    L, E = delta.shape
    H = a.shape[1]
    g_a_mat = np.zeros((E, H))
    g_b_mat = np.zeros((L, H))
    g_delta = np.zeros((L, E))
    for l in range(L):
        for e in range(E):
            d = delta[l, e]
            acc_d = 0.0
            for k in range(H):
                zz = z[l, e, k]
                if abs(zz) < deriv_threshold:
                    fp = 0.5 + zz / 3.0 + zz * zz / 8.0
                else:
                    fp = (a_hat[l, e, k] * (zz - 1.0) + 1.0) / (zz * zz)
                bb = b[l, k]
                gb_lek = g_b[l, e, k]
                gzz = g_a[l, e, k] * a_hat[l, e, k] + gb_lek * fp * d * bb
                acc_d += gzz * a[e, k] + gb_lek * f[l, e, k] * bb
                g_a_mat[e, k] += gzz * d
                g_b_mat[l, k] += gb_lek * f[l, e, k] * d
            g_delta[l, e] = acc_d
    return g_a_mat, g_b_mat, g_delta


@njit(cache=True)
def conv1d_forward(x, kernel, bias):
    L, E = x.shape
    W = kernel.shape[1]
    out = np.empty((L, E))
    for l in range(L):
        for e in range(E):
            acc = bias[e]
            for w in range(W):
                src = l - W + 1 + w
                if src >= 0:
                    acc += kernel[e, w] * x[src, e]
            out[l, e] = acc
    return out


@njit(cache=True)
def conv1d_backward(x, kernel, gout):
    L, E = x.shape
    W = kernel.shape[1]
    gx = np.zeros_like(x)
    gk = np.zeros_like(kernel)
    gb = np.zeros(E)
    for l in range(L):
        for e in range(E):
            g = gout[l, e]
            gb[e] += g
            for w in range(W):
                src = l - W + 1 + w
                if src >= 0:
                    gx[src, e] += kernel[e, w] * g
                    gk[e, w] += x[src, e] * g
    return gx, gk, gb
