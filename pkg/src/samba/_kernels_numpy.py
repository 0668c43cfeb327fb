"""Pure-numpy reference kernels for the sequential hot loops.

These are the fallback implementations behind :mod:`samba.backend`; the numba
versions in ``_kernels_numba`` compute the same quantities with explicit
loops.  Shapes follow the selective-scan convention: a sequence of length L,
E independent channels, H hidden states per channel.
"""

from __future__ import annotations

import numpy as np


def scan_forward(a_hat, b_hat, c, x):
    """Run the selective-scan recurrence h_l = a_l * h_{l-1} + b_l * x_l.

    Args:
        a_hat: (L, E, H) per-step state decay.
        b_hat: (L, E, H) per-step input injection.
        c:     (L, H) per-step output weights, shared across channels.
        x:     (L, E) input sequence.

    Returns:
        y: (L, E) outputs y[l, e] = <c[l], h[l, e]>.
        h: (L, E, H) every hidden state, kept for the backward pass.
    """
    L, E, H = a_hat.shape
    h = np.zeros((E, H))
    h_all = np.empty((L, E, H))
    y = np.empty((L, E))
    for l in range(L):
        h = a_hat[l] * h + b_hat[l] * x[l][:, None]
        h_all[l] = h
        y[l] = h @ c[l]
    return y, h_all


def scan_backward(a_hat, b_hat, c, x, h_all, gy):
    """Adjoint of :func:`scan_forward`.

    The hidden-state adjoint g_l = c_l * gy_l + a_{l+1} * g_{l+1} is carried
    backward through the sequence; parameter gradients fall out elementwise.
    """
    L, E, H = a_hat.shape
    ga = np.empty((L, E, H))
    gb = np.empty((L, E, H))
    gc = np.empty((L, H))
    gx = np.empty((L, E))
    g = np.zeros((E, H))
    for l in range(L - 1, -1, -1):
        g = g + c[l][None, :] * gy[l][:, None]
        h_prev = h_all[l - 1] if l > 0 else np.zeros((E, H))
        ga[l] = g * h_prev
        gb[l] = g * x[l][:, None]
        gx[l] = (g * b_hat[l]).sum(axis=1)
        gc[l] = gy[l] @ h_all[l]
        g = g * a_hat[l]
    return ga, gb, gc, gx


def chunked_scan_forward(a_hat, b_hat, c, x, chunk):
    """Blocked evaluation of the scan: y only, no saved states.

    Within a block the recurrence is carried as the composition of affine
    maps h -> A*h + B (an associative combine, so a block admits log-depth
    parallel-prefix evaluation); the hidden state is carried across block
    boundaries.  Degenerate blockings (chunk of 1, chunk of L) reproduce the
    sequential recurrence arithmetic exactly.
    """
    L, E, H = a_hat.shape
    y = np.empty((L, E))
    h_carry = np.zeros((E, H))
    for start in range(0, L, chunk):
        stop = min(start + chunk, L)
        a_pref = None
        b_pref = None
        for l in range(start, stop):
            step_b = b_hat[l] * x[l][:, None]
            if a_pref is None:
                a_pref = a_hat[l].copy()
                b_pref = step_b
            else:
                a_pref = a_hat[l] * a_pref
                b_pref = a_hat[l] * b_pref + step_b
            h_l = a_pref * h_carry + b_pref
            y[l] = h_l @ c[l]
        h_carry = a_pref * h_carry + b_pref
    return y


def discretize_forward(a, b, delta, series_threshold):
    """Zero-order-hold grids A_hat = e^z, B_hat = f(z)*delta*B over (L, E, H).

    z = delta*A elementwise; f(z) = (e^z - 1)/z switches to its series
    1 + z/2 below the threshold.  Returns (A_hat, B_hat, f, z); the last two
    are kept for the backward pass.
    """
    d3 = delta[:, :, None]
    z = d3 * a[None, :, :]
    a_hat = np.exp(z)
    small = np.abs(z) < series_threshold
    patch = bool(small.any())
    f = np.expm1(z)
    f /= np.where(small, 1.0, z) if patch else z
    if patch:
        f[small] = 1.0 + 0.5 * z[small]
    b_hat = f * d3 * b[:, None, :]
    return a_hat, b_hat, f, z


def discretize_backward(a, b, delta, a_hat, f, z, g_a, g_b, deriv_threshold):
    """Adjoint of :func:`discretize_forward` for (A, B, delta).

    The closed form of df/dz loses precision to cancellation near zero, so
    its series branch is wider than the forward one.
    """
    d3 = delta[:, :, None]
    b3 = b[:, None, :]
    small = np.abs(z) < deriv_threshold
    zsafe = np.where(small, 1.0, z) if small.any() else z
    fprime = (a_hat * (z - 1.0) + 1.0) / (zsafe * zsafe)
    if small.any():
        zs = z[small]
        fprime[small] = 0.5 + zs / 3.0 + zs * zs / 8.0
    gz = g_a * a_hat + g_b * fprime * d3 * b3
    g_delta = (gz * a[None, :, :] + g_b * f * b3).sum(axis=2)
    g_a_mat = (gz * d3).sum(axis=0)
    g_b_mat = (g_b * f * d3).sum(axis=1)
    return g_a_mat, g_b_mat, g_delta


def conv1d_forward(x, kernel, bias):
    """Causal depthwise convolution with left zero padding.

    out[l, e] = bias[e] + sum_w kernel[e, w] * x[l - W + 1 + w, e],
    out-of-range rows of x treated as zero, so output length equals L.
    """
    L, E = x.shape
    W = kernel.shape[1]
    out = np.tile(bias, (L, 1))
    for w in range(W):
        shift = W - 1 - w
        if shift == 0:
            out += kernel[None, :, w] * x
        elif shift < L:
            out[shift:] += kernel[None, :, w] * x[:-shift]
    return out


def conv1d_backward(x, kernel, gout):
    """Adjoint of :func:`conv1d_forward`: gradients for x, kernel, bias."""
    L, E = x.shape
    W = kernel.shape[1]
    gx = np.zeros_like(x)
    gk = np.zeros_like(kernel)
    for w in range(W):
        shift = W - 1 - w
        if shift == 0:
            gx += kernel[None, :, w] * gout
            gk[:, w] = (gout * x).sum(axis=0)
        elif shift < L:
            gx[:-shift] += kernel[None, :, w] * gout[shift:]
            gk[:, w] = (gout[shift:] * x[:-shift]).sum(axis=0)
    gb = gout.sum(axis=0)
    return gx, gk, gb
