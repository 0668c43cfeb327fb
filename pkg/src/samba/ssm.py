"""State-space core: zero-order-hold discretization and the selective scan.

The continuous dynamics are diagonal per channel: channel e carries H
independent scalar states, so discretization is elementwise over a
(L, E, H) grid built from per-step sizes delta (L, E), the state matrix
A (E, H), and per-step input weights B (L, H).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend
from .tensor import Tensor, ShapeError, record_op

# below this |delta*A| the exact ZOH input factor (e^z - 1)/z switches to its
# series 1 + z/2; the derivative branch is wider because the closed form
# (e^z (z-1) + 1)/z^2 loses precision to cancellation much earlier
SERIES_THRESHOLD = 1e-6
_DERIV_THRESHOLD = 1e-3


@dataclass
class SsmInputs:
    """Per-sequence inputs of the discretization step.

    A:     (E, H) state dynamics, one scalar mode per (channel, state).
    B:     (L, H) input weights for each time step.
    C:     (L, H) output weights for each time step.
    delta: (L, E) strictly positive step sizes.
    """

    A: Tensor
    B: Tensor
    C: Tensor
    delta: Tensor

    def dims(self) -> tuple[int, int, int]:
        L, E = self.delta.shape
        H = self.A.shape[1]
        if self.A.shape != (E, H) or self.B.shape != (L, H) or self.C.shape != (L, H):
            raise ShapeError(
                f"inconsistent SSM shapes: A {self.A.shape}, B {self.B.shape}, "
                f"C {self.C.shape}, delta {self.delta.shape}"
            )
        return L, E, H


@dataclass
class DiscretizedSsm:
    """Discrete per-step dynamics; both tensors are (L, E, H)."""

    A_hat: Tensor
    B_hat: Tensor


def discretize(inputs: SsmInputs) -> DiscretizedSsm:
    """Zero-order-hold discretization, elementwise over (L, E, H).

    A_hat = exp(delta*A) and B_hat = (delta*A)^-1 (exp(delta*A) - 1) delta*B;
    for |delta*A| below SERIES_THRESHOLD the input factor (e^z - 1)/z uses
    its series limit 1 + z/2, so A = 0 is well defined and B_hat -> delta*B.
    """
    inputs.dims()
    a, b, delta = inputs.A.data, inputs.B.data, inputs.delta.data
    a_hat, b_hat, f, z = backend.discretize_forward(a, b, delta, SERIES_THRESHOLD)
    out_a = Tensor(a_hat)
    out_b = Tensor(b_hat)

    def vjp(g_a, g_b):
        return backend.discretize_backward(
            a, b, delta, a_hat, f, z, g_a, g_b, _DERIV_THRESHOLD
        )

    record_op(
        "discretize",
        (inputs.A, inputs.B, inputs.delta),
        (out_a, out_b),
        vjp,
    )
    return DiscretizedSsm(A_hat=out_a, B_hat=out_b)


def selective_scan(d: DiscretizedSsm, C: Tensor, x: Tensor) -> Tensor:
    """Run the per-channel linear recurrence and project with C.

    h_l = A_hat[l] * h_{l-1} + B_hat[l] * x_l with h_0 = 0, and
    y[l, e] = <C[l], h_l[e]>.  Returns (L, E).
    """
    L, E, H = d.A_hat.shape
    if d.B_hat.shape != (L, E, H) or C.shape != (L, H) or x.shape != (L, E):
        raise ShapeError(
            f"scan shapes: A_hat {d.A_hat.shape}, B_hat {d.B_hat.shape}, "
            f"C {C.shape}, x {x.shape}"
        )
    y, h_all = backend.scan_forward(d.A_hat.data, d.B_hat.data, C.data, x.data)
    out = Tensor(y)

    def vjp(g):
        return backend.scan_backward(
            d.A_hat.data, d.B_hat.data, C.data, x.data, h_all, g
        )

    record_op("selective_scan", (d.A_hat, d.B_hat, C, x), (out,), vjp)
    return out


def scan_oracle(d: DiscretizedSsm, C: Tensor, x: Tensor) -> Tensor:
    """Closed-form scan for small instances, used to cross-check the kernels.

    Expands the recurrence into its explicit sum
    y[l, e] = sum_{j<=l} <C[l], (prod_{k=j+1..l} A_hat[k, e]) * B_hat[j, e]> x[j, e]
    by double loop; no gradients.
    """
    L, E, H = d.A_hat.shape
    if L * E * H > 4096:
        raise ValueError(f"oracle limited to small instances, got {L}x{E}x{H}")
    a, b = d.A_hat.data, d.B_hat.data
    c, xv = C.data, x.data
    y = np.zeros((L, E))
    for l in range(L):
        for e in range(E):
            acc = 0.0
            for j in range(l + 1):
                decay = np.ones(H)
                for k in range(j + 1, l + 1):
                    decay = decay * a[k, e]
                acc += float(np.dot(c[l], decay * b[j, e]) * xv[j, e])
            y[l, e] = acc
    return Tensor(y)


def chunked_scan(d: DiscretizedSsm, C: Tensor, x: Tensor, chunk: int) -> Tensor:
    """Blocked scan evaluation; result matches :func:`selective_scan`.

    Blocks are combined through the associative composition of affine state
    maps, carrying the hidden state across block boundaries.  Forward only.
    """
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    y = backend.chunked_scan_forward(
        d.A_hat.data, d.B_hat.data, C.data, x.data, chunk
    )
    return Tensor(y)
