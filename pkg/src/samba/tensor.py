"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything is 64-bit and row-major.  Differentiable operations are free
functions that, when a :class:`Tape` is active on the current thread, append
an operation record carrying the adjoint rule.  ``Tape.backward`` replays the
records once, in reverse, accumulating gradients additively into each
tensor's ``grad`` buffer.

A tape and the tensors it references belong to one logical thread; separate
threads get separate tape stacks, so independent forward/backward executions
can run in parallel over shared read-only parameter tensors.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit

from . import backend


class ShapeError(ValueError):
    """An operand shape violates the operation's contract."""


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    Tensors are immutable after construction except for ``grad``, which
    ``Tape.backward`` fills in and training code clears between steps.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)  # would promote 0-d to 1-d
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def add_grad(self, g: np.ndarray) -> None:
        # taking ownership without a copy is safe because every vjp returns a
        # distinct array per input (views of a finished output's buffer are
        # fine: it never receives further contributions)
        if self.grad is None:
            self.grad = np.asarray(g)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def create(shape: Sequence[int], values, requires_grad: bool = False) -> Tensor:
    """Build a tensor from a flat value array; lengths must agree exactly."""
    shape = tuple(int(s) for s in shape)
    flat = np.asarray(values, dtype=np.float64).reshape(-1)
    expected = int(np.prod(shape)) if shape else 1
    if flat.size != expected:
        raise ShapeError(
            f"shape {shape} needs {expected} values, got {flat.size}"
        )
    return Tensor(flat.reshape(shape), requires_grad=requires_grad)


class OpRecord:
    """One applied operation: its tensors plus the adjoint rule.

    ``vjp`` maps the output cotangents (one ndarray per output, never None)
    to one cotangent per input (None for inputs that need no gradient).
    """

    __slots__ = ("name", "inputs", "outputs", "vjp")

    def __init__(self, name, inputs, outputs, vjp):
        self.name = name
        self.inputs = inputs
        self.outputs = outputs
        self.vjp = vjp


_LOCAL = threading.local()


def _tape_stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of the operations of one forward execution.

    Records are appended in execution order, so the inputs of every record
    precede it (topological order), and ``backward`` visits each record
    exactly once in reverse.
    """

    def __init__(self):
        self.ops: list[OpRecord] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _tape_stack().pop()
        assert popped is self, "tapes closed out of order"
        return False

    def first_nonfinite(self) -> str | None:
        """Name of the earliest op whose output holds a NaN/inf, if any."""
        for op in self.ops:
            for out in op.outputs:
                if not np.all(np.isfinite(out.data)):
                    return op.name
        return None

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor the loss depends on.

        Gradients accumulate additively, so a tensor used twice receives the
        sum of both contributions.
        """
        if loss.data.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.shape}")
        loss.add_grad(np.ones_like(loss.data))
        for op in reversed(self.ops):
            if all(out.grad is None for out in op.outputs):
                continue
            gouts = tuple(
                out.grad if out.grad is not None else np.zeros_like(out.data)
                for out in op.outputs
            )
            gins = op.vjp(*gouts)
            for tensor, g in zip(op.inputs, gins):
                if g is not None and tensor.requires_grad:
                    tensor.add_grad(g)


def record_op(
    name: str,
    inputs: tuple[Tensor, ...],
    outputs: tuple[Tensor, ...],
    vjp: Callable,
) -> None:
    """Attach an operation to the active tape, if recording is warranted."""
    tape = active_tape()
    if tape is None:
        return
    if not any(t.requires_grad for t in inputs):
        return
    for out in outputs:
        out.requires_grad = True
    tape.ops.append(OpRecord(name, inputs, outputs, vjp))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    record_op("add", (a, b), (out,), lambda g: (g, g.copy()))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)
    record_op("sub", (a, b), (out,), lambda g: (g, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    record_op("mul", (a, b), (out,), lambda g: (g * b.data, g * a.data))
    return out


def smul(a: Tensor, c: float) -> Tensor:
    """Multiply by a constant (non-learnable) scalar."""
    c = float(c)
    out = Tensor(a.data * c)
    record_op("smul", (a,), (out,), lambda g: (g * c,))
    return out


def scale(a: Tensor, s: Tensor) -> Tensor:
    """Multiply an array by a learnable scalar tensor."""
    if s.size != 1:
        raise ShapeError(f"scale factor must be scalar, got shape {s.shape}")
    sval = s.item()
    out = Tensor(a.data * sval)

    def vjp(g):
        return g * sval, np.array(np.sum(g * a.data)).reshape(s.shape)

    record_op("scale", (a, s), (out,), vjp)
    return out


def add_bias(mat: Tensor, vec: Tensor) -> Tensor:
    """Add a length-C vector to every row of an (R, C) matrix."""
    if mat.data.ndim != 2 or vec.data.ndim != 1 or mat.shape[1] != vec.shape[0]:
        raise ShapeError(f"add_bias shapes: {mat.shape} vs {vec.shape}")
    out = Tensor(mat.data + vec.data[None, :])
    record_op("add_bias", (mat, vec), (out,), lambda g: (g, g.sum(axis=0)))
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape}, {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data)
    need_a, need_b = a.requires_grad, b.requires_grad

    def vjp(g):
        return (
            g @ b.data.T if need_a else None,
            a.data.T @ g if need_b else None,
        )

    record_op("matmul", (a, b), (out,), vjp)
    return out


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs rank-2, got {a.shape}")
    out = Tensor(a.data.T)
    record_op("transpose", (a,), (out,), lambda g: (g.T,))
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    out = Tensor(a.data.reshape(shape))
    record_op("reshape", (a,), (out,), lambda g: (g.reshape(a.shape),))
    return out


def slice_axis(a: Tensor, axis: int, index: int) -> Tensor:
    """Pick one index along an axis, dropping that axis."""
    idx = [slice(None)] * a.data.ndim
    idx[axis] = index
    idx = tuple(idx)
    out = Tensor(a.data[idx])

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    record_op("slice_axis", (a,), (out,), vjp)
    return out


def reverse_rows(a: Tensor) -> Tensor:
    """Reverse the row order of a rank-2 tensor (anti-diagonal permutation)."""
    if a.data.ndim != 2:
        raise ShapeError(f"reverse_rows needs rank-2, got {a.shape}")
    out = Tensor(a.data[::-1])
    record_op("reverse_rows", (a,), (out,), lambda g: (g[::-1].copy(),))
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.sum(a.data))
    record_op("sum_all", (a,), (out,), lambda g: (np.broadcast_to(g, a.shape).copy(),))
    return out


def sum_axis(a: Tensor, axis: int) -> Tensor:
    out = Tensor(a.data.sum(axis=axis))

    def vjp(g):
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    record_op("sum_axis", (a,), (out,), vjp)
    return out


# ---------------------------------------------------------------------------
# activations


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(a.data))
    record_op("exp", (a,), (out,), lambda g: (g * out.data,))
    return out


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    record_op("relu", (a,), (out,), lambda g: (g * (a.data > 0.0),))
    return out


def silu(a: Tensor) -> Tensor:
    sig = expit(a.data)
    out = Tensor(a.data * sig)

    def vjp(g):
        return (g * (sig * (1.0 + a.data * (1.0 - sig))),)

    record_op("silu", (a,), (out,), vjp)
    return out


def softplus(a: Tensor) -> Tensor:
    # logaddexp saturates to z for large z, avoiding exp overflow
    out = Tensor(np.logaddexp(0.0, a.data))
    record_op("softplus", (a,), (out,), lambda g: (g * expit(a.data),))
    return out


_ACTIVATIONS = {"silu": silu, "relu": relu, "softplus": softplus, "exp": exp}


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None
    return fn(a)


# ---------------------------------------------------------------------------
# normalizations


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a rank-2 tensor, shifted by the row max."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows needs rank-2, got {a.shape}")
    z = a.data - a.data.max(axis=1, keepdims=True)
    ez = np.exp(z)
    p = ez / ez.sum(axis=1, keepdims=True)
    out = Tensor(p)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    record_op("softmax_rows", (a,), (out,), vjp)
    return out


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization with population (1/n) variance, then affine."""
    if a.data.ndim != 2:
        raise ShapeError(f"layer_norm needs rank-2, got {a.shape}")
    n = a.shape[1]
    if gamma.shape != (n,) or beta.shape != (n,):
        raise ShapeError(
            f"layer_norm affine shapes {gamma.shape}/{beta.shape} != ({n},)"
        )
    mu = a.data.mean(axis=1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data[None, :] + beta.data[None, :])

    def vjp(g):
        gh = g * gamma.data[None, :]
        m1 = gh.mean(axis=1, keepdims=True)
        m2 = (gh * xhat).mean(axis=1, keepdims=True)
        gx = inv * (gh - m1 - xhat * m2)
        return gx, (g * xhat).sum(axis=0), g.sum(axis=0)

    record_op("layer_norm", (a, gamma, beta), (out,), vjp)
    return out


# ---------------------------------------------------------------------------
# structured ops


def depthwise_conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Causal per-channel convolution; left zero padding keeps length L."""
    if x.data.ndim != 2 or kernel.data.ndim != 2:
        raise ShapeError(f"conv shapes: x {x.shape}, kernel {kernel.shape}")
    if kernel.shape[0] != x.shape[1] or bias.shape != (x.shape[1],):
        raise ShapeError(
            f"conv channel mismatch: x {x.shape}, kernel {kernel.shape}, bias {bias.shape}"
        )
    out = Tensor(backend.conv1d_forward(x.data, kernel.data, bias.data))

    def vjp(g):
        gx, gk, gb = backend.conv1d_backward(x.data, kernel.data, g)
        return gx, gk, gb

    record_op("depthwise_conv1d", (x, kernel, bias), (out,), vjp)
    return out


def pairwise_sqdist(points: Tensor) -> Tensor:
    """All-pairs squared euclidean distances between the rows of (N, d).

    Computed from explicit row differences so the result is symmetric with
    an exactly zero diagonal.
    """
    if points.data.ndim != 2:
        raise ShapeError(f"pairwise_sqdist needs rank-2, got {points.shape}")
    diff = points.data[:, None, :] - points.data[None, :, :]
    out = Tensor(np.einsum("mnd,mnd->mn", diff, diff))

    def vjp(g):
        s = g + g.T
        return (2.0 * (s.sum(axis=1)[:, None] * points.data - s @ points.data),)

    record_op("pairwise_sqdist", (points,), (out,), vjp)
    return out


def stack_scalars(ts: Iterable[Tensor]) -> Tensor:
    """Concatenate scalar tensors into one vector (for batched losses)."""
    ts = tuple(ts)
    for t in ts:
        if t.size != 1:
            raise ShapeError(f"stack_scalars needs scalars, got shape {t.shape}")
    out = Tensor(np.array([t.item() for t in ts]))

    def vjp(g):
        return tuple(np.asarray(g[i]).reshape(t.shape) for i, t in enumerate(ts))

    record_op("stack_scalars", ts, (out,), vjp)
    return out


def finite_or_raise(t: Tensor, context: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise FloatingPointError(f"non-finite values in {context}")
    return t
