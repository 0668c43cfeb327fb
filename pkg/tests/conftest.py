"""Shared oracles and helpers for the suite."""

import numpy as np
import pytest

from samba.tensor import Tape, Tensor


def finite_diff_grad(scalar_fn, tensor: Tensor, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar_fn() w.r.t. one tensor's data.

    Perturbs the tensor in place and restores it; scalar_fn must re-run the
    forward pass from the tensor's current data.
    """
    flat = tensor.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = scalar_fn()
        flat[i] = orig - step
        f_minus = scalar_fn()
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * step)
    return grad.reshape(tensor.shape)


def rel_err(g_ad: np.ndarray, g_fd: np.ndarray, clamp: float = 1e-8) -> float:
    """Worst element-wise relative error, denominators clamped from below."""
    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), clamp)
    return float(np.max(np.abs(g_ad - g_fd) / denom))


def backward_grads(build_loss, tensors):
    """Run build_loss under a fresh tape and return each tensor's gradient."""
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    return [t.grad for t in tensors]


def check_grads(build_loss, scalar_fn, named_tensors, step=1e-6, tol=1e-4):
    """Assert autodiff gradients match finite differences for every tensor."""
    tensors = [t for _, t in named_tensors]
    backward_grads(build_loss, tensors)
    for name, t in named_tensors:
        assert t.grad is not None, f"{name} received no gradient"
        g_fd = finite_diff_grad(scalar_fn, t, step=step)
        err = rel_err(t.grad, g_fd)
        assert err < tol, f"{name}: rel err {err:.3e} >= {tol}"
        t.zero_grad()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of a run."""
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                rows.append((nodeid.split("::")[-1], status))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in rows:
            label = "PASS" if status == "passed" else "FAIL"
            terminalreporter.write_line(f"[{label}] {name}")
