import math

import numpy as np
import pytest

from samba.mamba import (
    CONV_WIDTH,
    MambaParams,
    ProjectionParams,
    mamba_forward,
    mamba_init,
    projection,
)
from samba.tensor import Tensor, ShapeError, create, mul, smul, sum_all

from conftest import backward_grads, finite_diff_grad, rel_err


def zero_params(n, e, h) -> MambaParams:
    def proj(rows, cols, bias=False):
        return ProjectionParams(
            W=Tensor(np.zeros((rows, cols)), requires_grad=True),
            b=Tensor(np.zeros(cols), requires_grad=True) if bias else None,
        )

    return MambaParams(
        proj_x=proj(n, e),
        proj_z=proj(n, e),
        conv_kernel=Tensor(np.zeros((e, CONV_WIDTH)), requires_grad=True),
        conv_bias=Tensor(np.zeros(e), requires_grad=True),
        proj_B=proj(e, h),
        proj_C=proj(e, h),
        A=Tensor(np.zeros((e, h)), requires_grad=True),
        proj_delta=proj(e, e, bias=True),
        proj_out=proj(e, n),
    )


class TestProjection:
    def test_identity_weight(self, rng):
        q = Tensor(rng.normal(size=(3, 4)))
        out = projection(q, ProjectionParams(W=Tensor(np.eye(4))))
        assert np.allclose(out.data, q.data)

    def test_zero_weight_gives_bias_rows(self, rng):
        q = Tensor(rng.normal(size=(3, 4)))
        b = rng.normal(size=2)
        out = projection(
            q, ProjectionParams(W=Tensor(np.zeros((4, 2))), b=Tensor(b))
        )
        assert np.allclose(out.data, np.tile(b, (3, 1)))

    def test_hand_case(self):
        out = projection(
            create([1, 2], [1, 2]),
            ProjectionParams(W=create([2, 1], [1, 1]), b=create([1], [1])),
        )
        assert out.data[0, 0] == 4.0

    def test_shape_error(self, rng):
        with pytest.raises(ShapeError):
            projection(
                Tensor(rng.normal(size=(3, 4))),
                ProjectionParams(W=Tensor(np.zeros((5, 2)))),
            )


class TestMambaForward:
    def test_zero_params_give_zero_output(self, rng):
        p = zero_params(n=3, e=4, h=2)
        x = Tensor(rng.normal(size=(6, 3)))
        assert np.all(mamba_forward(x, p).data == 0.0)

    @pytest.mark.parametrize("L,N", [(1, 2), (4, 3), (9, 5)])
    def test_shape_preserving(self, L, N, rng):
        p = mamba_init(N, 4, 3, seed=0)
        out = mamba_forward(Tensor(rng.normal(size=(L, N))), p)
        assert out.shape == (L, N)
        assert np.all(np.isfinite(out.data))

    def test_single_step_scalar_hand_trace(self):
        # every weight a hand-set scalar; independent trace in plain floats
        wx, wz, k3, cb = 0.7, -0.4, 0.9, 0.2
        wb, wc, a, wd, bd, wo = 1.1, 0.8, -0.5, 0.3, 0.1, 1.3
        x0 = 0.6

        p = MambaParams(
            proj_x=ProjectionParams(W=Tensor([[wx]])),
            proj_z=ProjectionParams(W=Tensor([[wz]])),
            conv_kernel=Tensor([[0.0, 0.0, 0.0, k3]]),
            conv_bias=Tensor([cb]),
            proj_B=ProjectionParams(W=Tensor([[wb]])),
            proj_C=ProjectionParams(W=Tensor([[wc]])),
            A=Tensor([[a]]),
            proj_delta=ProjectionParams(W=Tensor([[wd]]), b=Tensor([bd])),
            proj_out=ProjectionParams(W=Tensor([[wo]])),
        )
        out = mamba_forward(Tensor([[x0]]), p)

        def sigmoid(v):
            return 1.0 / (1.0 + math.exp(-v))

        def silu(v):
            return v * sigmoid(v)

        x_inner = silu(k3 * (x0 * wx) + cb)
        b_in = x_inner * wb
        c_out = x_inner * wc
        delta = math.log1p(math.exp(x_inner * wd + bd))
        z = delta * a
        a_hat = math.exp(z)
        b_hat = (a_hat - 1.0) / z * delta * b_in
        h = b_hat * x_inner
        y = c_out * h
        expected = y * silu(x0 * wz) * wo
        assert out.data[0, 0] == pytest.approx(expected, rel=1e-12)

    def test_causality(self, rng):
        p = mamba_init(4, 5, 3, seed=2)
        x = rng.normal(size=(7, 4))
        base = mamba_forward(Tensor(x), p).data
        x2 = x.copy()
        x2[4] += 1.0
        bumped = mamba_forward(Tensor(x2), p).data
        assert np.array_equal(base[:4], bumped[:4])
        assert not np.allclose(base[4:], bumped[4:])


class TestMambaInit:
    def test_deterministic(self):
        p1, p2 = mamba_init(5, 6, 4, seed=9), mamba_init(5, 6, 4, seed=9)
        for (n1, t1), (_, t2) in zip(p1.named_tensors(), p2.named_tensors()):
            assert np.array_equal(t1.data, t2.data), n1

    def test_state_dynamics_rows(self):
        p = mamba_init(3, 2, 4, seed=0)
        assert np.array_equal(p.A.data, np.tile([-1.0, -2.0, -3.0, -4.0], (2, 1)))

    def test_fan_in_bound(self):
        p = mamba_init(64, 64, 4, seed=1)
        bound = math.sqrt(1.0 / 64)
        assert bound == 0.125
        assert np.max(np.abs(p.proj_x.W.data)) <= bound
        assert np.max(np.abs(p.proj_delta.W.data)) <= bound

    def test_initial_step_sizes_small_positive(self):
        p = mamba_init(4, 32, 8, seed=3)
        dt = np.log1p(np.exp(p.proj_delta.b.data))
        assert np.all(dt >= 1e-3 - 1e-12)
        assert np.all(dt <= 1e-1 + 1e-12)


def test_parameter_gradients_match_fd(rng):
    p = mamba_init(4, 3, 2, seed=5)
    x = Tensor(rng.normal(size=(5, 4)))
    w = Tensor(rng.normal(size=(5, 4)))

    def loss():
        return smul(sum_all(mul(mamba_forward(x, p), w)), 0.1)

    named = list(p.named_tensors())
    backward_grads(loss, [t for _, t in named])
    for name, t in named:
        g_fd = finite_diff_grad(lambda: loss().item(), t)
        assert rel_err(t.grad, g_fd) < 1e-4, name
        t.zero_grad()
