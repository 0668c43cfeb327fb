"""Single-direction Mamba unit: project, convolve, gate, scan, project back.

The unit maps an (L, N) feature window to an (L, N) output through an
embedding space of width E with H hidden states per embedded channel.  Step
sizes, input weights and output weights of the state-space core are functions
of the input (the selective mechanism).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .ssm import SsmInputs, discretize, selective_scan
from .tensor import (
    Tensor,
    ShapeError,
    add_bias,
    depthwise_conv1d,
    matmul,
    mul,
    silu,
    softplus,
)

CONV_WIDTH = 4

# softplus of the step-size projection bias starts in this range, keeping the
# discrete state decay close to 1 (long memory) at initialization
DT_INIT_MIN = 1e-3
DT_INIT_MAX = 1e-1


@dataclass
class ProjectionParams:
    """Weights of a linear map, with an optional bias row."""

    W: Tensor
    b: Tensor | None = None

    @property
    def has_bias(self) -> bool:
        return self.b is not None


def projection(q: Tensor, p: ProjectionParams) -> Tensor:
    """Apply q @ W (+ bias broadcast over rows when present)."""
    if q.shape[1] != p.W.shape[0]:
        raise ShapeError(f"projection shapes: input {q.shape}, weight {p.W.shape}")
    out = matmul(q, p.W)
    if p.b is not None:
        out = add_bias(out, p.b)
    return out


@dataclass
class MambaParams:
    """All learnable tensors of one directional Mamba unit."""

    proj_x: ProjectionParams      # N -> E, no bias
    proj_z: ProjectionParams      # N -> E, no bias (gate branch)
    conv_kernel: Tensor           # (E, CONV_WIDTH)
    conv_bias: Tensor             # (E,)
    proj_B: ProjectionParams      # E -> H, no bias
    proj_C: ProjectionParams      # E -> H, no bias
    A: Tensor                     # (E, H), strictly negative at init
    proj_delta: ProjectionParams  # E -> E, with bias
    proj_out: ProjectionParams    # E -> N, no bias

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "proj_x.W", self.proj_x.W
        yield "proj_z.W", self.proj_z.W
        yield "conv_kernel", self.conv_kernel
        yield "conv_bias", self.conv_bias
        yield "proj_B.W", self.proj_B.W
        yield "proj_C.W", self.proj_C.W
        yield "A", self.A
        yield "proj_delta.W", self.proj_delta.W
        yield "proj_delta.b", self.proj_delta.b
        yield "proj_out.W", self.proj_out.W


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = float(np.sqrt(1.0 / fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def mamba_init(
    n_features: int, embed_dim: int, state_dim: int, seed
) -> MambaParams:
    """Deterministic parameter initialization for one Mamba unit.

    Projection weights are uniform in +-sqrt(1/fan_in).  A[e, h] = -(h+1)
    gives each channel a spread of real negative modes.  The step-size bias
    is set so softplus lands log-uniformly in [DT_INIT_MIN, DT_INIT_MAX].
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n, e, h = n_features, embed_dim, state_dim
    params = MambaParams(
        proj_x=ProjectionParams(W=_uniform(rng, n, (n, e))),
        proj_z=ProjectionParams(W=_uniform(rng, n, (n, e))),
        conv_kernel=_uniform(rng, CONV_WIDTH, (e, CONV_WIDTH)),
        conv_bias=Tensor(np.zeros(e), requires_grad=True),
        proj_B=ProjectionParams(W=_uniform(rng, e, (e, h))),
        proj_C=ProjectionParams(W=_uniform(rng, e, (e, h))),
        A=Tensor(np.tile(-(np.arange(h, dtype=np.float64) + 1.0), (e, 1)),
                 requires_grad=True),
        proj_delta=ProjectionParams(W=_uniform(rng, e, (e, e)), b=None),
        proj_out=ProjectionParams(W=_uniform(rng, e, (e, n))),
    )
    dt = np.exp(rng.uniform(np.log(DT_INIT_MIN), np.log(DT_INIT_MAX), size=e))
    params.proj_delta.b = Tensor(np.log(np.expm1(dt)), requires_grad=True)
    return params


def mamba_forward(x: Tensor, p: MambaParams) -> Tensor:
    """Run one directional Mamba unit over an (L, N) window.

    Output is (L, N): the scanned state readout, gated by the SiLU of a
    parallel projection of the input, projected back to feature space.
    """
    x_embed = projection(x, p.proj_x)
    z_gate = projection(x, p.proj_z)
    x_inner = silu(depthwise_conv1d(x_embed, p.conv_kernel, p.conv_bias))
    b_in = projection(x_inner, p.proj_B)
    c_out = projection(x_inner, p.proj_C)
    delta = softplus(projection(x_inner, p.proj_delta))
    disc = discretize(SsmInputs(A=p.A, B=b_in, C=c_out, delta=delta))
    y_scan = selective_scan(disc, c_out, x_inner)
    gated = mul(y_scan, silu(z_gate))
    return projection(gated, p.proj_out)
