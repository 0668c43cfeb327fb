"""Bidirectional Mamba layer and the R-layer stack.

A layer runs two independent Mamba units, one over the window and one over
its time reversal, fuses them with the input through a residual layer norm,
then mixes across time positions with a small FFN applied to the transposed
activations, again under a residual layer norm (post-norm throughout).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .mamba import MambaParams, ProjectionParams, mamba_forward, mamba_init, projection
from .tensor import Tensor, add, layer_norm, relu, reverse_rows, transpose


def reverse_time(x: Tensor) -> Tensor:
    """Reverse the window's row (time) order; an exact involution."""
    return reverse_rows(x)


@dataclass
class BiMambaLayerParams:
    """One bidirectional layer: two Mamba units, two norms, a time-mixing FFN."""

    fwd: MambaParams
    bwd: MambaParams
    norm1_gamma: Tensor  # (N,)
    norm1_beta: Tensor
    ffn_in: ProjectionParams   # L -> U, with bias
    ffn_out: ProjectionParams  # U -> L, with bias
    norm2_gamma: Tensor
    norm2_beta: Tensor

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for name, t in self.fwd.named_tensors():
            yield f"fwd.{name}", t
        for name, t in self.bwd.named_tensors():
            yield f"bwd.{name}", t
        yield "norm1.gamma", self.norm1_gamma
        yield "norm1.beta", self.norm1_beta
        yield "ffn_in.W", self.ffn_in.W
        yield "ffn_in.b", self.ffn_in.b
        yield "ffn_out.W", self.ffn_out.W
        yield "ffn_out.b", self.ffn_out.b
        yield "norm2.gamma", self.norm2_gamma
        yield "norm2.beta", self.norm2_beta


@dataclass
class BiMambaStackParams:
    layers: list[BiMambaLayerParams]

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        for i, layer in enumerate(self.layers):
            for name, t in layer.named_tensors():
                yield f"layers.{i}.{name}", t


def bimamba_layer_init(
    n_features: int,
    window: int,
    embed_dim: int,
    state_dim: int,
    ffn_hidden: int,
    seed,
) -> BiMambaLayerParams:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def ones(n):
        return Tensor(np.ones(n), requires_grad=True)

    def zeros(n):
        return Tensor(np.zeros(n), requires_grad=True)

    def uniform(fan_in, shape):
        bound = float(np.sqrt(1.0 / fan_in))
        return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

    return BiMambaLayerParams(
        fwd=mamba_init(n_features, embed_dim, state_dim, rng),
        bwd=mamba_init(n_features, embed_dim, state_dim, rng),
        norm1_gamma=ones(n_features),
        norm1_beta=zeros(n_features),
        ffn_in=ProjectionParams(
            W=uniform(window, (window, ffn_hidden)), b=zeros(ffn_hidden)
        ),
        ffn_out=ProjectionParams(
            W=uniform(ffn_hidden, (ffn_hidden, window)), b=zeros(window)
        ),
        norm2_gamma=ones(n_features),
        norm2_beta=zeros(n_features),
    )


def bimamba_layer(x: Tensor, p: BiMambaLayerParams) -> Tensor:
    """Apply one bidirectional layer to an (L, N) window."""
    y_fwd = mamba_forward(x, p.fwd)
    y_bwd = mamba_forward(reverse_time(x), p.bwd)
    fused = add(add(x, y_fwd), reverse_time(y_bwd))
    y3 = layer_norm(fused, p.norm1_gamma, p.norm1_beta)
    # the FFN mixes the L time positions of each feature's profile
    profiles = transpose(y3)  # (N, L)
    mixed = projection(relu(projection(profiles, p.ffn_in)), p.ffn_out)
    y_time = transpose(mixed)  # (L, N)
    return layer_norm(add(y_time, y3), p.norm2_gamma, p.norm2_beta)


def bimamba_stack(x: Tensor, p: BiMambaStackParams) -> Tensor:
    """Sequentially compose the stack's layers."""
    for layer in p.layers:
        x = bimamba_layer(x, layer)
    return x
