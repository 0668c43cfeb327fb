"""Adaptive graph convolution head over daily-feature nodes.

Each of the N features is a graph node with a learnable embedding.  A
Gaussian kernel of pairwise embedding distances, row-softmax-normalized,
gives the adjacency; Chebyshev polynomials of it propagate the window, and
per-node temporal filters (factorized through the same embeddings) reduce
everything to one scalar return prediction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .mamba import ProjectionParams, projection
from .tensor import (
    Tensor,
    add,
    exp,
    matmul,
    mul,
    pairwise_sqdist,
    reshape,
    scale,
    slice_axis,
    smul,
    softmax_rows,
    sub,
    sum_axis,
    transpose,
)


@dataclass
class GraphParams:
    """Node embeddings plus the kernel sharpness scalar.

    The sharpness is stored unconstrained and exponentiated in the forward
    pass, so the effective scale stays strictly positive.
    """

    node_embed: Tensor       # (N, d_e), d_e < N
    log_kernel_scale: Tensor  # scalar

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "node_embed", self.node_embed
        yield "log_kernel_scale", self.log_kernel_scale


@dataclass
class AgcParams:
    """Factorized filter bank and the scalar output head."""

    filter_factors: Tensor  # (d_e, K+1, L)
    bias_factors: Tensor    # (d_e,)
    head: ProjectionParams  # N -> 1, no bias

    def named_tensors(self) -> Iterator[tuple[str, Tensor]]:
        yield "filter_factors", self.filter_factors
        yield "bias_factors", self.bias_factors
        yield "head.W", self.head.W


def graph_init(n_features: int, node_dim: int, seed) -> GraphParams:
    if node_dim >= n_features:
        raise ValueError(
            f"node embedding dim {node_dim} must be smaller than N={n_features}"
        )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return GraphParams(
        node_embed=Tensor(
            rng.uniform(-0.5, 0.5, size=(n_features, node_dim)), requires_grad=True
        ),
        log_kernel_scale=Tensor(np.zeros(()), requires_grad=True),
    )


def agc_init(
    n_features: int, node_dim: int, cheb_order: int, window: int, seed
) -> AgcParams:
    """Filter factors start uniform; the scalar head starts at zero.

    A zero head makes the initial prediction exactly 0, already on the scale
    of daily returns, so short training budgets go to fitting signal instead
    of shrinking the output.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = float(np.sqrt(1.0 / node_dim))
    return AgcParams(
        filter_factors=Tensor(
            rng.uniform(-bound, bound, size=(node_dim, cheb_order + 1, window)),
            requires_grad=True,
        ),
        bias_factors=Tensor(
            rng.uniform(-bound, bound, size=node_dim), requires_grad=True
        ),
        head=ProjectionParams(
            W=Tensor(np.zeros((n_features, 1)), requires_grad=True)
        ),
    )


def build_adjacency(g: GraphParams) -> Tensor:
    """Row-stochastic adjacency from a Gaussian kernel of embedding distances."""
    dist = pairwise_sqdist(g.node_embed)
    sharpness = exp(g.log_kernel_scale)
    kernel = exp(smul(scale(dist, sharpness), -1.0))
    return softmax_rows(kernel)


def chebyshev_basis(adjacency: Tensor, order: int) -> list[Tensor]:
    """Chebyshev polynomials T_0..T_order of the adjacency matrix.

    T_0 = I, T_1 = A, T_n = 2 A T_{n-1} - T_{n-2}.
    """
    if order < 0:
        raise ValueError(f"order must be >= 0, got {order}")
    n = adjacency.shape[0]
    basis = [Tensor(np.eye(n))]
    if order >= 1:
        basis.append(adjacency)
    for _ in range(2, order + 1):
        basis.append(sub(smul(matmul(adjacency, basis[-1]), 2.0), basis[-2]))
    return basis


def materialize_filters(g: GraphParams, a: AgcParams) -> tuple[Tensor, Tensor]:
    """Expand the factorized filters to per-node form.

    W_filter[n, k, l] = sum_d embed[n, d] * factors[d, k, l] and
    b_filter = embed @ bias_factors; sharing the embedding keeps the
    parameter count at d_e*(K+1)*L + d_e instead of N*(K+1)*L + N.
    """
    d_e, k1, window = a.filter_factors.shape
    n = g.node_embed.shape[0]
    w_flat = matmul(g.node_embed, reshape(a.filter_factors, (d_e, k1 * window)))
    w_filter = reshape(w_flat, (n, k1, window))
    b_filter = reshape(matmul(g.node_embed, reshape(a.bias_factors, (d_e, 1))), (n,))
    return w_filter, b_filter


def agc_forward(y: Tensor, g: GraphParams, a: AgcParams) -> Tensor:
    """Filter an (L, N) window over the learned graph down to a scalar.

    For each polynomial order k, the window is propagated by T_k of the
    adjacency, weighted elementwise by that order's per-node temporal filter
    slice, and summed over time; the per-node outputs plus bias feed the
    linear head.
    """
    k1 = a.filter_factors.shape[1]
    adjacency = build_adjacency(g)
    basis = chebyshev_basis(adjacency, k1 - 1)
    w_filter, b_filter = materialize_filters(g, a)
    profiles = transpose(y)  # (N, L)
    node_out = None
    for k, t_k in enumerate(basis):
        propagated = matmul(t_k, profiles)
        weighted = mul(propagated, slice_axis(w_filter, 1, k))
        term = sum_axis(weighted, 1)
        node_out = term if node_out is None else add(node_out, term)
    node_out = add(node_out, b_filter)
    n = node_out.shape[0]
    return reshape(projection(reshape(node_out, (1, n)), a.head), ())
