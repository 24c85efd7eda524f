"""Prototype-guided hypergraph convolution.

One convolution step: blend the recurrent state with the static node
embedding under a time-conditioned gate, softly assign nodes to prototype
hyperedges, pass messages node -> hyperedge -> node with degree
normalization, and emit per-node adaptive outputs from a shared weight pool.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn


def _weight(*shape: int, fan_in: int | None = None) -> nn.Parameter:
    bound = 1.0 / math.sqrt(fan_in if fan_in is not None else shape[0])
    weight = torch.empty(*shape)
    nn.init.uniform_(weight, -bound, bound)
    return nn.Parameter(weight)


class PrototypeBank(nn.Module):
    """Learnable pattern vectors; each prototype anchors one hyperedge."""

    def __init__(self, num_prototypes: int, dim: int):
        super().__init__()
        if num_prototypes < 1:
            raise ValueError("need at least one prototype")
        self.num_prototypes = num_prototypes
        self.dim = dim
        self.weight = _weight(num_prototypes, dim, fan_in=dim)

    def forward(self) -> torch.Tensor:
        return self.weight


@dataclass
class StepContext:
    """Per-step conditioning: combined time code and the static node table.

    ``time_embed`` is the elementwise product of the time-of-day and
    day-of-week embeddings at this step, shape (..., D_T); ``spatial`` is the
    full (N, D_N) node table.
    """

    time_embed: torch.Tensor
    spatial: torch.Tensor


@dataclass
class SoftIncidence:
    """Soft node-to-hyperedge memberships with their degree vectors.

    ``weights`` rows live on the simplex, so ``node_degree`` is identically 1
    (kept explicit for fidelity to the normalized message-passing form) and
    ``edge_degree`` sums to N.
    """

    weights: torch.Tensor      # (..., N, M)
    node_degree: torch.Tensor  # (..., N)
    edge_degree: torch.Tensor  # (..., M)


def soft_assign(node_repr: torch.Tensor, prototypes: torch.Tensor) -> SoftIncidence:
    """Softmax similarity of each node representation against the prototypes."""
    if node_repr.shape[-1] != prototypes.shape[-1]:
        raise ValueError(
            f"node dim {node_repr.shape[-1]} != prototype dim {prototypes.shape[-1]}"
        )
    logits = node_repr @ prototypes.transpose(-1, -2)
    weights = torch.softmax(logits, dim=-1)
    return SoftIncidence(
        weights=weights,
        node_degree=weights.sum(dim=-1),
        edge_degree=weights.sum(dim=-2),
    )


def gather_to_edges(node_feats: torch.Tensor, incidence: SoftIncidence,
                    edge_weight: torch.Tensor) -> torch.Tensor:
    """Aggregate degree-scaled node features into hyperedge features."""
    if bool((incidence.node_degree <= 0).any()):
        # Unreachable under row-softmax; guards alternative assignment rules.
        raise ValueError("node with zero hyperedge membership")
    scaled = node_feats * incidence.node_degree.rsqrt().unsqueeze(-1)
    return (incidence.weights.transpose(-1, -2) @ scaled) @ edge_weight


def scatter_to_nodes(edge_feats: torch.Tensor, incidence: SoftIncidence) -> torch.Tensor:
    """Propagate degree-averaged hyperedge features back onto the nodes."""
    if bool((incidence.edge_degree <= 0).any()):
        raise ValueError("degenerate hyperedge with zero total membership")
    per_edge = edge_feats / incidence.edge_degree.unsqueeze(-1)
    out = incidence.weights @ per_edge
    out = out * incidence.node_degree.rsqrt().unsqueeze(-1)
    return torch.relu(out)


def node_adaptive_output(hyper_feats: torch.Tensor, embed_feats: torch.Tensor,
                         node_repr: torch.Tensor, pool: torch.Tensor) -> torch.Tensor:
    """Contract node representations against the weight pool and apply per node.

    ``pool`` has shape (D_N, 2*D, D_out); node ``i`` gets its own output map
    ``sum_d node_repr[i, d] * pool[d]`` applied to [hyper_feats || embed_feats].
    """
    concat = torch.cat([hyper_feats, embed_feats], dim=-1)
    if pool.shape[1] != concat.shape[-1]:
        raise ValueError(
            f"weight pool expects width {pool.shape[1]}, concatenation has {concat.shape[-1]}"
        )
    per_node = torch.einsum("...nd,dio->...nio", node_repr, pool)
    return torch.einsum("...ni,...nio->...no", concat, per_node)


class HypergraphConv(nn.Module):
    """The full convolution step used for every gate of the recurrent cell.

    ``structure`` selects how node representations for hyperedge assignment
    are built: "mixed" gates the projected state against the static table,
    "local" uses only the projected state, "global" only the static table.
    ``pairwise`` swaps the hypergraph stage for dense pairwise propagation
    over a softmax adjacency (ablation); ``adaptive_output=False`` replaces
    the per-node weight pool with one shared output matrix (ablation).
    """

    def __init__(self, in_dim: int, state_dim: int, hidden_dim: int, out_dim: int,
                 node_dim: int, time_dim: int, prototypes: PrototypeBank,
                 structure: str = "mixed", adaptive_output: bool = True,
                 pairwise: bool = False):
        super().__init__()
        if structure not in ("mixed", "local", "global"):
            raise ValueError(f"unknown structure mode: {structure!r}")
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.structure = structure
        self.adaptive_output = adaptive_output
        self.pairwise = pairwise
        self.prototypes = prototypes

        self.input_embed = _weight(in_dim, hidden_dim)
        self.state_proj = _weight(state_dim, node_dim)
        self.gate_proj = _weight(time_dim, node_dim)
        self.edge_weight = _weight(hidden_dim, hidden_dim)
        if adaptive_output:
            self.pool = _weight(node_dim, 2 * hidden_dim, out_dim, fan_in=2 * hidden_dim)
        else:
            self.output_weight = _weight(2 * hidden_dim, out_dim)

    def blend_node_state(self, h_prev: torch.Tensor, ctx: StepContext):
        """Node representations for structure inference, plus the time gate."""
        if self.structure == "global":
            shape = h_prev.shape[:-2] + ctx.spatial.shape
            return ctx.spatial.expand(shape), None
        local = h_prev @ self.state_proj
        if self.structure == "local":
            return local, None
        gate = torch.sigmoid(ctx.time_embed @ self.gate_proj).unsqueeze(-2)
        return gate * local + (1.0 - gate) * ctx.spatial, gate

    def assignment(self, h_prev: torch.Tensor, ctx: StepContext) -> SoftIncidence:
        node_repr, _ = self.blend_node_state(h_prev, ctx)
        return soft_assign(node_repr, self.prototypes())

    def pairwise_adjacency(self, node_repr: torch.Tensor) -> torch.Tensor:
        """Dense row-stochastic adjacency from node-representation similarity."""
        return torch.softmax(torch.relu(node_repr @ node_repr.transpose(-1, -2)), dim=-1)

    def forward(self, x: torch.Tensor, h_prev: torch.Tensor, ctx: StepContext,
                trace: list | None = None) -> torch.Tensor:
        # x: (..., N, in_dim), h_prev: (..., N, state_dim) -> (..., N, out_dim)
        node_repr, _ = self.blend_node_state(h_prev, ctx)
        embedded = x @ self.input_embed
        if self.pairwise:
            adjacency = self.pairwise_adjacency(node_repr)
            hyper = torch.relu(adjacency @ embedded @ self.edge_weight)
        else:
            incidence = soft_assign(node_repr, self.prototypes())
            if trace is not None:
                trace.append(SoftIncidence(
                    weights=incidence.weights.detach().clone(),
                    node_degree=incidence.node_degree.detach().clone(),
                    edge_degree=incidence.edge_degree.detach().clone(),
                ))
            edges = gather_to_edges(embedded, incidence, self.edge_weight)
            hyper = scatter_to_nodes(edges, incidence)
        if self.adaptive_output:
            return node_adaptive_output(hyper, embedded, node_repr, self.pool)
        return torch.cat([hyper, embedded], dim=-1) @ self.output_weight
