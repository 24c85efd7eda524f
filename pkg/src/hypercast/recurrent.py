"""Gated recurrent cell whose transforms are hypergraph convolutions."""

from __future__ import annotations

import torch
import torch.nn as nn

from .hgconv import HypergraphConv, PrototypeBank, StepContext


class HypergraphGRUCell(nn.Module):
    """GRU step with the reset/update/candidate maps replaced by convolutions.

    The three convolutions share one prototype bank by default (one
    consistent hyperedge structure per step); ``share_prototypes=False``
    gives each its own bank.  Convention: the update gate multiplies the
    previous state, the complement multiplies the candidate.
    """

    def __init__(self, in_dim: int, hidden_dim: int, node_dim: int, time_dim: int,
                 num_prototypes: int, share_prototypes: bool = True,
                 structure: str = "mixed", adaptive_output: bool = True,
                 pairwise: bool = False):
        super().__init__()
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim

        def bank() -> PrototypeBank:
            return PrototypeBank(num_prototypes, node_dim)

        shared = bank() if share_prototypes else None

        def conv() -> HypergraphConv:
            return HypergraphConv(
                in_dim=in_dim + hidden_dim,
                state_dim=hidden_dim,
                hidden_dim=hidden_dim,
                out_dim=hidden_dim,
                node_dim=node_dim,
                time_dim=time_dim,
                prototypes=shared if shared is not None else bank(),
                structure=structure,
                adaptive_output=adaptive_output,
                pairwise=pairwise,
            )

        self.reset_conv = conv()
        self.update_conv = conv()
        self.candidate_conv = conv()

    def zero_state(self, x: torch.Tensor) -> torch.Tensor:
        """All-zero hidden state matching the leading dims of ``x``."""
        return x.new_zeros(x.shape[:-1] + (self.hidden_dim,))

    def forward(self, x: torch.Tensor, h_prev: torch.Tensor, ctx: StepContext,
                trace: list | None = None) -> torch.Tensor:
        # x: (..., N, in_dim), h_prev: (..., N, hidden_dim)
        gate_in = torch.cat([x, h_prev], dim=-1)
        reset = torch.sigmoid(self.reset_conv(gate_in, h_prev, ctx))
        update = torch.sigmoid(self.update_conv(gate_in, h_prev, ctx))
        candidate_in = torch.cat([x, reset * h_prev], dim=-1)
        candidate = torch.tanh(self.candidate_conv(candidate_in, h_prev, ctx, trace=trace))
        return update * h_prev + (1.0 - update) * candidate


def unroll(cell: HypergraphGRUCell, inputs: torch.Tensor, time_codes: torch.Tensor,
           spatial: torch.Tensor, h0: torch.Tensor | None = None,
           trace: list | None = None):
    """Run the cell over a (B, L, N, C) sequence from a zero (or given) state.

    Returns the final state and the full (B, L, N, D) state trajectory; the
    trajectory feeds the attention keys/values and the backcast head.
    """
    if inputs.dim() != 4:
        raise ValueError(f"expected (B, L, N, C) inputs, got shape {tuple(inputs.shape)}")
    state = cell.zero_state(inputs[:, 0]) if h0 is None else h0
    states = []
    for t in range(inputs.shape[1]):
        ctx = StepContext(time_embed=time_codes[:, t], spatial=spatial)
        state = cell(inputs[:, t], state, ctx, trace=trace)
        states.append(state)
    return state, torch.stack(states, dim=1)
