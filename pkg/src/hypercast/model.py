"""Full forecaster: attention bridge, parallel decoding, residual blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import torch
import torch.nn as nn

from .embeddings import SpatialEmbedding, TimeEmbedding, combine_time
from .hgconv import StepContext, _weight
from .recurrent import HypergraphGRUCell, unroll

ABLATION_VARIANTS = {
    "no_res": {"no_res": True},
    "no_res_local": {"no_res": True, "local_only": True},
    "no_res_global": {"no_res": True, "global_only": True},
    "no_res_dgc": {"no_res": True, "pairwise_graph": True},
    "no_te": {"no_time_embedding": True},
    "no_napl": {"no_adaptive_output": True},
}


@dataclass
class ModelConfig:
    """Architecture hyperparameters plus the ablation switches."""

    num_nodes: int
    input_len: int = 12
    horizon: int = 12
    in_channels: int = 3
    hidden_dim: int = 64
    time_dim: int = 24
    node_dim: int = 10
    num_prototypes: int = 8
    num_blocks: int = 2
    head_count: int = 4
    order: int = 2
    slots_per_day: int = 288
    share_prototypes: bool = True
    share_embeddings: bool = True
    # ablation switches
    no_res: bool = False
    local_only: bool = False
    global_only: bool = False
    pairwise_graph: bool = False
    no_time_embedding: bool = False
    no_adaptive_output: bool = False

    def __post_init__(self):
        positive = {
            "num_nodes": self.num_nodes, "input_len": self.input_len,
            "horizon": self.horizon, "in_channels": self.in_channels,
            "hidden_dim": self.hidden_dim, "time_dim": self.time_dim,
            "node_dim": self.node_dim, "num_prototypes": self.num_prototypes,
            "num_blocks": self.num_blocks, "head_count": self.head_count,
            "slots_per_day": self.slots_per_day,
        }
        for name, value in positive.items():
            if value < 1:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.order != 2:
            raise ValueError(
                "order is fixed at 2: the output map sees exactly the two "
                "concatenated blocks (propagated features, embedded input)"
            )
        if self.hidden_dim % self.head_count != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} must be divisible by head_count {self.head_count}"
            )
        if self.local_only and self.global_only:
            raise ValueError("local_only and global_only are mutually exclusive")

    @property
    def structure(self) -> str:
        if self.global_only:
            return "global"
        if self.local_only:
            return "local"
        return "mixed"

    @property
    def effective_blocks(self) -> int:
        return 1 if self.no_res else self.num_blocks


def apply_ablation(config: ModelConfig, variant: str) -> ModelConfig:
    """Configuration for one named ablation variant."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(
            f"unknown variant {variant!r}; valid variants: "
            + ", ".join(sorted(ABLATION_VARIANTS))
        )
    return replace(config, **ABLATION_VARIANTS[variant])


class TemporalQueryAttention(nn.Module):
    """Cross-attention from future time codes into the encoder trajectory.

    Queries come from future time embeddings only (shared across nodes);
    keys/values from the state trajectory modulated by projected past time
    embeddings.  Scaled dot-product, softmax over the history axis.
    """

    def __init__(self, state_dim: int, time_dim: int, head_count: int = 4):
        super().__init__()
        if state_dim % head_count != 0:
            raise ValueError(f"state_dim {state_dim} not divisible by {head_count} heads")
        self.head_count = head_count
        self.head_dim = state_dim // head_count
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.time_proj = _weight(time_dim, state_dim)
        self.query_proj = _weight(time_dim, state_dim)
        self.key_proj = _weight(state_dim, state_dim)
        self.value_proj = _weight(state_dim, state_dim)

    def forward(self, future_time: torch.Tensor, past_time: torch.Tensor,
                states: torch.Tensor, return_weights: bool = False):
        # future_time: (B, H, D_T), past_time: (B, L, D_T), states: (B, L, N, D)
        batch, n_future = future_time.shape[:2]
        n_past, num_nodes, state_dim = states.shape[1:]
        query = (future_time @ self.query_proj).reshape(
            batch, n_future, self.head_count, self.head_dim)
        modulated = (past_time @ self.time_proj).unsqueeze(2) * states
        key = (modulated @ self.key_proj).reshape(
            batch, n_past, num_nodes, self.head_count, self.head_dim)
        value = (modulated @ self.value_proj).reshape(
            batch, n_past, num_nodes, self.head_count, self.head_dim)

        scores = torch.einsum("bqcd,blncd->bqnlc", query, key) * self.scale
        weights = torch.softmax(scores, dim=3)  # over the history axis
        context = torch.einsum("bqnlc,blncd->bqncd", weights, value)
        context = context.reshape(batch, n_future, num_nodes, state_dim)
        if return_weights:
            return context, weights
        return context


class ForecastBlock(nn.Module):
    """Encode the residual input, attend, decode all horizon slots at once.

    Emits a forecast over the horizon and a backcast over the history; the
    caller subtracts the backcast from its input before the next block.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        cell_kwargs = dict(
            hidden_dim=cfg.hidden_dim,
            node_dim=cfg.node_dim,
            time_dim=cfg.time_dim,
            num_prototypes=cfg.num_prototypes,
            share_prototypes=cfg.share_prototypes,
            structure=cfg.structure,
            adaptive_output=not cfg.no_adaptive_output,
            pairwise=cfg.pairwise_graph,
        )
        self.encoder = HypergraphGRUCell(in_dim=cfg.in_channels, **cell_kwargs)
        self.attention = TemporalQueryAttention(cfg.hidden_dim, cfg.time_dim, cfg.head_count)
        self.decoder = HypergraphGRUCell(in_dim=cfg.hidden_dim, **cell_kwargs)
        self.decoder_init = _weight(cfg.horizon, cfg.hidden_dim, fan_in=cfg.hidden_dim)
        self.forecast_head = _weight(cfg.hidden_dim)
        self.backcast_head = _weight(cfg.hidden_dim)

    def decode(self, context: torch.Tensor, future_time: torch.Tensor,
               spatial: torch.Tensor) -> torch.Tensor:
        """One decoder step per horizon slot, with no recurrence across slots.

        Slots are folded into the batch axis, so every slot sees only its own
        attention context, its own learnable initial state, and its own time
        code.
        """
        batch, n_future, num_nodes, state_dim = context.shape
        flat_x = context.reshape(batch * n_future, num_nodes, state_dim)
        flat_h = self.decoder_init.unsqueeze(0).unsqueeze(2).expand(
            batch, n_future, num_nodes, state_dim
        ).reshape(batch * n_future, num_nodes, state_dim)
        flat_time = future_time.reshape(batch * n_future, -1)
        out = self.decoder(flat_x, flat_h, StepContext(flat_time, spatial))
        return out.reshape(batch, n_future, num_nodes, state_dim)

    def forward(self, x: torch.Tensor, past_time: torch.Tensor,
                future_time: torch.Tensor, spatial: torch.Tensor,
                trace: list | None = None):
        # x: (B, L, N, C) -> forecast (B, H, N), backcast (B, L, N)
        _, states = unroll(self.encoder, x, past_time, spatial, trace=trace)
        backcast = states @ self.backcast_head
        context = self.attention(future_time, past_time, states)
        decoded = self.decode(context, future_time, spatial)
        forecast = decoded @ self.forecast_head
        return forecast, backcast


class HypergraphForecaster(nn.Module):
    """Stacked forecast blocks over shared time/node embeddings.

    The prediction is the plain sum of the block forecasts; block ``i+1``
    receives the previous block's input with the backcast subtracted from
    channel 0.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        n_blocks = cfg.effective_blocks
        n_tables = 1 if cfg.share_embeddings else n_blocks
        self.time_tables = nn.ModuleList(
            TimeEmbedding(cfg.slots_per_day, cfg.time_dim) for _ in range(n_tables)
        )
        self.spatial_tables = nn.ModuleList(
            SpatialEmbedding(cfg.num_nodes, cfg.node_dim) for _ in range(n_tables)
        )
        self.blocks = nn.ModuleList(ForecastBlock(cfg) for _ in range(n_blocks))

    @property
    def spatial_embedding(self) -> SpatialEmbedding:
        return self.spatial_tables[0]

    def _tables(self, block_index: int):
        if self.cfg.share_embeddings:
            return self.time_tables[0], self.spatial_tables[0]
        return self.time_tables[block_index], self.spatial_tables[block_index]

    def _time_codes(self, table: TimeEmbedding, tod, dow) -> torch.Tensor:
        e_d, e_w = table(tod, dow)
        if self.cfg.no_time_embedding:
            e_d, e_w = torch.zeros_like(e_d), torch.zeros_like(e_w)
        return combine_time(e_d, e_w)

    def forward(self, x, tod_past, dow_past, tod_future, dow_future,
                return_parts: bool = False, trace: list | None = None):
        # x: (B, L, N, C); index args: (B, L) / (B, H) -> (B, H, N)
        param = next(self.parameters())
        x = torch.as_tensor(x, dtype=param.dtype, device=param.device)
        residual = x
        total = None
        parts = []
        for i, block in enumerate(self.blocks):
            time_table, spatial_table = self._tables(i)
            past_time = self._time_codes(time_table, tod_past, dow_past)
            future_time = self._time_codes(time_table, tod_future, dow_future)
            forecast, backcast = block(
                residual, past_time, future_time, spatial_table(),
                trace=trace if i == 0 else None,
            )
            parts.append((forecast, backcast))
            total = forecast if total is None else total + forecast
            if i + 1 < len(self.blocks):
                residual = torch.cat(
                    [(residual[..., 0] - backcast).unsqueeze(-1), residual[..., 1:]],
                    dim=-1,
                )
        if return_parts:
            return total, parts
        return total
