"""Learnable time-of-day, day-of-week, and per-node embedding tables."""

from __future__ import annotations

import math

import torch
import torch.nn as nn


def _table(rows: int, dim: int) -> nn.Parameter:
    # Uniform in [-1/sqrt(dim), 1/sqrt(dim)] keeps early softmax assignments
    # near-uniform.
    bound = 1.0 / math.sqrt(dim)
    weight = torch.empty(rows, dim)
    nn.init.uniform_(weight, -bound, bound)
    return nn.Parameter(weight)


def _check_range(indices: torch.Tensor, size: int, what: str) -> None:
    if indices.numel() == 0:
        return
    lo, hi = int(indices.min()), int(indices.max())
    if lo < 0 or hi >= size:
        raise IndexError(f"{what} index out of range [0, {size}): saw [{lo}, {hi}]")


class TimeEmbedding(nn.Module):
    """Row-lookup tables for time-of-day slots and days of the week.

    A lookup is exactly one-hot encoding followed by a bias-free linear map,
    i.e. row selection from the table.
    """

    def __init__(self, slots_per_day: int, dim: int):
        super().__init__()
        self.slots_per_day = slots_per_day
        self.dim = dim
        self.tod_table = _table(slots_per_day, dim)
        self.dow_table = _table(7, dim)

    def forward(self, tod, dow):
        """Look up (tod rows, dow rows); output shapes are index shape + (dim,)."""
        tod = torch.as_tensor(tod, dtype=torch.long, device=self.tod_table.device)
        dow = torch.as_tensor(dow, dtype=torch.long, device=self.dow_table.device)
        _check_range(tod, self.slots_per_day, "time-of-day")
        _check_range(dow, 7, "day-of-week")
        return self.tod_table[tod], self.dow_table[dow]


def combine_time(e_d: torch.Tensor, e_w: torch.Tensor) -> torch.Tensor:
    """Elementwise product of the two time embeddings, used as the joint time code."""
    if e_d.shape != e_w.shape:
        raise ValueError(f"shape mismatch: {tuple(e_d.shape)} vs {tuple(e_w.shape)}")
    return e_d * e_w


class SpatialEmbedding(nn.Module):
    """One learnable vector per node, trained jointly with the model."""

    def __init__(self, num_nodes: int, dim: int):
        super().__init__()
        self.num_nodes = num_nodes
        self.dim = dim
        self.table = _table(num_nodes, dim)

    def forward(self, node_ids=None) -> torch.Tensor:
        if node_ids is None:
            return self.table
        node_ids = torch.as_tensor(node_ids, dtype=torch.long, device=self.table.device)
        _check_range(node_ids, self.num_nodes, "node")
        return self.table[node_ids]
