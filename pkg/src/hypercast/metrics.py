"""Forecast loss and evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

MAPE_THRESHOLD = 1.0  # flow units; targets below this are excluded from MAPE


def mae_loss(pred: torch.Tensor, target: torch.Tensor,
             mask: torch.Tensor | None = None) -> torch.Tensor:
    """Mean absolute deviation over the unmasked entries."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    error = (pred - target).abs()
    if mask is None:
        return error.mean()
    mask = mask.to(error.dtype)
    denom = mask.sum()
    if denom.item() == 0:
        raise ValueError("mask excludes every entry")
    return (error * mask).sum() / denom


@dataclass
class MetricReport:
    """Headline MAE/RMSE/MAPE plus an optional per-horizon breakdown."""

    mae: float
    rmse: float
    mape: float
    per_horizon: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {"mae": self.mae, "rmse": self.rmse, "mape": self.mape}
        if self.per_horizon:
            out["per_horizon"] = self.per_horizon
        return out


def _masked(values: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return values if mask is None else values[mask]


def compute_metrics(pred, target, mask=None, mape_threshold: float = MAPE_THRESHOLD,
                    per_horizon: bool = False, horizon_axis: int = 1) -> MetricReport:
    """MAE, RMSE, and percentage error on the denormalized scale.

    MAPE averages |err|/|y| over entries whose |y| clears ``mape_threshold``;
    everything below it is excluded to keep near-zero targets from blowing up
    the percentage.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            raise ValueError("mask excludes every entry")

    def headline(p, t, m):
        err = _masked(p - t, m)
        mae = float(np.abs(err).mean())
        rmse = float(np.sqrt((err ** 2).mean()))
        big = np.abs(t) >= mape_threshold
        if m is not None:
            big &= m
        if not big.any():
            raise ValueError("all targets below the MAPE threshold")
        mape = float(100.0 * (np.abs(p[big] - t[big]) / np.abs(t[big])).mean())
        return mae, rmse, mape

    mae, rmse, mape = headline(pred, target, mask)
    breakdown = []
    if per_horizon:
        for h in range(pred.shape[horizon_axis]):
            p = np.take(pred, h, axis=horizon_axis)
            t = np.take(target, h, axis=horizon_axis)
            m = np.take(mask, h, axis=horizon_axis) if mask is not None else None
            h_mae, h_rmse, h_mape = headline(p, t, m)
            breakdown.append({"horizon": h + 1, "mae": h_mae, "rmse": h_rmse, "mape": h_mape})
    return MetricReport(mae=mae, rmse=rmse, mape=mape, per_horizon=breakdown)
