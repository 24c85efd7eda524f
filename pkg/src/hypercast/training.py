"""Optimization loop with early stopping, evaluation, and checkpoints."""

from __future__ import annotations

import copy
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .data import DataBundle, Normalizer, WindowSet
from .metrics import MetricReport, compute_metrics, mae_loss
from .model import HypergraphForecaster, ModelConfig


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; training aborted."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 100
    patience: int = 15
    clip_norm: float = 5.0
    seed: int = 0
    num_threads: int = 1  # fixed for reproducible histories

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "num_threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0 or self.patience < 0 or self.clip_norm <= 0:
            raise ValueError("lr/patience must be >= 0 and clip_norm > 0")


@dataclass
class TrainResult:
    best_state: dict
    history: list[dict] = field(default_factory=list)
    best_val_mae: float = float("inf")
    best_epoch: int = -1
    epochs_run: int = 0


def _to_tensors(batch: dict, dtype: torch.dtype):
    x = torch.as_tensor(batch["x"], dtype=dtype)
    y = torch.as_tensor(batch["y"], dtype=dtype)
    idx = {k: torch.as_tensor(batch[k], dtype=torch.long)
           for k in ("tod_past", "dow_past", "tod_future", "dow_future")}
    return x, y, idx


def predict(model: HypergraphForecaster, windows: WindowSet,
            batch_size: int = 256) -> np.ndarray:
    """Forecasts for every window, on the model's (normalized) scale."""
    dtype = next(model.parameters()).dtype
    outputs = []
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(windows), batch_size):
            batch = windows.batch(np.arange(lo, min(lo + batch_size, len(windows))))
            x, _, idx = _to_tensors(batch, dtype)
            pred = model(x, idx["tod_past"], idx["dow_past"],
                         idx["tod_future"], idx["dow_future"])
            outputs.append(pred.numpy())
    return np.concatenate(outputs, axis=0)


def evaluate_model(model: HypergraphForecaster, windows: WindowSet,
                   normalizer: Normalizer, batch_size: int = 256,
                   per_horizon: bool = False) -> MetricReport:
    """Denormalized MAE/RMSE/MAPE of the model over a window split."""
    dtype = next(model.parameters()).dtype
    preds, targets = [], []
    model.eval()
    with torch.no_grad():
        for lo in range(0, len(windows), batch_size):
            batch = windows.batch(np.arange(lo, min(lo + batch_size, len(windows))))
            x, y, idx = _to_tensors(batch, dtype)
            pred = model(x, idx["tod_past"], idx["dow_past"],
                         idx["tod_future"], idx["dow_future"])
            preds.append(pred.numpy())
            targets.append(batch["y"])
    pred = normalizer.denormalize(np.concatenate(preds, axis=0))
    target = normalizer.denormalize(np.concatenate(targets, axis=0))
    return compute_metrics(pred, target, per_horizon=per_horizon)


def train(model: HypergraphForecaster, bundle: DataBundle,
          cfg: TrainConfig) -> TrainResult:
    """Adam on the absolute-error loss with early stopping on validation MAE.

    Histories are line-record dicts (epoch, split, mae, rmse, mape,
    wall_time); the train record's MAE is the running loss rescaled to raw
    units, the validation record carries full metrics.
    """
    torch.set_num_threads(cfg.num_threads)
    rng = np.random.default_rng(cfg.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    dtype = next(model.parameters()).dtype

    result = TrainResult(best_state=_state_copy(model))
    since_improved = 0
    started = time.perf_counter()
    for epoch in range(cfg.max_epochs):
        model.train()
        order = rng.permutation(len(bundle.train))
        loss_sum, loss_count = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = bundle.train.batch(order[lo:lo + cfg.batch_size])
            x, y, idx = _to_tensors(batch, dtype)
            optimizer.zero_grad()
            pred = model(x, idx["tod_past"], idx["dow_past"],
                         idx["tod_future"], idx["dow_future"])
            loss = mae_loss(pred, y)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"loss became non-finite at epoch {epoch}, batch {lo // cfg.batch_size}"
                )
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
            optimizer.step()
            loss_sum += loss.item() * len(batch["x"])
            loss_count += len(batch["x"])

        train_mae = loss_sum / loss_count * bundle.normalizer.std
        result.history.append({
            "epoch": epoch, "split": "train", "mae": train_mae,
            "rmse": None, "mape": None,
            "wall_time": time.perf_counter() - started,
        })
        report = evaluate_model(model, bundle.val, bundle.normalizer,
                                batch_size=max(cfg.batch_size, 256))
        result.history.append({
            "epoch": epoch, "split": "val", "mae": report.mae,
            "rmse": report.rmse, "mape": report.mape,
            "wall_time": time.perf_counter() - started,
        })
        result.epochs_run = epoch + 1

        if report.mae < result.best_val_mae:
            result.best_val_mae = report.mae
            result.best_epoch = epoch
            result.best_state = _state_copy(model)
            since_improved = 0
        else:
            since_improved += 1
            if since_improved > cfg.patience:
                break
    model.load_state_dict(result.best_state)
    return result


def _state_copy(model: torch.nn.Module) -> dict:
    return copy.deepcopy({k: v.detach().cpu() for k, v in model.state_dict().items()})


def save_checkpoint(path, model: HypergraphForecaster, normalizer: Normalizer,
                    extra: dict | None = None) -> None:
    """Atomically write parameters + config + scaling stats as one archive."""
    payload = {
        "model_state": _state_copy(model),
        "model_config": asdict(model.cfg),
        "normalizer": {"mean": normalizer.mean, "std": normalizer.std},
        "extra": extra or {},
    }
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, normalizer, extra)."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"checkpoint not found: {path}")
    payload = torch.load(path, weights_only=False)
    cfg = ModelConfig(**payload["model_config"])
    model = HypergraphForecaster(cfg)
    model.load_state_dict(payload["model_state"])
    model.eval()
    normalizer = Normalizer(**payload["normalizer"])
    return model, normalizer, payload.get("extra", {})
