"""Naive forecasters used as sanity floors for the trained model."""

from __future__ import annotations

import numpy as np

from .data import DataBundle, WindowSet


def _targets(bundle: DataBundle, windows: WindowSet) -> np.ndarray:
    starts = windows.starts
    future = starts[:, None] + windows.input_len + np.arange(windows.horizon)[None, :]
    return bundle.raw_series[future]  # (W, H, N)


def last_value_forecast(bundle: DataBundle, windows: WindowSet):
    """Copy the last observed raw value across the whole horizon."""
    last = bundle.raw_series[windows.starts + windows.input_len - 1]  # (W, N)
    pred = np.repeat(last[:, None, :], windows.horizon, axis=1)
    return pred, _targets(bundle, windows)


def tod_average_forecast(bundle: DataBundle, windows: WindowSet):
    """Predict each node's historical average at the target's time-of-day slot.

    The profile is computed from the raw steps visible to the training split's
    history blocks only, so no future information leaks in.  Slots never seen
    in training fall back to the per-node training mean.
    """
    coverage = bundle.train.input_coverage_end
    spd = bundle.slots_per_day
    num_nodes = bundle.num_nodes
    sums = np.zeros((spd, num_nodes))
    counts = np.zeros(spd)
    for t in range(coverage):
        sums[bundle.tod[t]] += bundle.raw_series[t]
        counts[bundle.tod[t]] += 1
    fallback = bundle.raw_series[:coverage].mean(axis=0)
    profile = np.where(counts[:, None] > 0, sums / np.maximum(counts[:, None], 1), fallback)

    starts = windows.starts
    future = starts[:, None] + windows.input_len + np.arange(windows.horizon)[None, :]
    pred = profile[bundle.tod[future]]  # (W, H, N)
    return pred, _targets(bundle, windows)
