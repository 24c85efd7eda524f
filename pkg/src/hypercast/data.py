"""Traffic corpus loading, calendar indexing, windowing, and synthetic data.

Everything here is plain numpy over immutable inputs; the torch model only
sees the batches produced by :meth:`WindowSet.batch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

MINUTES_PER_DAY = 1440

DESCRIPTOR_KEYS = ("nodes", "timesteps", "period_minutes", "start", "values_path")


class CorpusFormatError(ValueError):
    """Raised when an on-disk corpus does not match its declared schema."""


@dataclass(frozen=True)
class RawCorpus:
    """A dense traffic tensor plus the calendar information needed to index it.

    ``values`` has shape (T, N, C_raw) with channel 0 holding the traffic
    reading that is forecast downstream.  ``node_groups`` is populated by the
    synthetic generator only and carries the ground-truth pattern group of
    each node for test oracles.
    """

    values: np.ndarray
    start: datetime
    period_minutes: int = 5
    node_groups: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 2:
            values = values[:, :, np.newaxis]
        if values.ndim != 3 or values.shape[0] == 0 or values.shape[1] == 0:
            raise CorpusFormatError(
                f"expected a non-empty (T, N) or (T, N, C) tensor, got shape {np.shape(self.values)}"
            )
        if self.period_minutes <= 0 or MINUTES_PER_DAY % self.period_minutes != 0:
            raise CorpusFormatError(
                f"sample period {self.period_minutes} min must divide {MINUTES_PER_DAY}"
            )
        if not np.isfinite(values).all():
            raise CorpusFormatError("corpus contains NaN/Inf after load")
        object.__setattr__(self, "values", values)

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_nodes(self) -> int:
        return self.values.shape[1]

    @property
    def slots_per_day(self) -> int:
        return MINUTES_PER_DAY // self.period_minutes


@dataclass(frozen=True)
class TimeIndices:
    """Per-step time-of-day slot and day-of-week index."""

    tod: np.ndarray
    dow: np.ndarray
    slots_per_day: int


@dataclass(frozen=True)
class TrafficWindow:
    """One training sample: an L-step history block and an H-step target block.

    ``x`` is (L, N, 3): channel 0 the (possibly normalized) reading, channel 1
    tod/slots_per_day, channel 2 dow/7.  ``y`` is (H, N) on the same scale as
    channel 0.
    """

    x: np.ndarray
    y: np.ndarray
    tod_past: np.ndarray
    dow_past: np.ndarray
    tod_future: np.ndarray
    dow_future: np.ndarray


@dataclass(frozen=True)
class Normalizer:
    """Z-score transform fitted on the training split of channel 0."""

    mean: float
    std: float

    def __post_init__(self):
        if not (self.std > 0):
            raise ValueError("zero variance in training data; cannot normalize")

    def normalize(self, values):
        return (np.asarray(values) - self.mean) / self.std

    def denormalize(self, values):
        return np.asarray(values) * self.std + self.mean


class WindowSet:
    """Chronological stride-1 windows over a series, materialized on demand.

    Holds the full (T, N) channel-0 series plus the calendar indices; each
    window is a view-backed slice, so splits share storage with the parent.
    """

    def __init__(self, series, tod, dow, slots_per_day, input_len, horizon, starts):
        self.series = series
        self.tod = tod
        self.dow = dow
        self.slots_per_day = slots_per_day
        self.input_len = input_len
        self.horizon = horizon
        self.starts = np.asarray(starts, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.starts)

    def __getitem__(self, i: int) -> TrafficWindow:
        b = self.batch([i])
        return TrafficWindow(
            x=b["x"][0],
            y=b["y"][0],
            tod_past=b["tod_past"][0],
            dow_past=b["dow_past"][0],
            tod_future=b["tod_future"][0],
            dow_future=b["dow_future"][0],
        )

    def batch(self, positions) -> dict[str, np.ndarray]:
        """Stack the windows at the given positions into dense arrays."""
        starts = self.starts[np.asarray(positions, dtype=np.int64)]
        L, H = self.input_len, self.horizon
        past = starts[:, None] + np.arange(L)[None, :]
        future = starts[:, None] + L + np.arange(H)[None, :]
        x0 = self.series[past]  # (B, L, N)
        tod_p, dow_p = self.tod[past], self.dow[past]
        x = np.empty(x0.shape + (3,), dtype=np.float32)
        x[..., 0] = x0
        x[..., 1] = (tod_p / self.slots_per_day)[..., None]
        x[..., 2] = (dow_p / 7.0)[..., None]
        return {
            "x": x,
            "y": self.series[future].astype(np.float32),
            "tod_past": tod_p,
            "dow_past": dow_p,
            "tod_future": self.tod[future],
            "dow_future": self.dow[future],
        }

    def take(self, lo: int, hi: int) -> "WindowSet":
        """Sub-range of windows (by position), sharing the backing arrays."""
        return WindowSet(
            self.series, self.tod, self.dow, self.slots_per_day,
            self.input_len, self.horizon, self.starts[lo:hi],
        )

    def with_series(self, series) -> "WindowSet":
        return WindowSet(
            series, self.tod, self.dow, self.slots_per_day,
            self.input_len, self.horizon, self.starts,
        )

    @property
    def input_coverage_end(self) -> int:
        """One past the last raw step visible in any history block."""
        return int(self.starts.max()) + self.input_len if len(self) else 0


def read_descriptor(path) -> dict:
    """Parse a key=value dataset descriptor file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"descriptor not found: {path}")
    entries = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CorpusFormatError(f"malformed descriptor line: {line!r}")
        key, value = line.split("=", 1)
        entries[key.strip()] = value.strip()
    missing = [k for k in DESCRIPTOR_KEYS if k not in entries]
    if missing:
        raise CorpusFormatError(f"descriptor missing keys: {', '.join(missing)}")
    return entries


def _load_values(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"values file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".npy":
        return np.load(path)
    if suffix == ".npz":
        archive = np.load(path)
        key = "data" if "data" in archive else archive.files[0]
        return archive[key]
    if suffix == ".csv":
        return np.loadtxt(path, delimiter=",", ndmin=2)
    raise CorpusFormatError(f"unsupported values format: {path.suffix}")


def _repair_gaps(values: np.ndarray, max_fraction: float) -> np.ndarray:
    """Linearly interpolate isolated gaps along time, per node and channel."""
    if values.size == 0:
        return values
    bad = ~np.isfinite(values)
    fraction = bad.mean()
    if fraction == 0:
        return values
    if fraction >= max_fraction:
        raise CorpusFormatError(
            f"non-finite fraction {fraction:.3%} exceeds threshold {max_fraction:.3%}"
        )
    repaired = values.copy()
    steps = np.arange(values.shape[0])
    for n in range(values.shape[1]):
        for c in range(values.shape[2]):
            col_bad = bad[:, n, c]
            if not col_bad.any():
                continue
            good = ~col_bad
            if not good.any():
                raise CorpusFormatError(f"node {n} channel {c} has no valid samples")
            repaired[col_bad, n, c] = np.interp(
                steps[col_bad], steps[good], values[good, n, c]
            )
    return repaired


def load_corpus(descriptor_path, nan_threshold: float = 0.05) -> RawCorpus:
    """Load a corpus from a descriptor file, validating the declared schema."""
    descriptor_path = Path(descriptor_path)
    entries = read_descriptor(descriptor_path)
    try:
        nodes = int(entries["nodes"])
        timesteps = int(entries["timesteps"])
        period = int(entries["period_minutes"])
        start = datetime.fromisoformat(entries["start"])
    except ValueError as exc:
        raise CorpusFormatError(f"bad descriptor value: {exc}") from exc

    values_path = Path(entries["values_path"])
    if not values_path.is_absolute():
        values_path = descriptor_path.parent / values_path
    values = np.asarray(_load_values(values_path), dtype=np.float64)
    if values.ndim == 2:
        values = values[:, :, np.newaxis]
    if values.ndim != 3 or values.shape[0] != timesteps or values.shape[1] != nodes:
        raise CorpusFormatError(
            f"values shape {values.shape} does not match descriptor "
            f"(timesteps={timesteps}, nodes={nodes})"
        )
    values = _repair_gaps(values, nan_threshold)

    groups = None
    groups_path = descriptor_path.parent / "groups.csv"
    if groups_path.exists():
        groups = np.loadtxt(groups_path, delimiter=",", dtype=np.int64, ndmin=1)
    return RawCorpus(values=values, start=start, period_minutes=period, node_groups=groups)


def write_corpus(corpus: RawCorpus, out_dir, name: str = "data") -> Path:
    """Write values + descriptor (and group labels, if any); returns descriptor path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values_name = f"{name}_values.npy"
    np.save(out_dir / values_name, corpus.values)
    descriptor = out_dir / f"{name}.descriptor"
    descriptor.write_text(
        "\n".join(
            [
                f"nodes={corpus.num_nodes}",
                f"timesteps={corpus.num_steps}",
                f"period_minutes={corpus.period_minutes}",
                f"start={corpus.start.isoformat()}",
                f"values_path={values_name}",
            ]
        )
        + "\n"
    )
    if corpus.node_groups is not None:
        np.savetxt(out_dir / "groups.csv", corpus.node_groups, fmt="%d", delimiter=",")
    return descriptor


def compute_time_indices(corpus: RawCorpus) -> TimeIndices:
    """Slot-of-day and day-of-week indices for every sample step."""
    spd = corpus.slots_per_day
    start = corpus.start
    midnight_minutes = start.hour * 60 + start.minute
    if start.second or start.microsecond or midnight_minutes % corpus.period_minutes:
        raise ValueError(
            f"start {start.isoformat()} is not aligned to the {corpus.period_minutes}-minute grid"
        )
    start_slot = midnight_minutes // corpus.period_minutes
    total = start_slot + np.arange(corpus.num_steps, dtype=np.int64)
    tod = total % spd
    dow = (start.weekday() + total // spd) % 7
    return TimeIndices(tod=tod, dow=dow, slots_per_day=spd)


def make_windows(corpus: RawCorpus, indices: TimeIndices, input_len: int, horizon: int,
                 channel: int = 0) -> WindowSet:
    """All stride-1 windows of ``input_len`` history and ``horizon`` targets."""
    if input_len < 1 or horizon < 1:
        raise ValueError("input_len and horizon must be positive")
    total = corpus.num_steps
    if total < input_len + horizon:
        raise ValueError(
            f"need at least {input_len + horizon} steps for one window, have {total}"
        )
    starts = np.arange(total - input_len - horizon + 1, dtype=np.int64)
    series = np.ascontiguousarray(corpus.values[:, :, channel])
    return WindowSet(series, indices.tod, indices.dow, indices.slots_per_day,
                     input_len, horizon, starts)


def split_windows(windows: WindowSet, ratios=(6, 2, 2)):
    """Chronological train/val/test partition of window start positions."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    total = len(windows)
    denom = sum(ratios)
    n_train = math.floor(total * ratios[0] / denom)
    n_val = math.floor(total * ratios[1] / denom)
    return (
        windows.take(0, n_train),
        windows.take(n_train, n_train + n_val),
        windows.take(n_train + n_val, total),
    )


def fit_normalizer(train: WindowSet) -> Normalizer:
    """Mean/std over the channel-0 history blocks of the training windows."""
    if len(train) == 0:
        raise ValueError("training split is empty")
    blocks = np.lib.stride_tricks.sliding_window_view(
        train.series, train.input_len, axis=0
    )[train.starts]
    mean = float(blocks.mean())
    std = float(blocks.std())
    if std < 1e-12:
        raise ValueError("zero variance in training data; cannot normalize")
    return Normalizer(mean=mean, std=std)


def normalize_windows(windows: WindowSet, normalizer: Normalizer) -> WindowSet:
    """Windows over the z-scored series (affects channel 0 and the targets)."""
    return windows.with_series(normalizer.normalize(windows.series))


@dataclass(frozen=True)
class PatternSpec:
    """Shape of the synthetic corpus.

    Each group follows one phase-shifted daily sinusoid, optionally modulated
    weekly, plus a slowly-decaying random drift shared by the whole group
    (``group_drift_std``/``drift_persistence``) and per-node noise.  The
    shared drift is what makes pooling pattern-similar nodes genuinely useful:
    a node's own reading estimates the group state with full noise, the group
    average with a fraction of it.
    """

    num_groups: int = 2
    base_level: float = 300.0
    daily_amplitude: float = 120.0
    weekly_amplitude: float = 0.2
    noise_std: float = 8.0
    group_drift_std: float = 0.0
    drift_persistence: float = 0.97
    amplitude_jitter: float = 0.05
    offset_jitter: float = 5.0
    start: datetime = datetime(2024, 1, 1)  # a Monday at 00:00
    period_minutes: int = 30


def generate_synthetic(num_nodes: int, num_steps: int, seed: int,
                       spec: PatternSpec = PatternSpec()) -> RawCorpus:
    """Deterministic toy corpus of pattern groups sharing periodic profiles.

    Nodes are partitioned into ``spec.num_groups`` contiguous groups; each
    group follows one phase-shifted daily sinusoid, so in-group series are
    near-duplicates up to noise while cross-group series diverge.  The phase
    argument is computed from the slot index modulo slots-per-day, which makes
    noise-free output exactly periodic.
    """
    if num_nodes < 1 or num_steps < 1:
        raise ValueError("num_nodes and num_steps must be positive")
    if spec.num_groups < 1 or spec.num_groups > num_nodes:
        raise ValueError("num_groups must be in [1, num_nodes]")
    rng = np.random.default_rng(seed)
    spd = MINUTES_PER_DAY // spec.period_minutes
    groups = (np.arange(num_nodes) * spec.num_groups) // num_nodes

    start_slot = (spec.start.hour * 60 + spec.start.minute) // spec.period_minutes
    slot = (start_slot + np.arange(num_steps, dtype=np.int64)) % spd
    day_phase = 2.0 * np.pi * slot / spd  # exact repetition every spd steps
    week_slot = (spec.start.weekday() * spd + start_slot + np.arange(num_steps)) % (7 * spd)

    amplitude = spec.daily_amplitude * (
        1.0 + spec.amplitude_jitter * rng.uniform(-1.0, 1.0, size=num_nodes)
    )
    offset = spec.offset_jitter * rng.uniform(-1.0, 1.0, size=num_nodes)
    group_phase = 2.0 * np.pi * groups / spec.num_groups

    weekly = 1.0 + spec.weekly_amplitude * np.sin(2.0 * np.pi * week_slot / (7 * spd))
    series = spec.base_level + offset[None, :] + (
        amplitude[None, :] * np.sin(day_phase[:, None] + group_phase[None, :])
        * weekly[:, None]
    )
    if spec.group_drift_std > 0:
        rho = spec.drift_persistence
        innovation = spec.group_drift_std * math.sqrt(1.0 - rho * rho)
        drift = np.zeros((num_steps, spec.num_groups))
        shocks = rng.standard_normal((num_steps, spec.num_groups))
        drift[0] = spec.group_drift_std * shocks[0]
        for t in range(1, num_steps):
            drift[t] = rho * drift[t - 1] + innovation * shocks[t]
        series = series + drift[:, groups]
    if spec.noise_std > 0:
        series = series + spec.noise_std * rng.standard_normal((num_steps, num_nodes))
    return RawCorpus(
        values=series[:, :, np.newaxis],
        start=spec.start,
        period_minutes=spec.period_minutes,
        node_groups=groups,
    )


@dataclass
class DataBundle:
    """Prepared splits (normalized) plus everything needed to undo the scaling."""

    train: WindowSet
    val: WindowSet
    test: WindowSet
    normalizer: Normalizer
    raw_series: np.ndarray
    tod: np.ndarray
    dow: np.ndarray
    slots_per_day: int
    input_len: int
    horizon: int

    @property
    def num_nodes(self) -> int:
        return self.raw_series.shape[1]


def prepare(corpus: RawCorpus, input_len: int = 12, horizon: int = 12,
            ratios=(6, 2, 2)) -> DataBundle:
    """Window, split 6:2:2 chronologically, and z-score from the train split."""
    indices = compute_time_indices(corpus)
    windows = make_windows(corpus, indices, input_len, horizon)
    train, val, test = split_windows(windows, ratios)
    normalizer = fit_normalizer(train)
    return DataBundle(
        train=normalize_windows(train, normalizer),
        val=normalize_windows(val, normalizer),
        test=normalize_windows(test, normalizer),
        normalizer=normalizer,
        raw_series=windows.series,
        tod=indices.tod,
        dow=indices.dow,
        slots_per_day=indices.slots_per_day,
        input_len=input_len,
        horizon=horizon,
    )
