"""Windowed statistical features with delta and delta-delta appendages.

Windows cover 0.1x the segment length with 50% overlap.  Each window yields
21 statistics (order pinned in ``FEATURE_NAMES``); first and second
derivatives along the window axis extend them to 63 dimensions per window.
A trial contributes 11 training instances: one per analysis channel plus the
across-channel average of the extracted features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import (
    InsufficientDataError,
    InstanceNotFoundError,
    SegmentTooShortError,
)
from .types import PhaseSegment

#: Normative ordered feature list; changing it invalidates every cache.
FEATURE_NAMES = (
    "mean",
    "abs_mean",
    "median",
    "std",
    "var",
    "max",
    "min",
    "max_plus_min",
    "max_minus_min",
    "sum",
    "abs_sum",
    "energy",
    "rms",
    "skewness",
    "excess_kurtosis",
    "zero_crossings",
    "spectral_entropy",
    "spectral_centroid",
    "band_power_fraction",
    "linear_slope",
    "iqr",
)
FEATURE_LIST_VERSION = "v1"

NUM_BASE_FEATURES = len(FEATURE_NAMES)  # 21
NUM_FEATURES = 3 * NUM_BASE_FEATURES  # 63 with deltas
SPLICE_FRAMES = 3
SPLICED_DIM = SPLICE_FRAMES * NUM_FEATURES  # 189

CHANNEL_AVERAGE = "channel-average"

_STD_EPS = 1e-12  # below this, skewness/kurtosis are defined as 0
_POWER_EPS = 1e-15  # below this, spectral measures are defined as 0
_NORM_STD_FLOOR = 1e-8


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class WindowPlan:
    window_len: int
    hop: int
    num_windows: int


def plan_windows(segment_len: int) -> WindowPlan:
    """Window/hop arithmetic for a segment of ``segment_len`` samples."""
    if segment_len < 20:
        raise SegmentTooShortError(
            f"segment of {segment_len} samples is too short to window"
        )
    window_len = _round_half_up(0.1 * segment_len)
    hop = _round_half_up(0.5 * window_len)
    num_windows = (segment_len - window_len) // hop + 1
    return WindowPlan(window_len, hop, num_windows)


def _stat_matrix(windows: np.ndarray, sampling_rate: float) -> np.ndarray:
    """21 statistics for each row of ``windows`` ([n, w] -> [n, 21])."""
    x = np.asarray(windows, dtype=np.float64)
    n, w = x.shape
    out = np.empty((n, NUM_BASE_FEATURES), dtype=np.float64)

    mean = x.mean(axis=1)
    var = x.var(axis=1)  # population
    std = np.sqrt(var)
    mx = x.max(axis=1)
    mn = x.min(axis=1)
    total = x.sum(axis=1)
    energy = (x * x).sum(axis=1)

    out[:, 0] = mean
    out[:, 1] = np.abs(x).mean(axis=1)
    out[:, 2] = np.median(x, axis=1)
    out[:, 3] = std
    out[:, 4] = var
    out[:, 5] = mx
    out[:, 6] = mn
    out[:, 7] = mx + mn
    out[:, 8] = mx - mn
    out[:, 9] = total
    out[:, 10] = np.abs(x).sum(axis=1)
    out[:, 11] = energy
    out[:, 12] = np.sqrt(energy / w)

    centered = x - mean[:, None]
    m3 = (centered**3).mean(axis=1)
    m4 = (centered**4).mean(axis=1)
    spread_ok = std > _STD_EPS
    safe_var = np.where(spread_ok, var, 1.0)
    out[:, 13] = np.where(spread_ok, m3 / safe_var**1.5, 0.0)
    out[:, 14] = np.where(spread_ok, m4 / safe_var**2 - 3.0, 0.0)

    out[:, 15] = np.count_nonzero(x[:, :-1] * x[:, 1:] < 0, axis=1)

    # periodogram without taper; the DC bin is excluded so constant offsets
    # do not leak into the spectral measures
    power = np.abs(np.fft.rfft(x, axis=1)) ** 2
    power = power[:, 1:]
    freqs = np.fft.rfftfreq(w, d=1.0 / sampling_rate)[1:]
    total_power = power.sum(axis=1)
    power_ok = total_power > _POWER_EPS
    safe_total = np.where(power_ok, total_power, 1.0)
    p = power / safe_total[:, None]
    num_bins = power.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    log_bins = math.log(num_bins) if num_bins > 1 else 1.0
    out[:, 16] = np.where(power_ok, -plogp.sum(axis=1) / log_bins, 0.0)
    out[:, 17] = np.where(power_ok, p @ freqs, 0.0)

    narrow = (freqs >= 1.0) & (freqs <= 30.0)
    wide = (freqs >= 1.0) & (freqs <= 50.0)
    wide_power = power[:, wide].sum(axis=1)
    wide_ok = wide_power > _POWER_EPS
    out[:, 18] = np.where(
        wide_ok,
        power[:, narrow].sum(axis=1) / np.where(wide_ok, wide_power, 1.0),
        0.0,
    )

    idx = np.arange(w, dtype=np.float64)
    idx_centered = idx - idx.mean()
    out[:, 19] = (x @ idx_centered) / (idx_centered @ idx_centered)

    q75, q25 = np.percentile(x, [75, 25], axis=1)
    out[:, 20] = q75 - q25
    return out


def window_stats(window, sampling_rate: float) -> np.ndarray:
    """The 21 statistics of a single window, in ``FEATURE_NAMES`` order."""
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1 or window.size < 2:
        raise ValueError("window must be a 1-D vector of length >= 2")
    if not np.isfinite(window).all():
        raise ValueError("window contains non-finite values")
    return _stat_matrix(window[None, :], sampling_rate)[0]


def _delta(seq: np.ndarray) -> np.ndarray:
    """Central difference with edge replication along axis 0."""
    padded = np.concatenate([seq[:1], seq, seq[-1:]], axis=0)
    return (padded[2:] - padded[:-2]) / 2.0


def add_derivatives(stat_seq: np.ndarray) -> np.ndarray:
    """Append delta and delta-delta columns ([T, 21] -> [T, 63])."""
    stat_seq = np.asarray(stat_seq, dtype=np.float64)
    if stat_seq.ndim != 2 or stat_seq.shape[0] < 1:
        raise ValueError("expected a [num_windows, num_features] matrix")
    d1 = _delta(stat_seq)
    d2 = _delta(d1)
    return np.concatenate([stat_seq, d1, d2], axis=1)


@dataclass
class PrimaryFeatureTensor:
    """Per-channel windowed features: [num_channels, 63, num_windows]."""

    values: np.ndarray
    channel_names: tuple[str, ...]
    phase_kind: str
    subject_id: str
    prompt: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[1] != NUM_FEATURES:
            raise ValueError(
                f"values must be [channels, {NUM_FEATURES}, windows]"
            )
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != self.values.shape[0]:
            raise ValueError("channel_names must match the channel axis")
        if not np.isfinite(self.values).all():
            raise ValueError("feature tensor contains non-finite values")

    @property
    def num_windows(self) -> int:
        return self.values.shape[2]


def build_primary(seg: PhaseSegment) -> PrimaryFeatureTensor:
    """Windowed 63-dim features for every channel of a segment."""
    plan = plan_windows(seg.num_samples)
    starts = np.arange(plan.num_windows) * plan.hop
    channels = []
    for row in seg.data:
        windows = np.stack([row[s:s + plan.window_len] for s in starts])
        stats = _stat_matrix(windows, seg.sampling_rate)
        channels.append(add_derivatives(stats).T)  # [63, T]
    return PrimaryFeatureTensor(
        values=np.stack(channels),
        channel_names=seg.channel_names,
        phase_kind=seg.phase_kind,
        subject_id=seg.subject_id,
        prompt=seg.prompt,
    )


def channel_average(t: PrimaryFeatureTensor) -> PrimaryFeatureTensor:
    """Across-channel mean of the extracted features (one instance)."""
    return PrimaryFeatureTensor(
        values=t.values.mean(axis=0, keepdims=True),
        channel_names=(CHANNEL_AVERAGE,),
        phase_kind=t.phase_kind,
        subject_id=t.subject_id,
        prompt=t.prompt,
    )


@dataclass
class SplicedFrameSequence:
    """Per-instance frame sequence with 3-frame context: [T, 189]."""

    frames: np.ndarray
    instance_id: str

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != SPLICED_DIM:
            raise ValueError(f"frames must be [T, {SPLICED_DIM}]")
        if self.frames.shape[0] < 1:
            raise ValueError("frame sequence must be non-empty")

    def __len__(self):
        return self.frames.shape[0]


def splice_frames(frames: np.ndarray) -> np.ndarray:
    """[T, d] -> [T, 3d]; row t is [f(t-1) | f(t) | f(t+1)], edges replicated."""
    frames = np.asarray(frames, dtype=np.float64)
    prev = np.concatenate([frames[:1], frames[:-1]], axis=0)
    nxt = np.concatenate([frames[1:], frames[-1:]], axis=0)
    return np.concatenate([prev, frames, nxt], axis=1)


def splice(t: PrimaryFeatureTensor, channel: str) -> SplicedFrameSequence:
    """Spliced frame sequence for one instance (a channel or the average)."""
    if channel == CHANNEL_AVERAGE:
        if t.channel_names == (CHANNEL_AVERAGE,):
            frames = t.values[0].T
        else:
            frames = channel_average(t).values[0].T
    elif channel in t.channel_names:
        frames = t.values[t.channel_names.index(channel)].T
    else:
        raise InstanceNotFoundError(channel)
    return SplicedFrameSequence(splice_frames(frames), instance_id=channel)


@dataclass
class NormalizationStats:
    """Per-dimension mean and clamped standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean/std must be 1-D and of equal length")
        if (self.std < _NORM_STD_FLOOR).any():
            raise ValueError(f"std must be clamped at {_NORM_STD_FLOOR}")


def _as_frame_matrix(frames) -> np.ndarray:
    if isinstance(frames, SplicedFrameSequence):
        return frames.frames
    return np.asarray(frames, dtype=np.float64)


def fit_normalization(train_frames) -> NormalizationStats:
    """Mean/variance statistics over every frame of the training set."""
    mats = [_as_frame_matrix(f) for f in train_frames]
    if not mats:
        raise InsufficientDataError("no training frames")
    stacked = np.concatenate(mats, axis=0)
    if stacked.shape[0] < 2:
        raise InsufficientDataError("need at least 2 training frames")
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), _NORM_STD_FLOOR)
    return NormalizationStats(mean=mean, std=std)


def apply_normalization(stats: NormalizationStats, frames):
    """Normalize a frame matrix or sequence with previously fit stats."""
    if isinstance(frames, SplicedFrameSequence):
        scaled = (frames.frames - stats.mean) / stats.std
        return SplicedFrameSequence(scaled, instance_id=frames.instance_id)
    return (_as_frame_matrix(frames) - stats.mean) / stats.std


def invert_normalization(stats: NormalizationStats, frames):
    return _as_frame_matrix(frames) * stats.std + stats.mean


class FrameNormalizer(BaseEstimator, TransformerMixin):
    """Mean/variance scaler over frame collections (std clamped at 1e-8)."""

    def fit(self, X, y=None):
        self.stats_ = fit_normalization(X)
        return self

    def transform(self, X):
        return [apply_normalization(self.stats_, f) for f in X]


class PrimaryFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer: PhaseSegment -> PrimaryFeatureTensor."""

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return [build_primary(seg) for seg in X]


def instance_ids(channel_names) -> tuple[str, ...]:
    """The 11 per-trial instance ids: channels then the channel average."""
    return tuple(channel_names) + (CHANNEL_AVERAGE,)


def instance_tensor(t: PrimaryFeatureTensor) -> np.ndarray:
    """Stack the 10 channels and their average: [11, 63, W]."""
    return np.concatenate([t.values, channel_average(t).values], axis=0)
