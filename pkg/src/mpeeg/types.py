"""Domain types for multi-phasal EEG recordings and their phases."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

#: Protocol phases, in recording order.
PHASE_KINDS = ("rest", "articulated", "imagined", "spoken")

#: The ten analysis electrodes, in pinned order.
DEFAULT_ANALYSIS_CHANNELS = (
    "FC6", "FT8", "C5", "CP3", "P3", "T7", "CP5", "C3", "CP1", "C4",
)


@dataclass(frozen=True)
class PhaseMarker:
    """Half-open sample interval [start, end) tagged with a phase kind."""

    phase: str
    start: int
    end: int

    def __post_init__(self):
        if self.phase not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind: {self.phase!r}")
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad marker interval [{self.start}, {self.end})")


def _check_channel_names(names, num_rows):
    names = tuple(names)
    if len(names) != num_rows:
        raise ValueError(
            f"{num_rows} data rows but {len(names)} channel names"
        )
    if len(set(names)) != len(names):
        raise ValueError("channel names must be unique")
    return names


@dataclass
class RawRecording:
    """One trial: a channels-by-samples matrix plus its phase markers."""

    subject_id: str
    prompt: str
    sampling_rate: float
    channel_names: tuple[str, ...]
    samples: np.ndarray  # [num_channels, num_samples], microvolts
    phase_markers: tuple[PhaseMarker, ...]

    def __post_init__(self):
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be positive")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D [channels, samples] matrix")
        self.channel_names = _check_channel_names(
            self.channel_names, self.samples.shape[0]
        )
        self.phase_markers = tuple(self.phase_markers)
        if not self.phase_markers:
            raise ValueError("phase_markers must be non-empty")
        n = self.samples.shape[1]
        spans = sorted((m.start, m.end) for m in self.phase_markers)
        for start, end in spans:
            if end > n:
                raise ValueError(f"marker [{start}, {end}) exceeds {n} samples")
        for (_, e0), (s1, _) in zip(spans, spans[1:]):
            if s1 < e0:
                raise ValueError("phase markers overlap")

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]


@dataclass
class PhaseSegment:
    """A single phase of one trial."""

    phase_kind: str
    data: np.ndarray  # [num_channels, num_samples]
    sampling_rate: float
    subject_id: str
    prompt: str
    channel_names: tuple[str, ...]

    def __post_init__(self):
        if self.phase_kind not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind: {self.phase_kind!r}")
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be positive")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] == 0:
            raise ValueError("data must be [channels, samples] with samples > 0")
        if not np.isfinite(self.data).all():
            raise ValueError("segment contains non-finite values")
        self.channel_names = _check_channel_names(
            self.channel_names, self.data.shape[0]
        )

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        return self.data.shape[1] / self.sampling_rate

    def with_data(self, data) -> "PhaseSegment":
        return replace(self, data=data)


@dataclass(frozen=True)
class ChannelSelection:
    """Ordered list of analysis channel names."""

    channels: tuple[str, ...] = field(default=DEFAULT_ANALYSIS_CHANNELS)

    def __post_init__(self):
        channels = tuple(self.channels)
        if not channels:
            raise ValueError("channel selection must be non-empty")
        if len(set(channels)) != len(channels):
            raise ValueError("channel selection must not repeat names")
        object.__setattr__(self, "channels", channels)

    def __iter__(self):
        return iter(self.channels)

    def __len__(self):
        return len(self.channels)
