"""Preprocessing chain: band-pass filtering, mean removal, channel selection.

The filter is a 4th-order Butterworth band-pass applied forward-backward
(zero phase).  Edges are mirror-padded over three filter orders and the
filter state is initialised to steady state from the padded edge value,
which suppresses start-up transients.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from scipy import signal

from .errors import ChannelNotFoundError, SegmentTooShortError
from .types import ChannelSelection, PhaseSegment, RawRecording

FILTER_ORDER = 4  # per band edge; the band-pass transfer function has 2x poles


def design_bandpass(low_hz: float, high_hz: float, sampling_rate: float):
    """Second-order sections for the band-pass used throughout the repo."""
    nyquist = sampling_rate / 2.0
    if not (0.0 < low_hz < high_hz < nyquist):
        raise ValueError(
            f"band edges must satisfy 0 < low < high < {nyquist} Hz, "
            f"got ({low_hz}, {high_hz})"
        )
    return signal.butter(
        FILTER_ORDER,
        [low_hz / nyquist, high_hz / nyquist],
        btype="band",
        output="sos",
    )


def _pad_length() -> int:
    # three times the effective filter order (2 * FILTER_ORDER poles)
    return 3 * 2 * FILTER_ORDER


def bandpass_filter(
    seg: PhaseSegment, low_hz: float = 1.0, high_hz: float = 50.0
) -> PhaseSegment:
    """Zero-phase band-pass of every channel; shape is preserved."""
    sos = design_bandpass(low_hz, high_hz, seg.sampling_rate)
    padlen = _pad_length()
    if seg.num_samples <= 3 * padlen:
        raise SegmentTooShortError(
            f"segment of {seg.num_samples} samples is too short to pad "
            f"({3 * padlen} required)"
        )
    filtered = signal.sosfiltfilt(
        sos, seg.data, axis=1, padtype="even", padlen=padlen
    )
    return seg.with_data(filtered)


def mean_remove(seg: PhaseSegment) -> PhaseSegment:
    """Subtract each channel's sample mean."""
    return seg.with_data(seg.data - seg.data.mean(axis=1, keepdims=True))


def select_channels(seg: PhaseSegment, sel: ChannelSelection) -> PhaseSegment:
    """Reorder/restrict channels to the selection, preserving row data."""
    from dataclasses import replace

    index = {name: i for i, name in enumerate(seg.channel_names)}
    rows = []
    for name in sel:
        if name not in index:
            raise ChannelNotFoundError(name)
        rows.append(index[name])
    return replace(seg, data=seg.data[rows].copy(), channel_names=tuple(sel))


def slice_phases(rec: RawRecording) -> list[PhaseSegment]:
    """One PhaseSegment per marker, in marker order, metadata copied."""
    segments = []
    for marker in rec.phase_markers:
        segments.append(
            PhaseSegment(
                phase_kind=marker.phase,
                data=rec.samples[:, marker.start:marker.end].copy(),
                sampling_rate=rec.sampling_rate,
                subject_id=rec.subject_id,
                prompt=rec.prompt,
                channel_names=rec.channel_names,
            )
        )
    return segments


def preprocess_segment(
    seg: PhaseSegment,
    low_hz: float = 1.0,
    high_hz: float = 50.0,
    selection: ChannelSelection | None = None,
) -> PhaseSegment:
    """Filter, remove means, then select channels (pinned chain order)."""
    out = bandpass_filter(seg, low_hz, high_hz)
    out = mean_remove(out)
    if selection is not None:
        out = select_channels(out, selection)
    return out


class EegPreprocessor(BaseEstimator, TransformerMixin):
    """Stateless transformer applying the preprocessing chain to segments.

    ``transform`` accepts a list of :class:`PhaseSegment` and returns the
    processed list; ``fit`` is a no-op kept for pipeline compatibility.
    """

    def __init__(self, low_hz=1.0, high_hz=50.0, channels=None):
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.channels = channels

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        selection = None
        if self.channels is not None:
            selection = ChannelSelection(tuple(self.channels))
        return [
            preprocess_segment(seg, self.low_hz, self.high_hz, selection)
            for seg in X
        ]
