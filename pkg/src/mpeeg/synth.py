"""Deterministic synthetic multi-phasal corpus with a shared latent process.

Every trial draws a class-conditioned latent trajectory: a bank of
band-limited (1-30 Hz) oscillations whose frequencies, amplitudes and
amplitude slopes are class prototypes.  A fraction ``cross_phase_coupling``
of each latent's variance is shared between the analysis phase and the
support phases; the remainder is an independent realisation of the same
class-conditional process.  Phase-specific mixing matrices (optionally with
per-subject perturbations) map latents to the 10 analysis channels, activity
occupies the central 70% of each segment, and white sensor noise is added
everywhere.  Everything derives from the corpus seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .types import (
    DEFAULT_ANALYSIS_CHANNELS,
    PhaseMarker,
    RawRecording,
)

#: Prompt labels of the 11-unit setup (4 words plus 7 syllabic prompts).
PROMPTS_11 = (
    "pat", "pot", "knew", "gnaw",
    "iy", "uw", "piy", "tiy", "diy", "m", "n",
)

BINARY_PROMPTS = ("pat", "iy")

ACTIVITY_PHASES = ("articulated", "imagined", "spoken")

_FREQ_LOW = 4.0
_FREQ_HIGH = 28.0


@dataclass
class SynthConfig:
    num_subjects: int = 8
    trials_per_class: int = 6
    class_set: str = "binary"  # "binary" | "units11"
    sampling_rate: float = 1000.0
    segment_seconds: float = 5.0
    rest_seconds: float = 1.0
    spoken_seconds_range: tuple[float, float] = (3.0, 4.5)
    latent_dim: int = 6
    noise_sigma: float = 1.0
    cross_phase_coupling: float = 0.8  # rho
    subject_scale: float = 0.15
    class_separation: float = 1.0
    # per-trial, per-phase global amplitude state (log-uniform range);
    # phase-private, so cross-phase modelling can suppress it
    gain_range: tuple[float, float] = (0.7, 1.4)
    # per-trial multiplicative spread of the latent amplitudes
    amplitude_jitter: float = 0.05
    # per-trial, per-phase shift of the activity centre (fraction of the
    # segment); keeps the activity-timing trajectory from being a perfectly
    # shared factor between phases
    onset_jitter: float = 0.05
    shared_mixing: bool = False
    lag_spoken: int = 40        # samples
    lag_articulated: int = 80   # samples
    activity_fraction: float = 0.70
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.cross_phase_coupling <= 1.0:
            raise ValueError("cross_phase_coupling must lie in [0, 1]")
        if self.noise_sigma <= 0:
            raise ValueError("noise_sigma must be positive")
        if self.class_set not in ("binary", "units11"):
            raise ValueError(f"unknown class_set: {self.class_set!r}")
        if self.num_subjects < 1 or self.trials_per_class < 1:
            raise ValueError("num_subjects and trials_per_class must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if not 0.0 <= self.class_separation <= 1.0:
            raise ValueError("class_separation must lie in [0, 1]")
        if not 0.0 < self.activity_fraction <= 1.0:
            raise ValueError("activity_fraction must lie in (0, 1]")
        lo, hi = self.gain_range
        if not 0.0 < lo <= hi:
            raise ValueError("gain_range must satisfy 0 < lo <= hi")

    @property
    def prompts(self) -> tuple[str, ...]:
        return BINARY_PROMPTS if self.class_set == "binary" else PROMPTS_11

    @property
    def subjects(self) -> tuple[str, ...]:
        return tuple(f"S{i + 1:02d}" for i in range(self.num_subjects))


@dataclass
class ClassPrototypes:
    """Ground-truth latent parameters, one row per class."""

    frequencies: np.ndarray  # [C, L] Hz
    amplitudes: np.ndarray   # [C, L]
    slopes: np.ndarray       # [C, L] relative amplitude ramp over the segment


def class_prototypes(cfg: SynthConfig) -> ClassPrototypes:
    """Interleaved frequency slots plus cosine amplitude/slope patterns.

    ``class_separation`` blends every class toward the across-class mean;
    zero separation makes all prototypes identical.
    """
    c = len(cfg.prompts)
    l = cfg.latent_dim
    # blocked frequency bands: each class occupies its own stretch of the
    # 4-28 Hz range, so spectral location features separate the classes
    slots = np.arange(c)[:, None] * l + np.arange(l)[None, :]  # [C, L]
    span = max(l * c - 1, 1)
    freqs = _FREQ_LOW + (_FREQ_HIGH - _FREQ_LOW) * slots / span  # [C, L]
    # orthogonal cosine patterns: each class excites the latent bank with a
    # distinct energy profile (amps) and a distinct temporal ramp (slopes),
    # so both the spatial pattern and the trajectory carry the class
    ks = np.arange(1, c + 1)[:, None]
    ls = np.arange(l)[None, :]
    amps = 1.0 + 0.9 * np.cos(np.pi * (2 * ls + 1) * ks / (2 * l))
    slopes = 0.8 * np.cos(np.pi * (2 * ls + 1) * (ks + 1) / (2 * l))

    sep = cfg.class_separation

    def blend(arr):
        mean = arr.mean(axis=0, keepdims=True)
        return mean + sep * (arr - mean)

    return ClassPrototypes(
        frequencies=blend(freqs), amplitudes=blend(amps), slopes=blend(slopes)
    )


def background_prototype(cfg: SynthConfig) -> ClassPrototypes:
    """Class-neutral oscillation bank driving the non-shared latent part.

    It is the across-class mean of the prototypes, so the phase-private
    remainder is structured like the signal but carries no class label.
    """
    protos = class_prototypes(cfg)
    return ClassPrototypes(
        frequencies=protos.frequencies.mean(axis=0, keepdims=True),
        amplitudes=protos.amplitudes.mean(axis=0, keepdims=True),
        slopes=np.zeros((1, cfg.latent_dim)),  # stationary background
    )


def _mixing_matrices(cfg: SynthConfig, num_channels: int):
    """Per-phase mixing plus per-subject perturbations (corpus-level RNG)."""
    rng = np.random.default_rng([cfg.rng_seed, 2])
    scale = 1.0 / math.sqrt(cfg.latent_dim)
    base = {}
    shared = rng.standard_normal((num_channels, cfg.latent_dim)) * scale
    for phase in ACTIVITY_PHASES:
        if cfg.shared_mixing:
            base[phase] = shared
        else:
            base[phase] = rng.standard_normal(
                (num_channels, cfg.latent_dim)
            ) * scale
    mixing = {}
    for s_idx in range(cfg.num_subjects):
        shared_pert = rng.standard_normal(
            (num_channels, cfg.latent_dim)
        ) * (cfg.subject_scale * scale)
        for phase in ACTIVITY_PHASES:
            if cfg.shared_mixing:
                pert = shared_pert
            else:
                pert = rng.standard_normal(
                    (num_channels, cfg.latent_dim)
                ) * (cfg.subject_scale * scale)
            mixing[(s_idx, phase)] = base[phase] + pert
    return mixing


def _activity_envelope(n: int, fraction: float, shift: int = 0) -> np.ndarray:
    """Raised-cosine-edged envelope over the central ``fraction`` of samples,
    optionally shifted by ``shift`` samples."""
    env = np.zeros(n)
    start = int(round((1.0 - fraction) / 2.0 * n)) + shift
    start = min(max(start, 0), n - int(round(fraction * n)))
    stop = start + int(round(fraction * n))
    ramp = max(1, int(round(0.05 * n)))
    core = np.ones(stop - start)
    up = 0.5 * (1 - np.cos(np.pi * np.arange(ramp) / ramp))
    m = min(ramp, core.size)
    core[:m] = up[:m]
    core[-m:] = np.minimum(core[-m:], up[::-1][-m:])
    env[start:stop] = core
    return env


def _phase_lag(cfg: SynthConfig, phase: str) -> int:
    return {"imagined": 0, "spoken": cfg.lag_spoken,
            "articulated": cfg.lag_articulated}[phase]


def _trial_rng(cfg: SynthConfig, subject_idx: int, class_idx: int,
               trial_idx: int) -> np.random.Generator:
    return np.random.default_rng(
        [cfg.rng_seed, 3, subject_idx, class_idx, trial_idx]
    )


def generate(cfg: SynthConfig) -> list[RawRecording]:
    """The full corpus, ordered by subject, class, then trial index."""
    protos = class_prototypes(cfg)
    background = background_prototype(cfg)
    channels = DEFAULT_ANALYSIS_CHANNELS
    mixing = _mixing_matrices(cfg, len(channels))
    fs = cfg.sampling_rate
    seg_n = int(round(cfg.segment_seconds * fs))
    rest_n = int(round(cfg.rest_seconds * fs))
    rho = cfg.cross_phase_coupling

    recordings = []
    for s_idx, subject in enumerate(cfg.subjects):
        for c_idx, prompt in enumerate(cfg.prompts):
            for t_idx in range(cfg.trials_per_class):
                rng = _trial_rng(cfg, s_idx, c_idx, t_idx)
                lo, hi = cfg.spoken_seconds_range
                spoken_n = int(round(rng.uniform(lo, hi) * fs))
                phase_lengths = {
                    "articulated": seg_n, "imagined": seg_n, "spoken": spoken_n,
                }
                phi_shared = rng.uniform(0, 2 * np.pi, size=cfg.latent_dim)
                phi_private = {
                    phase: rng.uniform(0, 2 * np.pi, size=cfg.latent_dim)
                    for phase in ACTIVITY_PHASES
                }
                log_lo, log_hi = np.log(cfg.gain_range[0]), np.log(cfg.gain_range[1])
                gains = {
                    phase: float(np.exp(rng.uniform(log_lo, log_hi)))
                    for phase in ACTIVITY_PHASES
                }
                onsets = {
                    phase: rng.uniform(-cfg.onset_jitter, cfg.onset_jitter)
                    for phase in ACTIVITY_PHASES
                }
                jitter = rng.uniform(
                    1.0 - cfg.amplitude_jitter, 1.0 + cfg.amplitude_jitter,
                    size=cfg.latent_dim,
                )
                bg_jitter = {
                    phase: rng.uniform(
                        1.0 - cfg.amplitude_jitter, 1.0 + cfg.amplitude_jitter,
                        size=cfg.latent_dim,
                    )
                    for phase in ACTIVITY_PHASES
                }
                amp = protos.amplitudes[c_idx] * jitter
                freq = protos.frequencies[c_idx]
                slope = protos.slopes[c_idx]
                bg_freq = background.frequencies[0]
                bg_slope = background.slopes[0]

                blocks = [rng.standard_normal(
                    (len(channels), rest_n)) * cfg.noise_sigma]
                markers = [PhaseMarker("rest", 0, rest_n)]
                cursor = rest_n
                for phase in ACTIVITY_PHASES:
                    n = phase_lengths[phase]
                    lag = _phase_lag(cfg, phase)
                    # the whole latent runs on lagged time, so a lagged
                    # phase is exactly a shifted copy of the unlagged one
                    tau = np.arange(n) - lag
                    t = tau / fs
                    env = _activity_envelope(
                        n, cfg.activity_fraction,
                        shift=int(round(onsets[phase] * n)),
                    )
                    in_range = (tau >= 0) & (tau < n)
                    env_lagged = np.where(
                        in_range, env[np.clip(tau, 0, n - 1)], 0.0
                    )
                    rel = tau[None, :] / n - 0.5
                    # class-conditioned trajectory, shared across phases
                    shared_wave = np.sin(
                        2 * np.pi * freq[:, None] * t[None, :]
                        + phi_shared[:, None]
                    )
                    shared_part = (
                        amp[:, None] * (1.0 + slope[:, None] * rel)
                        * shared_wave
                    )
                    # phase-private remainder: class-neutral background
                    private_wave = np.sin(
                        2 * np.pi * bg_freq[:, None] * t[None, :]
                        + phi_private[phase][:, None]
                    )
                    bg_amp = background.amplitudes[0] * bg_jitter[phase]
                    private_part = (
                        bg_amp[:, None] * (1.0 + bg_slope[:, None] * rel)
                        * private_wave
                    )
                    latents = env_lagged[None, :] * (
                        math.sqrt(rho) * shared_part
                        + math.sqrt(1.0 - rho) * private_part
                    )
                    noise = rng.standard_normal(
                        (len(channels), n)) * cfg.noise_sigma
                    block = (
                        gains[phase] * (mixing[(s_idx, phase)] @ latents)
                        + noise
                    )
                    blocks.append(block)
                    markers.append(PhaseMarker(phase, cursor, cursor + n))
                    cursor += n
                recordings.append(
                    RawRecording(
                        subject_id=subject,
                        prompt=prompt,
                        sampling_rate=fs,
                        channel_names=channels,
                        samples=np.concatenate(blocks, axis=1),
                        phase_markers=tuple(markers),
                    )
                )
    return recordings


def bayes_reference(cfg: SynthConfig, rec: RawRecording) -> str:
    """Ground-truth matched-filter classification of one trial.

    Projects the analysis-phase activity region onto every class's latent
    frequency bank (with the true amplitudes as weights) and picks the class
    with the largest captured power.  This upper-bounds what any classifier
    can extract from the analysis phase alone.
    """
    protos = class_prototypes(cfg)
    marker = next(m for m in rec.phase_markers if m.phase == "imagined")
    data = rec.samples[:, marker.start:marker.end]
    n = data.shape[1]
    start = int(round((1.0 - cfg.activity_fraction) / 2.0 * n))
    active = data[:, start:n - start]
    t = np.arange(active.shape[1]) / rec.sampling_rate

    scores = []
    for c_idx in range(len(cfg.prompts)):
        freq = protos.frequencies[c_idx]
        amp = protos.amplitudes[c_idx]
        basis = np.exp(-2j * np.pi * freq[:, None] * t[None, :])
        proj = active @ basis.conj().T  # [channels, L]
        power = (np.abs(proj) ** 2) @ (amp**2)
        scores.append(float(power.sum()))
    return cfg.prompts[int(np.argmax(scores))]
