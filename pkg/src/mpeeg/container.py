"""Portable trial container and feature-cache file formats.

Trial directory layout::

    <trial>/meta.json    subject_id, prompt, sampling_rate, channel_names,
                         phase_markers: [{"phase","start","end"}, ...]
    <trial>/data.f32le   row-major little-endian float32 [channels, samples]
    <trial>/data.csv     alternative import: first line comma-separated
                         channel names, one subsequent line per channel

Feature cache layout (one directory per trial)::

    <trial>/features.json            instance ids, extraction parameters,
                                     per-phase shapes and file names
    <trial>/features_<phase>.f32le   row-major float32 [11, 63, W]

All JSON is written with sorted keys so reruns are byte-identical.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .features import FEATURE_LIST_VERSION, NUM_FEATURES
from .types import PhaseMarker, RawRecording

META_NAME = "meta.json"
DATA_NAME = "data.f32le"
CSV_NAME = "data.csv"
FEATURES_META_NAME = "features.json"
MANIFEST_NAME = "corpus.json"


def dump_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def trial_dir_name(rec: RawRecording, index: int) -> str:
    return f"{rec.subject_id}_{index:04d}"


def write_trial(trial_dir, rec: RawRecording) -> None:
    os.makedirs(trial_dir, exist_ok=True)
    meta = {
        "subject_id": rec.subject_id,
        "prompt": rec.prompt,
        "sampling_rate": rec.sampling_rate,
        "channel_names": list(rec.channel_names),
        "phase_markers": [
            {"phase": m.phase, "start": m.start, "end": m.end}
            for m in rec.phase_markers
        ],
    }
    dump_json(os.path.join(trial_dir, META_NAME), meta)
    data = np.ascontiguousarray(rec.samples, dtype="<f4")
    with open(os.path.join(trial_dir, DATA_NAME), "wb") as fh:
        fh.write(data.tobytes())


def _read_csv_matrix(path, channel_names):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        names = tuple(s.strip() for s in header.split(","))
        if names != tuple(channel_names):
            raise ValueError(
                f"{path}: CSV header {names} does not match meta channel names"
            )
        rows = [
            np.array([float(v) for v in line.split(",")])
            for line in fh
            if line.strip()
        ]
    if len(rows) != len(channel_names):
        raise ValueError(
            f"{path}: expected {len(channel_names)} channel rows, got {len(rows)}"
        )
    lengths = {r.size for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{path}: channel rows have unequal lengths")
    return np.stack(rows)


def read_trial(trial_dir) -> RawRecording:
    meta = load_json(os.path.join(trial_dir, META_NAME))
    names = tuple(meta["channel_names"])
    bin_path = os.path.join(trial_dir, DATA_NAME)
    csv_path = os.path.join(trial_dir, CSV_NAME)
    if os.path.exists(bin_path):
        raw = np.fromfile(bin_path, dtype="<f4")
        if raw.size % len(names):
            raise ValueError(f"{bin_path}: size is not a channel multiple")
        samples = raw.reshape(len(names), -1).astype(np.float64)
    elif os.path.exists(csv_path):
        samples = _read_csv_matrix(csv_path, names)
    else:
        raise FileNotFoundError(f"{trial_dir}: no {DATA_NAME} or {CSV_NAME}")
    markers = tuple(
        PhaseMarker(m["phase"], int(m["start"]), int(m["end"]))
        for m in meta["phase_markers"]
    )
    return RawRecording(
        subject_id=meta["subject_id"],
        prompt=meta["prompt"],
        sampling_rate=float(meta["sampling_rate"]),
        channel_names=names,
        samples=samples,
        phase_markers=markers,
    )


def list_trial_dirs(corpus_dir) -> list[str]:
    """Sorted trial directories (those holding a meta.json)."""
    if not os.path.isdir(corpus_dir):
        raise FileNotFoundError(f"corpus directory not found: {corpus_dir}")
    out = []
    for name in sorted(os.listdir(corpus_dir)):
        path = os.path.join(corpus_dir, name)
        if os.path.isdir(path) and os.path.exists(os.path.join(path, META_NAME)):
            out.append(path)
    return out


def write_corpus(recordings, corpus_dir, config_dict) -> str:
    """Write every trial and a manifest; returns the manifest path."""
    os.makedirs(corpus_dir, exist_ok=True)
    counters: dict[str, int] = {}
    names = []
    for rec in recordings:
        idx = counters.get(rec.subject_id, 0)
        counters[rec.subject_id] = idx + 1
        name = trial_dir_name(rec, idx)
        write_trial(os.path.join(corpus_dir, name), rec)
        names.append(name)
    manifest_path = os.path.join(corpus_dir, MANIFEST_NAME)
    dump_json(manifest_path, {
        "config": config_dict,
        "trials": names,
        "format": {"data": DATA_NAME, "meta": META_NAME},
    })
    return manifest_path


# -- feature cache -----------------------------------------------------------

def _phase_file(phase: str) -> str:
    return f"features_{phase}.f32le"


def write_trial_features(
    trial_dir, per_phase: dict[str, np.ndarray], instance_ids,
    extraction: dict,
) -> None:
    os.makedirs(trial_dir, exist_ok=True)
    phases = {}
    for phase in sorted(per_phase):
        tensor = np.ascontiguousarray(per_phase[phase], dtype="<f4")
        if tensor.ndim != 3 or tensor.shape[1] != NUM_FEATURES:
            raise ValueError(
                f"phase {phase!r}: expected [instances, {NUM_FEATURES}, W]"
            )
        with open(os.path.join(trial_dir, _phase_file(phase)), "wb") as fh:
            fh.write(tensor.tobytes())
        phases[phase] = {
            "file": _phase_file(phase),
            "num_instances": int(tensor.shape[0]),
            "num_windows": int(tensor.shape[2]),
        }
    dump_json(os.path.join(trial_dir, FEATURES_META_NAME), {
        "feature_list_version": FEATURE_LIST_VERSION,
        "num_features": NUM_FEATURES,
        "instances": list(instance_ids),
        "phases": phases,
        "extraction": extraction,
    })


def read_trial_features(trial_dir):
    """Returns (meta dict, {phase: float64 [instances, 63, W]})."""
    meta = load_json(os.path.join(trial_dir, FEATURES_META_NAME))
    per_phase = {}
    for phase, desc in meta["phases"].items():
        raw = np.fromfile(
            os.path.join(trial_dir, desc["file"]), dtype="<f4"
        )
        per_phase[phase] = raw.reshape(
            desc["num_instances"], NUM_FEATURES, desc["num_windows"]
        ).astype(np.float64)
    return meta, per_phase
