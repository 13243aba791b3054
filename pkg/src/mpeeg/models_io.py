"""On-disk model formats for the classifier stage.

hmmset.json      topology, per-unit log transitions, GMM block offsets
gmm.f64le        concatenated float64 LE blocks (weights, means, variances)
                 in the order listed by hmmset.json
dnn.bin          versioned header + float32 LE weight blocks + float64 priors
alignments.jsonl one record per training instance: trial, instance, state ids
"""
from __future__ import annotations

import io
import json
import os
import struct

import numpy as np

from .container import dump_json, load_json
from .dnn import DnnModel
from .gmm import GmmParams
from .hmm import HmmModel, HmmSet, HmmTopology, StateSpace

HMMSET_NAME = "hmmset.json"
GMM_BLOB_NAME = "gmm.f64le"
DNN_NAME = "dnn.bin"
ALIGNMENTS_NAME = "alignments.jsonl"

_DNN_MAGIC = b"MPDN"
_DNN_VERSION = 1


def save_hmmset(out_dir, hmm_set: HmmSet) -> None:
    os.makedirs(out_dir, exist_ok=True)
    blob = io.BytesIO()
    entries = []

    def push_gmm(owner, state_idx, gmm: GmmParams):
        offset = blob.tell()
        for arr in (gmm.weights, gmm.means, gmm.variances):
            blob.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        entries.append({
            "owner": owner,
            "state": state_idx,
            "num_components": int(gmm.num_components),
            "dim": int(gmm.dim),
            "offset": offset,
        })

    units_meta = {}
    for label in sorted(hmm_set.units):
        model = hmm_set.units[label]
        units_meta[label] = {
            "num_states": model.num_states,
            "log_transitions": model.log_transitions.tolist(),
        }
        for i, gmm in enumerate(model.state_gmms):
            push_gmm(label, i, gmm)
    na = hmm_set.na
    push_gmm(na.unit_id, 0, na.state_gmms[0])

    dump_json(os.path.join(out_dir, HMMSET_NAME), {
        "topology": {
            "num_states": hmm_set.topology.num_states,
            "num_components": hmm_set.topology.num_components,
        },
        "units": units_meta,
        "non_activity": {
            "num_states": na.num_states,
            "log_transitions": na.log_transitions.tolist(),
        },
        "gmm_blocks": entries,
        "gmm_file": GMM_BLOB_NAME,
    })
    with open(os.path.join(out_dir, GMM_BLOB_NAME), "wb") as fh:
        fh.write(blob.getvalue())


def load_hmmset(out_dir) -> HmmSet:
    meta = load_json(os.path.join(out_dir, HMMSET_NAME))
    raw = np.fromfile(os.path.join(out_dir, GMM_BLOB_NAME), dtype="<f8")

    def read_gmm(entry) -> GmmParams:
        k, d = entry["num_components"], entry["dim"]
        start = entry["offset"] // 8
        weights = raw[start:start + k]
        means = raw[start + k:start + k + k * d].reshape(k, d)
        variances = raw[start + k + k * d:start + k + 2 * k * d].reshape(k, d)
        return GmmParams(weights.copy(), means.copy(), variances.copy())

    by_owner: dict[str, dict[int, GmmParams]] = {}
    for entry in meta["gmm_blocks"]:
        by_owner.setdefault(entry["owner"], {})[entry["state"]] = read_gmm(entry)

    units = {}
    for label, desc in meta["units"].items():
        gmms = by_owner[label]
        units[label] = HmmModel(
            unit_id=label,
            num_states=desc["num_states"],
            log_transitions=np.asarray(desc["log_transitions"]),
            state_gmms=[gmms[i] for i in range(desc["num_states"])],
        )
    from .hmm import NON_ACTIVITY

    na = HmmModel(
        unit_id=NON_ACTIVITY,
        num_states=meta["non_activity"]["num_states"],
        log_transitions=np.asarray(meta["non_activity"]["log_transitions"]),
        state_gmms=[by_owner[NON_ACTIVITY][0]],
    )
    topo = HmmTopology(
        num_states=meta["topology"]["num_states"],
        num_components=meta["topology"]["num_components"],
    )
    space = StateSpace(
        units=tuple(sorted(units)), states_per_unit=topo.num_states
    )
    return HmmSet(units=units, na=na, state_space=space, topology=topo)


def save_dnn(path, model: DnnModel) -> None:
    buf = io.BytesIO()
    buf.write(_DNN_MAGIC)
    buf.write(struct.pack("<HHI", _DNN_VERSION, len(model.weights),
                          model.feature_dim))
    for w in model.weights:
        buf.write(struct.pack("<II", *w.shape))
    for w, b in zip(model.weights, model.biases):
        buf.write(np.ascontiguousarray(w, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(b, dtype="<f4").tobytes())
    buf.write(np.ascontiguousarray(model.log_priors, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_dnn(path) -> DnnModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _DNN_MAGIC:
        raise ValueError(f"{path}: not a dnn model file")
    version, num_layers, feature_dim = struct.unpack_from("<HHI", blob, 4)
    if version != _DNN_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 4 + struct.calcsize("<HHI")
    shapes = []
    for _ in range(num_layers):
        shapes.append(struct.unpack_from("<II", blob, offset))
        offset += 8
    weights, biases = [], []
    for rows, cols in shapes:
        w = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=offset)
        offset += 4 * rows * cols
        b = np.frombuffer(blob, dtype="<f4", count=rows, offset=offset)
        offset += 4 * rows
        weights.append(w.reshape(rows, cols).astype(np.float32))
        biases.append(b.astype(np.float32))
    num_states = shapes[-1][0]
    priors = np.frombuffer(blob, dtype="<f8", count=num_states, offset=offset)
    return DnnModel(
        weights=weights, biases=biases,
        log_priors=priors.astype(np.float64), feature_dim=feature_dim,
    )


def save_alignments(path, records) -> None:
    """records: iterable of (trial_id, instance_id, state id array)."""
    with open(path, "w", encoding="utf-8") as fh:
        for trial_id, instance_id, states in records:
            fh.write(json.dumps(
                {"trial": trial_id, "instance": instance_id,
                 "states": [int(s) for s in states]},
                sort_keys=True,
            ))
            fh.write("\n")


def save_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
