"""Bi-phasal correlation network.

Two phase-specific encoders (189 -> 50, ReLU) feed an additive shared
bottleneck (50 -> 25, ReLU); a single decoder reconstructs the analysis
phase (25 -> 50 ReLU -> 189 linear).  An absent phase contributes zeros at
the shared layer, which is also the single-phase test-time path.

Training minimises

    alpha * L_a + beta * L_b + gamma * L_c - lam * L_d

where L_a/L_b/L_c are self-, cross- and joint-reconstruction MSEs of the
analysis phase and L_d is the summed per-dimension Pearson correlation of
the two masked shared-layer projections.  Optimisation is Adam with the
learning rate halved when the validation loss plateaus.

Network arithmetic follows the array dtype (float32 in training); loss
reductions always accumulate in float64.
"""
from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InsufficientBatchError, InsufficientDataError

_CORR_EPS = 1e-8

PROJECTION_KINDS = ("hidden", "reconstruction", "joint")


@dataclass
class LossWeights:
    alpha: float = 1.5
    beta: float = 0.5
    gamma: float = 1.0
    lam: float = 2.5

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "lam"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 0.005
    lr_decay_factor: float = 0.5
    plateau_patience: int = 5
    plateau_min_delta: float = 1e-4
    min_learning_rate: float = 1e-5
    max_epochs: int = 50
    validation_fraction: float = 0.10
    rng_seed: int = 0


#: Serialization / optimisation order of the parameter blocks.
PARAM_BLOCKS = (
    "w_enc_a", "b_enc_a", "w_enc_s", "b_enc_s",
    "u_a", "u_s", "shared_bias",
    "w_dec", "b_dec", "w_out", "b_out",
)


@dataclass
class CorrNetParams:
    w_enc_a: np.ndarray  # [enc, in]
    b_enc_a: np.ndarray  # [enc]
    w_enc_s: np.ndarray  # [enc, in]
    b_enc_s: np.ndarray  # [enc]
    u_a: np.ndarray      # [shared, enc]
    u_s: np.ndarray      # [shared, enc]
    shared_bias: np.ndarray  # [shared]
    w_dec: np.ndarray    # [enc, shared]
    b_dec: np.ndarray    # [enc]
    w_out: np.ndarray    # [in, enc]
    b_out: np.ndarray    # [in]

    def __post_init__(self):
        for name in PARAM_BLOCKS:
            arr = getattr(self, name)
            if not np.isfinite(arr).all():
                raise ValueError(f"non-finite values in {name}")

    @property
    def input_dim(self) -> int:
        return self.w_enc_a.shape[1]

    @property
    def encoder_units(self) -> int:
        return self.w_enc_a.shape[0]

    @property
    def shared_units(self) -> int:
        return self.u_a.shape[0]

    def blocks(self):
        return [(name, getattr(self, name)) for name in PARAM_BLOCKS]

    def copy(self) -> "CorrNetParams":
        return CorrNetParams(**{n: getattr(self, n).copy() for n in PARAM_BLOCKS})

    def astype(self, dtype) -> "CorrNetParams":
        return CorrNetParams(
            **{n: getattr(self, n).astype(dtype) for n in PARAM_BLOCKS}
        )


def init_params(
    input_dim: int = 189,
    encoder_units: int = 50,
    shared_units: int = 25,
    seed: int = 0,
    dtype=np.float32,
) -> CorrNetParams:
    """Glorot-uniform weights, zero biases, drawn in pinned block order."""
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        r = np.sqrt(6.0 / (rows + cols))
        return rng.uniform(-r, r, size=(rows, cols)).astype(dtype)

    zeros = lambda n: np.zeros(n, dtype=dtype)
    return CorrNetParams(
        w_enc_a=glorot(encoder_units, input_dim),
        b_enc_a=zeros(encoder_units),
        w_enc_s=glorot(encoder_units, input_dim),
        b_enc_s=zeros(encoder_units),
        u_a=glorot(shared_units, encoder_units),
        u_s=glorot(shared_units, encoder_units),
        shared_bias=zeros(shared_units),
        w_dec=glorot(encoder_units, shared_units),
        b_dec=zeros(encoder_units),
        w_out=glorot(input_dim, encoder_units),
        b_out=zeros(input_dim),
    )


def _as_batch(x, dim, dtype):
    x = np.asarray(x, dtype=dtype)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected input of width {dim}, got shape {x.shape}")
    return x, squeeze


def _forward_cached(p: CorrNetParams, x_a, x_s):
    """Forward pass keeping pre-activations for backprop."""
    cache = {"x_a": x_a, "x_s": x_s}
    n = x_a.shape[0] if x_a is not None else x_s.shape[0]
    z = np.broadcast_to(p.shared_bias, (n, p.shared_units)).copy()
    if x_a is not None:
        cache["pre_a"] = x_a @ p.w_enc_a.T + p.b_enc_a
        cache["e_a"] = np.maximum(cache["pre_a"], 0)
        z += cache["e_a"] @ p.u_a.T
    if x_s is not None:
        cache["pre_s"] = x_s @ p.w_enc_s.T + p.b_enc_s
        cache["e_s"] = np.maximum(cache["pre_s"], 0)
        z += cache["e_s"] @ p.u_s.T
    cache["z"] = z
    cache["h"] = np.maximum(z, 0)
    cache["pre_d"] = cache["h"] @ p.w_dec.T + p.b_dec
    cache["d"] = np.maximum(cache["pre_d"], 0)
    cache["rec"] = cache["d"] @ p.w_out.T + p.b_out
    return cache


def forward(p: CorrNetParams, x_a=None, x_s=None):
    """Hidden projection and analysis reconstruction for one or two phases."""
    if x_a is None and x_s is None:
        raise ValueError("at least one phase input is required")
    dtype = p.w_enc_a.dtype
    squeeze = False
    if x_a is not None:
        x_a, squeeze = _as_batch(x_a, p.input_dim, dtype)
    if x_s is not None:
        x_s, squeeze_s = _as_batch(x_s, p.input_dim, dtype)
        squeeze = squeeze or squeeze_s
    cache = _forward_cached(p, x_a, x_s)
    h, rec = cache["h"], cache["rec"]
    if squeeze:
        return h[0], rec[0]
    return h, rec


def _mse(pred, target) -> float:
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff * diff, dtype=np.float64))


def corr_loss(h_a, h_b) -> float:
    """Sum over hidden dimensions of the batchwise Pearson correlation."""
    a = np.asarray(h_a, dtype=np.float64)
    b = np.asarray(h_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("projections must be two equal-shape [N, d] matrices")
    if a.shape[0] < 2:
        raise InsufficientBatchError("correlation needs a batch of >= 2")
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    num = (a * b).sum(axis=0)
    den = np.sqrt((a * a).sum(axis=0) * (b * b).sum(axis=0))
    return float((num / np.maximum(den, _CORR_EPS)).sum())


def _corr_grads(h_a, h_b):
    """Gradients of corr_loss w.r.t. both projections (float64)."""
    a64 = np.asarray(h_a, dtype=np.float64)
    b64 = np.asarray(h_b, dtype=np.float64)
    a = a64 - a64.mean(axis=0)
    b = b64 - b64.mean(axis=0)
    sa = (a * a).sum(axis=0)
    sb = (b * b).sum(axis=0)
    den = np.sqrt(sa * sb)
    ok = den >= _CORR_EPS
    safe_den = np.where(ok, den, 1.0)
    safe_sa = np.where(sa > 0, sa, 1.0)
    safe_sb = np.where(sb > 0, sb, 1.0)
    r = (a * b).sum(axis=0) / safe_den
    g_a = np.where(ok, 1.0, 0.0) * (b / safe_den - (r / safe_sa) * a)
    g_b = np.where(ok, 1.0, 0.0) * (a / safe_den - (r / safe_sb) * b)
    return g_a, g_b


def total_loss(p: CorrNetParams, batch_a, batch_s, w: LossWeights):
    """Overall loss and its four components on one paired batch."""
    dtype = p.w_enc_a.dtype
    x_a, _ = _as_batch(batch_a, p.input_dim, dtype)
    x_s, _ = _as_batch(batch_s, p.input_dim, dtype)
    if x_a.shape[0] != x_s.shape[0]:
        raise ValueError("paired batches must have equal sample counts")
    if x_a.shape[0] < 2:
        raise InsufficientBatchError("loss needs a batch of >= 2")
    c_self = _forward_cached(p, x_a, None)
    c_cross = _forward_cached(p, None, x_s)
    c_joint = _forward_cached(p, x_a, x_s)
    components = {
        "L_a": _mse(c_self["rec"], x_a),
        "L_b": _mse(c_cross["rec"], x_a),
        "L_c": _mse(c_joint["rec"], x_a),
        "L_d": corr_loss(c_self["h"], c_cross["h"]),
    }
    total = (
        w.alpha * components["L_a"]
        + w.beta * components["L_b"]
        + w.gamma * components["L_c"]
        - w.lam * components["L_d"]
    )
    return total, components


def _zeros_like_params(p: CorrNetParams) -> CorrNetParams:
    return CorrNetParams(
        **{n: np.zeros_like(getattr(p, n)) for n in PARAM_BLOCKS}
    )


def _backprop_path(p, cache, d_rec, d_h_extra, grads):
    """Accumulate gradients for one forward path.

    d_rec: gradient at the reconstruction output (may be None).
    d_h_extra: gradient injected at the hidden layer (may be None).
    """
    dtype = p.w_enc_a.dtype
    if d_rec is not None:
        d_rec = d_rec.astype(dtype, copy=False)
        grads.w_out += d_rec.T @ cache["d"]
        grads.b_out += d_rec.sum(axis=0)
        d_d = (d_rec @ p.w_out) * (cache["pre_d"] > 0)
        grads.w_dec += d_d.T @ cache["h"]
        grads.b_dec += d_d.sum(axis=0)
        d_h = d_d @ p.w_dec
    else:
        d_h = np.zeros_like(cache["h"])
    if d_h_extra is not None:
        d_h = d_h + d_h_extra.astype(dtype, copy=False)
    d_z = d_h * (cache["z"] > 0)
    grads.shared_bias += d_z.sum(axis=0)
    if cache["x_a"] is not None:
        grads.u_a += d_z.T @ cache["e_a"]
        d_e = (d_z @ p.u_a) * (cache["pre_a"] > 0)
        grads.w_enc_a += d_e.T @ cache["x_a"]
        grads.b_enc_a += d_e.sum(axis=0)
    if cache["x_s"] is not None:
        grads.u_s += d_z.T @ cache["e_s"]
        d_e = (d_z @ p.u_s) * (cache["pre_s"] > 0)
        grads.w_enc_s += d_e.T @ cache["x_s"]
        grads.b_enc_s += d_e.sum(axis=0)


def gradients(p: CorrNetParams, batch_a, batch_s, w: LossWeights):
    """Analytic gradient of ``total_loss`` for every parameter block."""
    dtype = p.w_enc_a.dtype
    x_a, _ = _as_batch(batch_a, p.input_dim, dtype)
    x_s, _ = _as_batch(batch_s, p.input_dim, dtype)
    if x_a.shape[0] != x_s.shape[0]:
        raise ValueError("paired batches must have equal sample counts")
    if x_a.shape[0] < 2:
        raise InsufficientBatchError("gradients need a batch of >= 2")
    n, dim = x_a.shape
    scale = 2.0 / (n * dim)

    c_self = _forward_cached(p, x_a, None)
    c_cross = _forward_cached(p, None, x_s)
    c_joint = _forward_cached(p, x_a, x_s)
    g_corr_a, g_corr_s = _corr_grads(c_self["h"], c_cross["h"])

    grads = _zeros_like_params(p)
    _backprop_path(
        p, c_self,
        d_rec=w.alpha * scale * (c_self["rec"] - x_a),
        d_h_extra=-w.lam * g_corr_a,
        grads=grads,
    )
    _backprop_path(
        p, c_cross,
        d_rec=w.beta * scale * (c_cross["rec"] - x_a),
        d_h_extra=-w.lam * g_corr_s,
        grads=grads,
    )
    _backprop_path(
        p, c_joint,
        d_rec=w.gamma * scale * (c_joint["rec"] - x_a),
        d_h_extra=None,
        grads=grads,
    )
    return grads


class _Adam:
    def __init__(self, params: CorrNetParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(a) for n, a in params.blocks()}
        self.v = {n: np.zeros_like(a) for n, a in params.blocks()}

    def step(self, params: CorrNetParams, grads: CorrNetParams, lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, arr in params.blocks():
            g = getattr(grads, name)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= (lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)).astype(
                arr.dtype, copy=False
            )


def _pair_sequences(frames_a, frames_s):
    """Pair instance sequences frame-by-frame, resampling support lengths."""
    if len(frames_a) != len(frames_s):
        raise ValueError(
            f"unpaired data: {len(frames_a)} analysis vs "
            f"{len(frames_s)} support instances"
        )
    pairs = []
    for a, s in zip(frames_a, frames_s):
        a = np.asarray(getattr(a, "frames", a), dtype=np.float64)
        s = np.asarray(getattr(s, "frames", s), dtype=np.float64)
        if a.shape[1] != s.shape[1]:
            raise ValueError("paired instances must share frame width")
        if s.shape[0] != a.shape[0]:
            if a.shape[0] == 1:
                idx = np.zeros(1, dtype=int)
            else:
                # nearest-index mapping keeps monotone temporal correspondence
                idx = np.rint(
                    np.arange(a.shape[0]) * (s.shape[0] - 1) / (a.shape[0] - 1)
                ).astype(int)
            s = s[idx]
        pairs.append((a, s))
    return pairs


def train_corrnet(
    frames_a,
    frames_s,
    cfg: TrainConfig | None = None,
    weights: LossWeights | None = None,
    input_dim: int = 189,
    encoder_units: int = 50,
    shared_units: int = 25,
    dtype=np.float32,
):
    """Train on paired instance sequences; returns (params, epoch log).

    The log's first record (epoch 0) holds the pre-training losses; records
    are plain dicts so serialising them is trivially deterministic.
    """
    cfg = cfg or TrainConfig()
    weights = weights or LossWeights()
    pairs = _pair_sequences(frames_a, frames_s)

    seed_seq = np.random.SeedSequence(cfg.rng_seed)
    init_seed, shuffle_seed = seed_seq.spawn(2)
    params = init_params(
        input_dim, encoder_units, shared_units,
        seed=init_seed, dtype=dtype,
    )
    rng = np.random.default_rng(shuffle_seed)

    order = rng.permutation(len(pairs))
    n_val = 0
    if cfg.validation_fraction > 0 and len(pairs) >= 2:
        n_val = max(1, int(round(cfg.validation_fraction * len(pairs))))
        n_val = min(n_val, len(pairs) - 1)
    val_idx = order[:n_val]
    train_idx = order[n_val:]

    def stack(idx, which):
        return np.concatenate([pairs[i][which] for i in idx]).astype(dtype)

    train_a, train_s = stack(train_idx, 0), stack(train_idx, 1)
    if n_val:
        val_a, val_s = stack(val_idx, 0), stack(val_idx, 1)
    else:
        val_a, val_s = train_a, train_s
    if train_a.shape[0] < 2 * cfg.batch_size:
        raise InsufficientDataError(
            f"{train_a.shape[0]} training frames form fewer than 2 batches "
            f"of {cfg.batch_size}"
        )

    def evaluate(epoch, lr):
        tr_total, tr_comp = total_loss(params, train_a, train_s, weights)
        va_total, va_comp = total_loss(params, val_a, val_s, weights)
        record = {"epoch": epoch, "lr": lr, "train_total": tr_total,
                  "val_total": va_total}
        record.update({f"train_{k}": v for k, v in tr_comp.items()})
        record.update({f"val_{k}": v for k, v in va_comp.items()})
        return record

    adam = _Adam(params)
    lr = cfg.learning_rate
    log = [evaluate(0, lr)]
    best_val = log[0]["val_total"]
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if lr < cfg.min_learning_rate:
            break
        order = rng.permutation(train_a.shape[0])
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if len(batch) < 2:
                continue
            grads = gradients(params, train_a[batch], train_s[batch], weights)
            adam.step(params, grads, lr)
        record = evaluate(epoch, lr)
        log.append(record)
        if record["val_total"] < best_val - cfg.plateau_min_delta:
            best_val = record["val_total"]
            stall = 0
        else:
            stall += 1
            if stall >= cfg.plateau_patience:
                lr *= cfg.lr_decay_factor
                stall = 0
    return params, log


def project(p: CorrNetParams, frames_a, frames_s=None, kind: str = "hidden"):
    """Project instance sequences through a trained network.

    kind: "hidden" (25-dim, analysis only), "reconstruction" (input-dim,
    analysis only) or "joint" (25-dim, needs support frames).
    """
    if kind not in PROJECTION_KINDS:
        raise ValueError(f"unknown projection kind: {kind!r}")
    if kind == "joint" and frames_s is None:
        raise ValueError("joint projection requires support-phase frames")
    single = isinstance(frames_a, np.ndarray) and frames_a.ndim == 2
    seq_a = [frames_a] if single else list(frames_a)
    if frames_s is not None:
        seq_s = [frames_s] if single else list(frames_s)
        pairs = _pair_sequences(seq_a, seq_s)
    else:
        pairs = [(np.asarray(getattr(a, "frames", a), dtype=np.float64), None)
                 for a in seq_a]
    out = []
    for a, s in pairs:
        if kind == "joint":
            h, _ = forward(p, a, s)
            out.append(np.asarray(h, dtype=np.float64))
        else:
            h, rec = forward(p, a, None)
            picked = h if kind == "hidden" else rec
            out.append(np.asarray(picked, dtype=np.float64))
    return out[0] if single else out


# -- serialization ----------------------------------------------------------

_MAGIC = b"MPCN"
_VERSION = 1
_ACTIVATION_RELU = 0


def save_corrnet(path, params: CorrNetParams, weights: LossWeights, seed: int):
    """Versioned binary header plus float32 LE blocks in pinned order."""
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack(
        "<HBIII4fQ",
        _VERSION,
        _ACTIVATION_RELU,
        params.input_dim,
        params.encoder_units,
        params.shared_units,
        weights.alpha, weights.beta, weights.gamma, weights.lam,
        seed,
    ))
    for _, arr in params.blocks():
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_corrnet(path):
    """Returns (params, weights, seed)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a corrnet model file")
    header = struct.Struct("<HBIII4fQ")
    fields = header.unpack_from(blob, 4)
    version, activation, in_dim, enc, shared = fields[:5]
    if version != _VERSION or activation != _ACTIVATION_RELU:
        raise ValueError(f"{path}: unsupported version/activation")
    weights = LossWeights(*fields[5:9])
    seed = fields[9]
    shapes = {
        "w_enc_a": (enc, in_dim), "b_enc_a": (enc,),
        "w_enc_s": (enc, in_dim), "b_enc_s": (enc,),
        "u_a": (shared, enc), "u_s": (shared, enc), "shared_bias": (shared,),
        "w_dec": (enc, shared), "b_dec": (enc,),
        "w_out": (in_dim, enc), "b_out": (in_dim,),
    }
    offset = 4 + header.size
    arrays = {}
    for name in PARAM_BLOCKS:
        shape = shapes[name]
        count = int(np.prod(shape))
        arrays[name] = np.frombuffer(
            blob, dtype="<f4", count=count, offset=offset
        ).reshape(shape).astype(np.float32)
        offset += 4 * count
    return CorrNetParams(**arrays), weights, seed


class CorrNet(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``fit(X, Y)`` on paired views, ``transform(X)``.

    X and Y are lists of per-instance frame matrices (or single matrices);
    ``transform`` emits features per the ``projection`` parameter.
    """

    def __init__(
        self,
        input_dim=189,
        encoder_units=50,
        shared_units=25,
        alpha=1.5,
        beta=0.5,
        gamma=1.0,
        corr_scale=2.5,
        batch_size=256,
        learning_rate=0.005,
        lr_decay_factor=0.5,
        plateau_patience=5,
        max_epochs=50,
        validation_fraction=0.10,
        projection="hidden",
        random_state=0,
    ):
        self.input_dim = input_dim
        self.encoder_units = encoder_units
        self.shared_units = shared_units
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.corr_scale = corr_scale
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lr_decay_factor = lr_decay_factor
        self.plateau_patience = plateau_patience
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.projection = projection
        self.random_state = random_state

    def _weights(self):
        return LossWeights(self.alpha, self.beta, self.gamma, self.corr_scale)

    def _train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay_factor=self.lr_decay_factor,
            plateau_patience=self.plateau_patience,
            max_epochs=self.max_epochs,
            validation_fraction=self.validation_fraction,
            rng_seed=self.random_state,
        )

    def fit(self, X, Y):
        self.params_, self.log_ = train_corrnet(
            X, Y,
            cfg=self._train_config(),
            weights=self._weights(),
            input_dim=self.input_dim,
            encoder_units=self.encoder_units,
            shared_units=self.shared_units,
        )
        return self

    def transform(self, X, Y=None):
        return project(self.params_, X, Y, kind=self.projection)
