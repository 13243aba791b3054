"""Frame-level DNN trained on GMM-HMM alignments, with hybrid decoding.

The network is a plain MLP (default two 128-unit ReLU layers) over a
3-frame splice of the classifier features, softmax over all composed HMM
states.  At decode time emission scores are log-posterior minus log-prior
and the class decision reuses the HMM label graphs.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import InsufficientDataError
from .features import splice_frames
from .hmm import GmmHmmClassifier, HmmSet, _viterbi_batch

logger = logging.getLogger(__name__)

PRIOR_FLOOR = 1e-6


@dataclass
class DnnConfig:
    hidden_units: tuple[int, ...] = (128, 128)
    learning_rate: float = 1e-3
    batch_size: int = 256
    max_epochs: int = 30
    plateau_patience: int = 3
    plateau_min_delta: float = 1e-4
    lr_decay_factor: float = 0.5
    min_learning_rate: float = 1e-5
    validation_fraction: float = 0.10
    rng_seed: int = 0


@dataclass
class DnnModel:
    weights: list[np.ndarray]  # [out, in] per layer
    biases: list[np.ndarray]
    log_priors: np.ndarray     # [num_states]
    feature_dim: int           # pre-splice feature width

    @property
    def num_states(self) -> int:
        return self.weights[-1].shape[0]

    def log_posteriors(self, spliced: np.ndarray) -> np.ndarray:
        """Log softmax outputs for already-spliced frames [N, 3d]."""
        a = np.asarray(spliced, dtype=self.weights[0].dtype)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w.T + b, 0)
        logits = a @ self.weights[-1].T + self.biases[-1]
        logits64 = np.asarray(logits, dtype=np.float64)
        mx = logits64.max(axis=1, keepdims=True)
        return logits64 - mx - np.log(
            np.exp(logits64 - mx).sum(axis=1, keepdims=True)
        )

    def posteriors_for_sequence(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[1] != self.feature_dim:
            raise ValueError(
                f"expected {self.feature_dim}-dim frames, got {frames.shape[1]}"
            )
        return self.log_posteriors(splice_frames(frames))


def init_mlp(layer_dims, seed, dtype=np.float32):
    """Glorot-uniform weights, zero biases, pinned draw order."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return weights, biases


def mlp_loss_and_grads(weights, biases, x, targets):
    """Mean cross-entropy and analytic gradients.

    ``targets`` are integer state ids.  Arithmetic follows the weight
    dtype; the loss reduction is float64.
    """
    x = np.asarray(x, dtype=weights[0].dtype)
    activations = [x]
    pre = []
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0)
        activations.append(a)
    logits = a @ weights[-1].T + biases[-1]

    logits64 = np.asarray(logits, dtype=np.float64)
    mx = logits64.max(axis=1, keepdims=True)
    log_z = mx + np.log(np.exp(logits64 - mx).sum(axis=1, keepdims=True))
    n = x.shape[0]
    rows = np.arange(n)
    loss = float((log_z[:, 0] - logits64[rows, targets]).mean())

    probs = np.exp(logits64 - log_z)
    d_logits = probs
    d_logits[rows, targets] -= 1.0
    d_logits = (d_logits / n).astype(weights[0].dtype)

    grad_w = [None] * len(weights)
    grad_b = [None] * len(biases)
    grad_w[-1] = d_logits.T @ activations[-1]
    grad_b[-1] = d_logits.sum(axis=0)
    d = d_logits @ weights[-1]
    for layer in range(len(weights) - 2, -1, -1):
        d = d * (pre[layer] > 0)
        grad_w[layer] = d.T @ activations[layer]
        grad_b[layer] = d.sum(axis=0)
        if layer:
            d = d @ weights[layer]
    return loss, grad_w, grad_b


def _eval_loss(weights, biases, x, targets):
    x = np.asarray(x, dtype=weights[0].dtype)
    a = x
    for w, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ w.T + b, 0)
    logits = np.asarray(a @ weights[-1].T + biases[-1], dtype=np.float64)
    mx = logits.max(axis=1, keepdims=True)
    log_z = mx + np.log(np.exp(logits - mx).sum(axis=1, keepdims=True))
    return float((log_z[:, 0] - logits[np.arange(len(x)), targets]).mean())


def dnn_train(
    sequences,
    alignments,
    num_states: int,
    cfg: DnnConfig | None = None,
) -> tuple[DnnModel, list[dict]]:
    """Train on spliced frames with per-frame composed-state targets."""
    cfg = cfg or DnnConfig()
    if len(sequences) != len(alignments):
        raise ValueError("one alignment per sequence required")
    seqs = [np.asarray(s, dtype=np.float64) for s in sequences]
    targs = [np.asarray(a, dtype=np.int64) for a in alignments]
    for s, a in zip(seqs, targs):
        if s.shape[0] != a.shape[0]:
            raise ValueError("alignment length must match its sequence")
        if a.min() < 0 or a.max() >= num_states:
            raise ValueError("alignment targets out of range")
    if not seqs:
        raise InsufficientDataError("no training sequences")
    feature_dim = seqs[0].shape[1]

    counts = np.zeros(num_states)
    for a in targs:
        counts += np.bincount(a, minlength=num_states)
    total = counts.sum()
    unseen = np.flatnonzero(counts == 0)
    if unseen.size:
        logger.warning(
            "%d composed state(s) unseen in alignments; prior floored",
            unseen.size,
        )
    priors = np.maximum(counts / total, PRIOR_FLOOR)
    priors = priors / priors.sum()

    seed_seq = np.random.SeedSequence(cfg.rng_seed)
    init_seed, shuffle_seed = seed_seq.spawn(2)
    rng = np.random.default_rng(shuffle_seed)
    order = rng.permutation(len(seqs))
    n_val = 0
    if cfg.validation_fraction > 0 and len(seqs) >= 2:
        n_val = max(1, int(round(cfg.validation_fraction * len(seqs))))
        n_val = min(n_val, len(seqs) - 1)
    val_idx, train_idx = order[:n_val], order[n_val:]

    def stack(idx):
        x = np.concatenate([splice_frames(seqs[i]) for i in idx])
        y = np.concatenate([targs[i] for i in idx])
        return x.astype(np.float32), y

    train_x, train_y = stack(train_idx)
    val_x, val_y = stack(val_idx) if n_val else (train_x, train_y)

    dims = [3 * feature_dim, *cfg.hidden_units, num_states]
    weights, biases = init_mlp(dims, init_seed)
    m_w = [np.zeros_like(w) for w in weights]
    v_w = [np.zeros_like(w) for w in weights]
    m_b = [np.zeros_like(b) for b in biases]
    v_b = [np.zeros_like(b) for b in biases]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    lr = cfg.learning_rate
    log = [{"epoch": 0, "lr": lr,
            "train_loss": _eval_loss(weights, biases, train_x, train_y),
            "val_loss": _eval_loss(weights, biases, val_x, val_y)}]
    best_val = log[0]["val_loss"]
    stall = 0
    for epoch in range(1, cfg.max_epochs + 1):
        if lr < cfg.min_learning_rate:
            break
        order = rng.permutation(train_x.shape[0])
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            if batch.size == 0:
                continue
            _, gw, gb = mlp_loss_and_grads(
                weights, biases, train_x[batch], train_y[batch]
            )
            step += 1
            bc1 = 1.0 - beta1**step
            bc2 = 1.0 - beta2**step
            for i in range(len(weights)):
                for g, m, v, arr in (
                    (gw[i], m_w[i], v_w[i], weights[i]),
                    (gb[i], m_b[i], v_b[i], biases[i]),
                ):
                    m *= beta1
                    m += (1 - beta1) * g
                    v *= beta2
                    v += (1 - beta2) * g * g
                    arr -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(
                        arr.dtype, copy=False
                    )
        record = {"epoch": epoch, "lr": lr,
                  "train_loss": _eval_loss(weights, biases, train_x, train_y),
                  "val_loss": _eval_loss(weights, biases, val_x, val_y)}
        log.append(record)
        if record["val_loss"] < best_val - cfg.plateau_min_delta:
            best_val = record["val_loss"]
            stall = 0
        else:
            stall += 1
            if stall >= cfg.plateau_patience:
                lr *= cfg.lr_decay_factor
                stall = 0
    model = DnnModel(
        weights=weights, biases=biases,
        log_priors=np.log(priors), feature_dim=feature_dim,
    )
    return model, log


def hybrid_decode_scores(
    log_posteriors: np.ndarray, log_priors: np.ndarray, hmm_set: HmmSet
) -> dict[str, float]:
    """Viterbi scores per class with emissions = log posterior - log prior."""
    emis_by_state = log_posteriors - log_priors[None, :]
    t_len = log_posteriors.shape[0]
    scores = {}
    for label in sorted(hmm_set.units):
        graph = hmm_set.graph_for(label, t_len)
        emis = emis_by_state[:, list(graph.slot_state_ids)]
        _, ll = _viterbi_batch(emis[None], graph.self_logp, graph.adv_logp)
        scores[label] = float(ll[0])
    return scores


def dnn_classify(model: DnnModel, hmm_set: HmmSet, frames):
    """(label, per-class scores) via hybrid decoding of one sequence."""
    log_post = model.posteriors_for_sequence(frames)
    scores = hybrid_decode_scores(log_post, model.log_priors, hmm_set)
    best = max(scores.values())
    label = min(l for l, s in scores.items() if s == best)
    return label, scores


class HybridDnnHmmClassifier(BaseEstimator, ClassifierMixin):
    """GMM-HMM alignment stage followed by a DNN with hybrid decoding."""

    def __init__(
        self,
        num_states=3,
        num_components=5,
        max_rounds=20,
        gmm_max_iter=100,
        gmm_refit_iter=10,
        hidden_units=(128, 128),
        learning_rate=1e-3,
        batch_size=256,
        max_epochs=30,
        validation_fraction=0.10,
        random_state=0,
    ):
        self.num_states = num_states
        self.num_components = num_components
        self.max_rounds = max_rounds
        self.gmm_max_iter = gmm_max_iter
        self.gmm_refit_iter = gmm_refit_iter
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def fit(self, X, y):
        self.aligner_ = GmmHmmClassifier(
            num_states=self.num_states,
            num_components=self.num_components,
            max_rounds=self.max_rounds,
            gmm_max_iter=self.gmm_max_iter,
            gmm_refit_iter=self.gmm_refit_iter,
            random_state=self.random_state,
        ).fit(X, y)
        alignments = self.aligner_.align(X, [str(v) for v in y])
        cfg = DnnConfig(
            hidden_units=tuple(self.hidden_units),
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            validation_fraction=self.validation_fraction,
            rng_seed=self.random_state,
        )
        self.dnn_, self.log_ = dnn_train(
            X, alignments,
            num_states=self.aligner_.hmm_set_.state_space.num_states,
            cfg=cfg,
        )
        self.classes_ = self.aligner_.classes_
        return self

    def decision_scores(self, X):
        labels = list(self.classes_)
        out = np.empty((len(X), len(labels)))
        for i, seq in enumerate(X):
            scores = hybrid_decode_scores(
                self.dnn_.posteriors_for_sequence(np.asarray(seq, dtype=np.float64)),
                self.dnn_.log_priors,
                self.aligner_.hmm_set_,
            )
            out[i] = [scores[l] for l in labels]
        return out

    def predict(self, X):
        scores = self.decision_scores(X)
        labels = list(self.classes_)
        out = []
        for row in scores:
            best = row.max()
            out.append(min(labels[j] for j in np.flatnonzero(row == best)))
        return np.asarray(out)
