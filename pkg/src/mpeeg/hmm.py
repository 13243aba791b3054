"""Left-to-right GMM-HMMs with flanking non-activity states.

Every class hypothesis decodes through a composed chain

    [non-activity] [s1 .. sK] [non-activity]

where the non-activity model is shared across classes.  Alignments must
enter at the first slot, leave from the last, and visit every slot at least
once.  Training is Viterbi-style: alternate hard alignment, warm-started
GMM re-estimation per state, and transition re-estimation from path counts.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import InsufficientDataError, SequenceTooShortError
from .gmm import VARIANCE_FLOOR, GmmFitResult, GmmParams, gmm_em_fit

logger = logging.getLogger(__name__)

NON_ACTIVITY = "non-activity"

_NEG_INF = -np.inf


@dataclass
class HmmModel:
    """One unit's left-to-right chain (or the 1-state non-activity model)."""

    unit_id: str
    num_states: int
    log_transitions: np.ndarray  # [S, S+1]; col i self, col i+1 advance
    state_gmms: list[GmmParams]

    def __post_init__(self):
        self.log_transitions = np.asarray(self.log_transitions, dtype=np.float64)
        if self.log_transitions.shape != (self.num_states, self.num_states + 1):
            raise ValueError("transition matrix must be [S, S+1]")
        rows = np.exp(self.log_transitions).sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-9):
            raise ValueError("transition rows must be log-normalised")
        if len(self.state_gmms) != self.num_states:
            raise ValueError("one GMM per state required")

    def self_logp(self, state: int) -> float:
        return float(self.log_transitions[state, state])

    def advance_logp(self, state: int) -> float:
        return float(self.log_transitions[state, state + 1])


def transitions_from_self_probs(self_probs, floor: float = 1e-8) -> np.ndarray:
    """[S] self-loop probabilities -> [S, S+1] log transition matrix."""
    self_probs = np.clip(np.asarray(self_probs, dtype=np.float64), floor, 1 - floor)
    n = self_probs.shape[0]
    mat = np.full((n, n + 1), _NEG_INF)
    for i, p in enumerate(self_probs):
        mat[i, i] = np.log(p)
        mat[i, i + 1] = np.log1p(-p)
    return mat


@dataclass(frozen=True)
class StateSpace:
    """Composed-state id layout: non-activity is 0, then units in label order."""

    units: tuple[str, ...]
    states_per_unit: int

    @property
    def num_states(self) -> int:
        return 1 + len(self.units) * self.states_per_unit

    def na_id(self) -> int:
        return 0

    def state_id(self, unit: str, state_index: int) -> int:
        return 1 + self.units.index(unit) * self.states_per_unit + state_index

    def unit_state_ids(self, unit: str) -> list[int]:
        return [self.state_id(unit, i) for i in range(self.states_per_unit)]


@dataclass
class LabelGraph:
    """Composed decode chain for one class hypothesis."""

    hypothesis: str
    slot_state_ids: tuple[int, ...]
    self_logp: np.ndarray  # [num_slots]
    adv_logp: np.ndarray   # [num_slots]; last entry is -inf

    @property
    def num_slots(self) -> int:
        return len(self.slot_state_ids)


def make_label_graph(
    class_hypothesis: str,
    num_frames: int,
    unit_model: HmmModel,
    na_model: HmmModel,
    state_space: StateSpace,
) -> LabelGraph:
    """[na][unit states][na] chain; needs one frame per slot at minimum."""
    num_slots = unit_model.num_states + 2
    if num_frames < num_slots:
        raise SequenceTooShortError(
            f"{num_frames} frames cannot visit {num_slots} slots"
        )
    slot_ids = (
        [state_space.na_id()]
        + state_space.unit_state_ids(class_hypothesis)
        + [state_space.na_id()]
    )
    self_logp = np.empty(num_slots)
    adv_logp = np.empty(num_slots)
    self_logp[0] = na_model.self_logp(0)
    adv_logp[0] = na_model.advance_logp(0)
    for i in range(unit_model.num_states):
        self_logp[1 + i] = unit_model.self_logp(i)
        adv_logp[1 + i] = unit_model.advance_logp(i)
    self_logp[-1] = na_model.self_logp(0)
    adv_logp[-1] = _NEG_INF
    return LabelGraph(
        hypothesis=class_hypothesis,
        slot_state_ids=tuple(slot_ids),
        self_logp=self_logp,
        adv_logp=adv_logp,
    )


def count_alignments(num_frames: int, num_slots: int) -> int:
    """Monotone full-coverage alignments: choose slot-change points."""
    from math import comb

    if num_frames < num_slots:
        return 0
    return comb(num_frames - 1, num_slots - 1)


@dataclass
class AlignResult:
    slots: np.ndarray      # [T] slot indices
    state_ids: np.ndarray  # [T] composed-state ids
    log_likelihood: float


def _viterbi_batch(log_emis: np.ndarray, self_logp, adv_logp):
    """Batched Viterbi over a shared chain. log_emis: [B, T, S].

    Ties between staying and advancing resolve to staying, which pins the
    backtrace deterministically.
    """
    b, t_max, s = log_emis.shape
    if t_max < s:
        raise SequenceTooShortError(f"{t_max} frames cannot visit {s} slots")
    alpha = np.full((b, s), _NEG_INF)
    alpha[:, 0] = log_emis[:, 0, 0]
    back = np.zeros((b, t_max, s), dtype=np.int8)
    for t in range(1, t_max):
        stay = alpha + self_logp[None, :]
        move = np.full((b, s), _NEG_INF)
        move[:, 1:] = alpha[:, :-1] + adv_logp[None, :-1]
        advance = move > stay
        back[:, t] = advance
        alpha = np.where(advance, move, stay) + log_emis[:, t]
    ll = alpha[:, -1].copy()
    paths = np.empty((b, t_max), dtype=np.int64)
    current = np.full(b, s - 1, dtype=np.int64)
    for t in range(t_max - 1, -1, -1):
        paths[:, t] = current
        current = current - back[np.arange(b), t, current]
    return paths, ll


def _emission_matrix(frames, graph, models):
    frames = np.asarray(frames, dtype=np.float64)
    per_state = {}
    for sid in set(graph.slot_state_ids):
        per_state[sid] = models[sid].log_prob(frames)
    return np.stack(
        [per_state[sid] for sid in graph.slot_state_ids], axis=1
    )


def viterbi_align(models, graph: LabelGraph, frames) -> AlignResult:
    """Best monotone path of ``frames`` through the composed graph.

    ``models`` maps composed-state id to :class:`GmmParams`.
    """
    emis = _emission_matrix(frames, graph, models)
    paths, ll = _viterbi_batch(emis[None], graph.self_logp, graph.adv_logp)
    slots = paths[0]
    state_ids = np.asarray(graph.slot_state_ids)[slots]
    return AlignResult(slots=slots, state_ids=state_ids,
                       log_likelihood=float(ll[0]))


@dataclass
class HmmTopology:
    num_states: int = 3
    num_components: int = 5
    max_rounds: int = 20
    round_tol: float = 1e-4
    gmm_max_iter: int = 100
    gmm_refit_iter: int = 10
    variance_floor: float = VARIANCE_FLOOR
    transition_floor: float = 1e-8
    initial_flank_fraction: float = 0.15
    rng_seed: int = 0


@dataclass
class HmmSet:
    units: dict[str, HmmModel]
    na: HmmModel
    state_space: StateSpace
    topology: HmmTopology

    def state_models(self) -> dict[int, GmmParams]:
        models = {self.state_space.na_id(): self.na.state_gmms[0]}
        for unit, model in self.units.items():
            for i, sid in enumerate(self.state_space.unit_state_ids(unit)):
                models[sid] = model.state_gmms[i]
        return models

    def graph_for(self, unit: str, num_frames: int) -> LabelGraph:
        return make_label_graph(
            unit, num_frames, self.units[unit], self.na, self.state_space
        )


@dataclass
class HmmTrainResult:
    hmm_set: HmmSet
    alignments: dict[str, list[np.ndarray]]  # class -> per-sequence state ids
    round_log_likelihoods: list[float] = field(default_factory=list)


def _initial_alignment(t: int, num_states: int, flank: float) -> np.ndarray:
    """Uniform segmentation: flanks then an even split of the middle."""
    na_len = max(1, int(np.floor(flank * t + 0.5)))
    na_len = min(na_len, (t - num_states) // 2)
    na_len = max(1, na_len)
    middle = t - 2 * na_len
    lengths = [na_len]
    base, extra = divmod(middle, num_states)
    for j in range(num_states):
        lengths.append(base + (1 if j < extra else 0))
    lengths.append(na_len)
    slots = np.repeat(np.arange(num_states + 2), lengths)
    return slots


def _fit_state_gmm(x, k, seed, init, max_iter, variance_floor):
    """State-level GMM estimate; closed-form single Gaussian on tiny data."""
    n = x.shape[0]
    k_eff = max(1, min(k, n // 10))
    if init is not None and init.num_components <= n // 10:
        k_eff = init.num_components
    if k_eff == 1:
        mean = x.mean(axis=0, keepdims=True)
        var = np.maximum(x.var(axis=0, keepdims=True), variance_floor)
        return GmmParams(np.ones(1), mean, var)
    warm = init if (init is not None and init.num_components == k_eff) else None
    result = gmm_em_fit(
        x, k_eff, seed=seed, max_iter=max_iter,
        variance_floor=variance_floor, init=warm,
    )
    return result.params


def _transition_counts(alignment_lists, state_ids_to_slots=None):
    """Self/advance pair counts per composed-state id."""
    self_counts = {}
    adv_counts = {}
    for states in alignment_lists:
        for a, b in zip(states[:-1], states[1:]):
            if a == b:
                self_counts[a] = self_counts.get(a, 0) + 1
            else:
                adv_counts[a] = adv_counts.get(a, 0) + 1
    return self_counts, adv_counts


def hmm_train(
    sequences_by_class: dict[str, list[np.ndarray]],
    topology: HmmTopology | None = None,
) -> HmmTrainResult:
    """Viterbi-style training of one unit model per class plus shared na."""
    topo = topology or HmmTopology()
    classes = sorted(sequences_by_class)
    if not classes:
        raise InsufficientDataError("no training classes")
    seqs = {}
    for label in classes:
        arrs = [np.asarray(s, dtype=np.float64) for s in sequences_by_class[label]]
        if len(arrs) < 2:
            raise InsufficientDataError(
                f"class {label!r} has {len(arrs)} sequences; need >= 2"
            )
        for arr in arrs:
            if arr.ndim != 2:
                raise ValueError("sequences must be [T, d] matrices")
            if arr.shape[0] < topo.num_states + 2:
                raise SequenceTooShortError(
                    f"sequence of {arr.shape[0]} frames cannot cover "
                    f"{topo.num_states + 2} slots"
                )
        seqs[label] = arrs

    space = StateSpace(units=tuple(classes), states_per_unit=topo.num_states)
    alignments = {
        label: [
            np.asarray(
                [space.na_id()]
                + space.unit_state_ids(label)
                + [space.na_id()]
            )[_initial_alignment(len(s), topo.num_states, topo.initial_flank_fraction)]
            for s in seqs[label]
        ]
        for label in classes
    }

    gmms: dict[int, GmmParams] = {}
    history: list[float] = []
    units: dict[str, HmmModel] = {}
    na_model: HmmModel | None = None

    for round_idx in range(topo.max_rounds):
        # 1. emission re-estimation on the currently assigned frames
        frames_per_state: dict[int, list[np.ndarray]] = {}
        for label in classes:
            for seq, states in zip(seqs[label], alignments[label]):
                for sid in np.unique(states):
                    frames_per_state.setdefault(int(sid), []).append(
                        seq[states == sid]
                    )
        for sid, chunks in sorted(frames_per_state.items()):
            x = np.concatenate(chunks, axis=0)
            gmms[sid] = _fit_state_gmm(
                x, topo.num_components,
                seed=topo.rng_seed + sid,
                init=gmms.get(sid),
                max_iter=(topo.gmm_max_iter if round_idx == 0
                          else topo.gmm_refit_iter),
                variance_floor=topo.variance_floor,
            )

        # 2. transition re-estimation from path counts
        flat = [a for label in classes for a in alignments[label]]
        self_counts, adv_counts = _transition_counts(flat)

        def self_prob(sid):
            s = self_counts.get(sid, 0)
            a = adv_counts.get(sid, 0)
            return s / (s + a) if (s + a) else 0.5

        na_model = HmmModel(
            unit_id=NON_ACTIVITY,
            num_states=1,
            log_transitions=transitions_from_self_probs(
                [self_prob(space.na_id())], topo.transition_floor
            ),
            state_gmms=[gmms[space.na_id()]],
        )
        units = {}
        for label in classes:
            ids = space.unit_state_ids(label)
            units[label] = HmmModel(
                unit_id=label,
                num_states=topo.num_states,
                log_transitions=transitions_from_self_probs(
                    [self_prob(sid) for sid in ids], topo.transition_floor
                ),
                state_gmms=[gmms[sid] for sid in ids],
            )

        # 3. realign and score
        hmm_set = HmmSet(units=units, na=na_model, state_space=space,
                         topology=topo)
        models = hmm_set.state_models()
        total_ll = 0.0
        for label in classes:
            by_len: dict[int, list[int]] = {}
            for i, seq in enumerate(seqs[label]):
                by_len.setdefault(seq.shape[0], []).append(i)
            for t_len, idxs in sorted(by_len.items()):
                graph = hmm_set.graph_for(label, t_len)
                stacked = np.stack([seqs[label][i] for i in idxs])
                flat_frames = stacked.reshape(-1, stacked.shape[2])
                per_state = {
                    sid: models[sid].log_prob(flat_frames).reshape(len(idxs), t_len)
                    for sid in set(graph.slot_state_ids)
                }
                emis = np.stack(
                    [per_state[sid] for sid in graph.slot_state_ids], axis=2
                )
                paths, lls = _viterbi_batch(emis, graph.self_logp, graph.adv_logp)
                slot_ids = np.asarray(graph.slot_state_ids)
                for row, i in enumerate(idxs):
                    alignments[label][i] = slot_ids[paths[row]]
                total_ll += float(lls.sum())
        history.append(total_ll)
        if round_idx > 0 and history[-1] - history[-2] < topo.round_tol:
            break

    hmm_set = HmmSet(units=units, na=na_model, state_space=space, topology=topo)
    return HmmTrainResult(
        hmm_set=hmm_set,
        alignments=alignments,
        round_log_likelihoods=history,
    )


def hmm_classify(hmm_set: HmmSet, frames):
    """(label, per-class log-likelihoods); ties go lexicographically."""
    frames = np.asarray(frames, dtype=np.float64)
    scores = {}
    for label in sorted(hmm_set.units):
        graph = hmm_set.graph_for(label, frames.shape[0])
        scores[label] = viterbi_align(
            hmm_set.state_models(), graph, frames
        ).log_likelihood
    best = max(scores.values())
    label = min(l for l, s in scores.items() if s == best)
    return label, scores


class GmmHmmClassifier(BaseEstimator, ClassifierMixin):
    """Sequence classifier over composed label graphs.

    ``fit(X, y)`` takes a list of [T, d] frame sequences with one label per
    sequence; ``predict`` scores every class hypothesis by Viterbi.
    """

    def __init__(
        self,
        num_states=3,
        num_components=5,
        max_rounds=20,
        round_tol=1e-4,
        gmm_max_iter=100,
        gmm_refit_iter=10,
        variance_floor=VARIANCE_FLOOR,
        transition_floor=1e-8,
        random_state=0,
    ):
        self.num_states = num_states
        self.num_components = num_components
        self.max_rounds = max_rounds
        self.round_tol = round_tol
        self.gmm_max_iter = gmm_max_iter
        self.gmm_refit_iter = gmm_refit_iter
        self.variance_floor = variance_floor
        self.transition_floor = transition_floor
        self.random_state = random_state

    def _topology(self):
        return HmmTopology(
            num_states=self.num_states,
            num_components=self.num_components,
            max_rounds=self.max_rounds,
            round_tol=self.round_tol,
            gmm_max_iter=self.gmm_max_iter,
            gmm_refit_iter=self.gmm_refit_iter,
            variance_floor=self.variance_floor,
            transition_floor=self.transition_floor,
            rng_seed=self.random_state,
        )

    def fit(self, X, y):
        by_class: dict[str, list[np.ndarray]] = {}
        for seq, label in zip(X, y):
            by_class.setdefault(str(label), []).append(np.asarray(seq))
        result = hmm_train(by_class, self._topology())
        self.hmm_set_ = result.hmm_set
        self.classes_ = np.asarray(sorted(by_class))
        self.train_result_ = result
        return self

    def decision_scores(self, X):
        """[N, n_classes] Viterbi log-likelihood matrix."""
        labels = list(self.classes_)
        models = self.hmm_set_.state_models()
        out = np.empty((len(X), len(labels)))
        by_len: dict[int, list[int]] = {}
        arrs = [np.asarray(seq, dtype=np.float64) for seq in X]
        for i, seq in enumerate(arrs):
            by_len.setdefault(seq.shape[0], []).append(i)
        for t_len, idxs in sorted(by_len.items()):
            stacked = np.stack([arrs[i] for i in idxs])
            flat = stacked.reshape(-1, stacked.shape[2])
            for j, label in enumerate(labels):
                graph = self.hmm_set_.graph_for(label, t_len)
                per_state = {
                    sid: models[sid].log_prob(flat).reshape(len(idxs), t_len)
                    for sid in set(graph.slot_state_ids)
                }
                emis = np.stack(
                    [per_state[sid] for sid in graph.slot_state_ids], axis=2
                )
                _, lls = _viterbi_batch(emis, graph.self_logp, graph.adv_logp)
                out[idxs, j] = lls
        return out

    def predict(self, X):
        scores = self.decision_scores(X)
        labels = list(self.classes_)
        out = []
        for row in scores:
            best = row.max()
            out.append(min(labels[j] for j in np.flatnonzero(row == best)))
        return np.asarray(out)

    def align(self, X, y):
        """Viterbi state-id alignment of each sequence under its true class."""
        models = self.hmm_set_.state_models()
        out = []
        for seq, label in zip(X, y):
            seq = np.asarray(seq, dtype=np.float64)
            graph = self.hmm_set_.graph_for(str(label), seq.shape[0])
            out.append(viterbi_align(models, graph, seq).state_ids)
        return out
