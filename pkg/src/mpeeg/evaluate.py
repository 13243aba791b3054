"""Leave-one-subject-out evaluation of the full pipeline.

For every held-out subject the harness re-fits normalization, the
correlation network (unless running the primary-feature baseline) and the
classifier on the remaining subjects only, then votes over the 11 per-trial
instances.  Several feature variants can be evaluated in one pass so they
share the per-fold network training:

    baseline  normalized spliced primary features (189-dim)
    hl        shared-layer projections (25-dim)
    rl        reconstruction projections (189-dim)
    joint     shared-layer projections with support input at decode
    oracle    bypasses the classifier; checks the harness itself
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig, task_label
from .container import read_trial_features
from .corrnet import train_corrnet, project
from .dnn import HybridDnnHmmClassifier
from .features import (
    apply_normalization,
    build_primary,
    fit_normalization,
    instance_ids,
    instance_tensor,
    splice_frames,
)
from .hmm import GmmHmmClassifier
from .preprocessing import preprocess_segment, slice_phases
from .types import ChannelSelection, RawRecording
from .voting import plurality_vote

logger = logging.getLogger(__name__)

VARIANTS = ("baseline", "hl", "rl", "joint", "oracle")

_PROJECTION_OF = {"hl": "hidden", "rl": "reconstruction", "joint": "joint"}
_VARIANT_STREAM = {"baseline": 10, "hl": 11, "rl": 12, "joint": 13}


@dataclass
class TrialFeatures:
    """Extracted per-trial features: {phase: [11, 63, W]}."""

    trial_id: str
    subject_id: str
    prompt: str
    instances: tuple[str, ...]
    phases: dict[str, np.ndarray]


def extract_trial_features(
    rec: RawRecording,
    trial_id: str,
    phases=("imagined", "spoken", "articulated"),
    low_hz: float = 1.0,
    high_hz: float = 50.0,
    selection: ChannelSelection | None = None,
) -> TrialFeatures:
    """Preprocess and window one recording into its 11-instance tensors."""
    selection = selection or ChannelSelection()
    per_phase = {}
    names = None
    for seg in slice_phases(rec):
        if seg.phase_kind not in phases:
            continue
        clean = preprocess_segment(seg, low_hz, high_hz, selection)
        tensor = build_primary(clean)
        per_phase[seg.phase_kind] = instance_tensor(tensor)
        names = tensor.channel_names
    if not per_phase:
        raise ValueError(f"trial {trial_id}: no phases of interest present")
    return TrialFeatures(
        trial_id=trial_id,
        subject_id=rec.subject_id,
        prompt=rec.prompt,
        instances=instance_ids(names),
        phases=per_phase,
    )


def load_corpus_features(cache_dir) -> list[TrialFeatures]:
    """Read every trial's feature cache from disk, sorted by trial id."""
    import os

    trials = []
    for trial_dir in list_trial_dirs_features(cache_dir):
        meta, per_phase = read_trial_features(trial_dir)
        trials.append(TrialFeatures(
            trial_id=os.path.basename(trial_dir),
            subject_id=meta["extraction"]["subject_id"],
            prompt=meta["extraction"]["prompt"],
            instances=tuple(meta["instances"]),
            phases=per_phase,
        ))
    return trials


def list_trial_dirs_features(cache_dir) -> list[str]:
    import os

    from .container import FEATURES_META_NAME

    if not os.path.isdir(cache_dir):
        raise FileNotFoundError(f"feature cache not found: {cache_dir}")
    out = []
    for name in sorted(os.listdir(cache_dir)):
        path = os.path.join(cache_dir, name)
        if os.path.isdir(path) and os.path.exists(
            os.path.join(path, FEATURES_META_NAME)
        ):
            out.append(path)
    return out


def _seed(base: int, *stream) -> int:
    return int(np.random.SeedSequence([base, *stream]).generate_state(1)[0])


def _spliced(tensor: np.ndarray) -> list[np.ndarray]:
    """[11, 63, W] -> 11 matrices of [W, 189]."""
    return [splice_frames(tensor[i].T) for i in range(tensor.shape[0])]


def make_classifier(cfg: ExperimentConfig, seed: int):
    if cfg.classifier == "dnn":
        dnn_cfg = cfg.dnn_config()
        return HybridDnnHmmClassifier(
            num_states=cfg.hmm_states,
            num_components=cfg.gmm_components,
            max_rounds=cfg.hmm_max_rounds,
            gmm_max_iter=cfg.gmm_max_iter,
            gmm_refit_iter=cfg.gmm_refit_iter,
            hidden_units=dnn_cfg.hidden_units,
            learning_rate=dnn_cfg.learning_rate,
            batch_size=dnn_cfg.batch_size,
            max_epochs=dnn_cfg.max_epochs,
            random_state=seed,
        )
    return GmmHmmClassifier(
        num_states=cfg.hmm_states,
        num_components=cfg.gmm_components,
        max_rounds=cfg.hmm_max_rounds,
        gmm_max_iter=cfg.gmm_max_iter,
        gmm_refit_iter=cfg.gmm_refit_iter,
        random_state=seed,
    )


def _predict_instances(classifier, sequences):
    """Per-instance labels and best-vs-runner-up margins."""
    scores = classifier.decision_scores(sequences)
    labels = list(classifier.classes_)
    pred, margins = [], []
    for row in scores:
        order = np.argsort(row)[::-1]
        best = row[order[0]]
        tied = [labels[j] for j in np.flatnonzero(row == best)]
        pred.append(min(tied))
        margin = float(best - row[order[1]]) if len(row) > 1 else 0.0
        margins.append(margin)
    return pred, margins


def evaluate_loso(
    trials: list[TrialFeatures],
    cfg: ExperimentConfig,
    variants=None,
    shuffle_seed=None,
) -> dict[str, dict]:
    """Run the LOSO protocol; returns one report dict per variant."""
    if variants is None:
        variants = ("baseline",) if cfg.baseline else (cfg.projection,)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}")
    needs_support = any(v in ("hl", "rl", "joint") for v in variants)
    if needs_support and cfg.baseline:
        raise ValueError(
            "projection variants need a support phase; support_phase is none"
        )

    trials = sorted(trials, key=lambda t: t.trial_id)
    labels = [task_label(cfg.task, t.prompt) for t in trials]
    if shuffle_seed is not None:
        rng = np.random.default_rng(shuffle_seed)
        labels = [labels[i] for i in rng.permutation(len(labels))]
    label_of = {t.trial_id: lab for t, lab in zip(trials, labels)}

    analysis = cfg.analysis_phase
    support = None if cfg.baseline else cfg.support_phase
    for t in trials:
        if analysis not in t.phases:
            raise ValueError(f"trial {t.trial_id}: no {analysis} features")
        if needs_support and support not in t.phases:
            raise ValueError(
                f"trial {t.trial_id}: missing support phase {support!r}"
            )

    frames_a = {t.trial_id: _spliced(t.phases[analysis]) for t in trials}
    frames_s = (
        {t.trial_id: _spliced(t.phases[support]) for t in trials}
        if needs_support else {}
    )

    subjects = sorted({t.subject_id for t in trials})
    if len(subjects) < 2:
        raise ValueError("LOSO needs at least 2 subjects")

    per_variant_folds = {v: {} for v in variants}
    per_variant_trials = {v: [] for v in variants}
    seed_manifest = {"base": cfg.seed, "corrnet": {}, "classifier": {}}

    for fold_idx, held_out in enumerate(subjects):
        train = [t for t in trials if t.subject_id != held_out]
        test = [t for t in trials if t.subject_id == held_out]
        if not test:
            logger.warning("subject %s has no trials; skipped", held_out)
            continue

        norm_a = fit_normalization(
            [f for t in train for f in frames_a[t.trial_id]]
        )
        na = {
            t.trial_id: [apply_normalization(norm_a, f)
                         for f in frames_a[t.trial_id]]
            for t in trials
        }
        ns = {}
        if needs_support:
            norm_s = fit_normalization(
                [f for t in train for f in frames_s[t.trial_id]]
            )
            ns = {
                t.trial_id: [apply_normalization(norm_s, f)
                             for f in frames_s[t.trial_id]]
                for t in trials
            }

        params = None
        if any(v in ("hl", "rl", "joint") for v in variants):
            corr_seed = _seed(cfg.seed, fold_idx, 1)
            seed_manifest["corrnet"][held_out] = corr_seed
            train_a = [f for t in train for f in na[t.trial_id]]
            train_s = [f for t in train for f in ns[t.trial_id]]
            params, _ = train_corrnet(
                train_a, train_s,
                cfg=cfg.train_config(seed=corr_seed),
                weights=cfg.loss_weights(),
            )

        for variant in variants:
            if variant == "oracle":
                correct = len(test)
                for t in test:
                    truth = label_of[t.trial_id]
                    decision = plurality_vote(
                        {iid: truth for iid in t.instances}
                    )
                    per_variant_trials[variant].append({
                        "trial_id": t.trial_id,
                        "subject": held_out,
                        "true_label": truth,
                        "predicted": decision.final_label,
                        "tally": decision.tally,
                        "tie_break": decision.tie_break,
                    })
                per_variant_folds[variant][held_out] = {
                    "accuracy": 1.0,
                    "correct": correct,
                    "num_trials": len(test),
                }
                continue

            def variant_features(trial_set):
                out = {}
                for t in trial_set:
                    tid = t.trial_id
                    if variant == "baseline":
                        out[tid] = na[tid]
                    elif variant == "hl":
                        out[tid] = project(params, na[tid], kind="hidden")
                    elif variant == "rl":
                        out[tid] = project(
                            params, na[tid], kind="reconstruction"
                        )
                    else:  # joint
                        out[tid] = project(
                            params, na[tid], ns[tid], kind="joint"
                        )
                return out

            feats_train = variant_features(train)
            feats_test = variant_features(test)
            # classifier inputs are standardised on the training fold so the
            # GMM stage sees comparable per-dimension scales in every variant
            feat_norm = fit_normalization(
                [seq for t in train for seq in feats_train[t.trial_id]]
            )
            feats_train = {
                tid: [apply_normalization(feat_norm, s) for s in seqs]
                for tid, seqs in feats_train.items()
            }
            feats_test = {
                tid: [apply_normalization(feat_norm, s) for s in seqs]
                for tid, seqs in feats_test.items()
            }

            clf_seed = _seed(cfg.seed, fold_idx, _VARIANT_STREAM[variant])
            seed_manifest["classifier"].setdefault(variant, {})[held_out] = (
                clf_seed
            )
            classifier = make_classifier(cfg, clf_seed)
            x_train = [seq for t in train for seq in feats_train[t.trial_id]]
            y_train = [label_of[t.trial_id]
                       for t in train for _ in t.instances]
            classifier.fit(x_train, y_train)

            x_test = [seq for t in test for seq in feats_test[t.trial_id]]
            pred, margins = _predict_instances(classifier, x_test)

            correct = 0
            cursor = 0
            for t in test:
                k = len(t.instances)
                inst_labels = dict(zip(t.instances, pred[cursor:cursor + k]))
                inst_margins = dict(zip(t.instances, margins[cursor:cursor + k]))
                cursor += k
                decision = plurality_vote(inst_labels, margins=inst_margins)
                truth = label_of[t.trial_id]
                correct += decision.final_label == truth
                per_variant_trials[variant].append({
                    "trial_id": t.trial_id,
                    "subject": held_out,
                    "true_label": truth,
                    "predicted": decision.final_label,
                    "tally": decision.tally,
                    "tie_break": decision.tie_break,
                })
            per_variant_folds[variant][held_out] = {
                "accuracy": correct / len(test),
                "correct": correct,
                "num_trials": len(test),
            }

    reports = {}
    for variant in variants:
        folds = per_variant_folds[variant]
        mean_acc = float(
            np.mean([f["accuracy"] for f in folds.values()])
        ) if folds else 0.0
        reports[variant] = {
            "variant": variant,
            "task": cfg.task,
            "classifier": cfg.classifier,
            "projection": None if variant in ("baseline", "oracle") else variant,
            "analysis_phase": analysis,
            "support_phase": support,
            "subjects": list(folds),
            "per_subject": folds,
            "mean_accuracy": mean_acc,
            "trials": per_variant_trials[variant],
            "config": cfg.to_dict(),
            "label_shuffle_seed": shuffle_seed,
            "seeds": seed_manifest,
        }
    return reports
