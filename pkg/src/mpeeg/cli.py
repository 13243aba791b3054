"""Command-line pipeline driver.

Verbs: ``synth``, ``features``, ``train``, ``evaluate``, ``topomap``.
Every experiment-config key is exposed as a ``--key value`` override on top
of an optional ``--config`` file.  Exit codes: 0 success, 1 runtime failure,
2 usage error.  Set ``MPEEG_LOG_LEVEL`` to control log verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import container
from .config import CONFIG_KEYS, ExperimentConfig, load_config, task_label
from .corrnet import save_corrnet, train_corrnet, project
from .errors import SegmentTooShortError
from .evaluate import (
    TrialFeatures,
    evaluate_loso,
    extract_trial_features,
    load_corpus_features,
    make_classifier,
    _seed,
)
from .features import apply_normalization, fit_normalization
from .models_io import (
    ALIGNMENTS_NAME,
    DNN_NAME,
    save_alignments,
    save_dnn,
    save_hmmset,
    save_jsonl,
)
from .synth import generate
from .topomap import render_topomap_svg, trial_averaged_values

logger = logging.getLogger(__name__)


def _add_config_overrides(parser):
    group = parser.add_argument_group("config overrides")
    for key in CONFIG_KEYS:
        if key == "seed":
            continue  # --seed is declared per command with an int type
        group.add_argument(
            f"--{key}", dest=f"cfg_{key}", metavar="V", default=None
        )


def _collect_config(args) -> ExperimentConfig:
    overrides = {}
    for key in CONFIG_KEYS:
        if key == "seed":
            continue
        value = getattr(args, f"cfg_{key}", None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out"] = args.out
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpeeg",
        description="Multi-phasal EEG pipeline: synthesis, features, "
        "correlation-network training, LOSO evaluation, topomaps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--seed", type=int, help="override the base RNG seed")
        p.add_argument("--out", help="output directory (or file for topomap)")
        _add_config_overrides(p)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    common(p)

    p = sub.add_parser("features", help="extract per-trial feature caches")
    common(p)
    p.add_argument("--keep-going", action="store_true",
                   help="continue past malformed trials")

    p = sub.add_parser("train", help="train models on the full corpus")
    common(p)
    p.add_argument("--features", dest="features_dir",
                   help="feature cache directory (default: <out>/features)")

    p = sub.add_parser("evaluate", help="leave-one-subject-out evaluation")
    common(p)
    p.add_argument("--features", dest="features_dir",
                   help="feature cache directory")
    p.add_argument("--oracle", action="store_true",
                   help="harness self-check: an oracle classifier")

    p = sub.add_parser("topomap", help="emit a trial-averaged scalp map SVG")
    common(p)
    p.add_argument("--prompt", required=True)
    p.add_argument("--phase", required=True)
    return parser


def cmd_synth(args) -> int:
    cfg = _collect_config(args)
    corpus_dir = args.out or cfg.corpus
    recordings = generate(cfg.synth_config())
    manifest = container.write_corpus(
        recordings, corpus_dir, cfg.to_dict()
    )
    print(manifest)
    return 0


def _feature_phases(cfg: ExperimentConfig):
    phases = {cfg.analysis_phase}
    if not cfg.baseline:
        phases.add(cfg.support_phase)
    # caching all activity phases keeps one cache reusable across configs
    phases.update(("imagined", "spoken", "articulated"))
    return tuple(sorted(phases))


def cmd_features(args) -> int:
    cfg = _collect_config(args)
    corpus_dir = cfg.corpus
    out_dir = args.out or os.path.join(cfg.out, "features")
    trial_dirs = container.list_trial_dirs(corpus_dir)
    if not trial_dirs:
        raise FileNotFoundError(f"no trials found in {corpus_dir}")
    phases = _feature_phases(cfg)
    failures = []
    for trial_dir in trial_dirs:
        name = os.path.basename(trial_dir)
        try:
            rec = container.read_trial(trial_dir)
            feats = extract_trial_features(rec, trial_id=name, phases=phases)
            container.write_trial_features(
                os.path.join(out_dir, name),
                feats.phases,
                feats.instances,
                extraction={
                    "subject_id": feats.subject_id,
                    "prompt": feats.prompt,
                    "sampling_rate": rec.sampling_rate,
                    "band_hz": [1.0, 50.0],
                },
            )
            shapes = {
                phase: list(feats.phases[phase].shape)
                for phase in sorted(feats.phases)
            }
            print(f"{name}: {shapes}")
        except (ValueError, OSError, SegmentTooShortError) as exc:
            if not args.keep_going:
                raise
            failures.append(name)
            print(f"{name}: FAILED ({exc})", file=sys.stderr)
    if failures:
        print(f"{len(failures)} trial(s) failed", file=sys.stderr)
        return 1
    return 0


def _load_features_for(args, cfg) -> list[TrialFeatures]:
    cache = getattr(args, "features_dir", None) or os.path.join(
        cfg.out, "features"
    )
    return load_corpus_features(cache)


def cmd_train(args) -> int:
    cfg = _collect_config(args)
    trials = _load_features_for(args, cfg)
    out_dir = args.out or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    trials = sorted(trials, key=lambda t: t.trial_id)
    labels = {t.trial_id: task_label(cfg.task, t.prompt) for t in trials}

    from .evaluate import _spliced

    frames_a = {t.trial_id: _spliced(t.phases[cfg.analysis_phase])
                for t in trials}
    norm_a = fit_normalization(
        [f for t in trials for f in frames_a[t.trial_id]]
    )
    na = {tid: [apply_normalization(norm_a, f) for f in seqs]
          for tid, seqs in frames_a.items()}
    save_jsonl(os.path.join(out_dir, "normalization.jsonl"), [{
        "phase": cfg.analysis_phase,
        "mean": norm_a.mean.tolist(),
        "std": norm_a.std.tolist(),
    }])

    if cfg.baseline:
        feats = na
    else:
        for t in trials:
            if cfg.support_phase not in t.phases:
                raise ValueError(
                    f"trial {t.trial_id}: missing support phase "
                    f"{cfg.support_phase!r} in the feature cache"
                )
        frames_s = {t.trial_id: _spliced(t.phases[cfg.support_phase])
                    for t in trials}
        norm_s = fit_normalization(
            [f for t in trials for f in frames_s[t.trial_id]]
        )
        ns = {tid: [apply_normalization(norm_s, f) for f in seqs]
              for tid, seqs in frames_s.items()}
        corr_seed = _seed(cfg.seed, 0, 1)
        params, log = train_corrnet(
            [f for t in trials for f in na[t.trial_id]],
            [f for t in trials for f in ns[t.trial_id]],
            cfg=cfg.train_config(seed=corr_seed),
            weights=cfg.loss_weights(),
        )
        save_corrnet(os.path.join(out_dir, "corrnet.bin"), params,
                     cfg.loss_weights(), corr_seed)
        save_jsonl(os.path.join(out_dir, "training_log.jsonl"), log)
        kind = {"hl": "hidden", "rl": "reconstruction", "joint": "joint"}[
            cfg.projection
        ]
        feats = {}
        for t in trials:
            tid = t.trial_id
            support = ns[tid] if cfg.projection == "joint" else None
            feats[tid] = project(params, na[tid], support, kind=kind)
            proj_dir = os.path.join(out_dir, "projected", tid)
            os.makedirs(proj_dir, exist_ok=True)
            stacked = np.ascontiguousarray(
                np.stack(feats[tid]), dtype="<f4"
            )
            with open(os.path.join(proj_dir, "projected.f32le"), "wb") as fh:
                fh.write(stacked.tobytes())
            container.dump_json(os.path.join(proj_dir, "projected.json"), {
                "shape": list(stacked.shape),
                "projection": cfg.projection,
                "instances": list(t.instances),
            })

    clf_seed = _seed(cfg.seed, 0, 2)
    classifier = make_classifier(cfg, clf_seed)
    x_train = [seq for t in trials for seq in feats[t.trial_id]]
    y_train = [labels[t.trial_id] for t in trials for _ in t.instances]
    classifier.fit(x_train, y_train)

    aligner = getattr(classifier, "aligner_", classifier)
    save_hmmset(out_dir, aligner.hmm_set_)
    alignment_records = []
    cursor = 0
    alignments = aligner.align(x_train, y_train)
    for t in trials:
        for instance in t.instances:
            alignment_records.append(
                (t.trial_id, instance, alignments[cursor])
            )
            cursor += 1
    save_alignments(os.path.join(out_dir, ALIGNMENTS_NAME), alignment_records)
    if cfg.classifier == "dnn":
        save_dnn(os.path.join(out_dir, DNN_NAME), classifier.dnn_)
        save_jsonl(os.path.join(out_dir, "dnn_log.jsonl"), classifier.log_)
    print(out_dir)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _collect_config(args)
    trials = _load_features_for(args, cfg)
    out_dir = args.out or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    if args.oracle:
        variants = ("oracle",)
    elif cfg.baseline:
        variants = ("baseline",)
    else:
        variants = (cfg.projection,)
    reports = evaluate_loso(trials, cfg, variants=variants)
    report = reports[variants[0]]
    container.dump_json(os.path.join(out_dir, "report.json"), report)

    mode = report["variant"]
    support = report["support_phase"] or "-"
    print(f"task={report['task']} variant={mode} classifier="
          f"{report['classifier']} support={support}")
    for subject in report["subjects"]:
        fold = report["per_subject"][subject]
        print(f"  {subject}: {100 * fold['accuracy']:6.2f}% "
              f"({fold['correct']}/{fold['num_trials']})")
    print(f"  mean: {100 * report['mean_accuracy']:6.2f}%")
    return 0


def cmd_topomap(args) -> int:
    cfg = _collect_config(args)
    out_path = args.out or os.path.join(cfg.out, "topomap.svg")
    trial_dirs = container.list_trial_dirs(cfg.corpus)
    if not trial_dirs:
        raise FileNotFoundError(f"no trials found in {cfg.corpus}")
    recordings = [container.read_trial(d) for d in trial_dirs]
    values = trial_averaged_values(recordings, args.prompt, args.phase)
    svg = render_topomap_svg(
        values, title=f"{args.prompt} / {args.phase} (mean |amplitude|)"
    )
    parent = os.path.dirname(out_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(svg)
    print(out_path)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "features": cmd_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "topomap": cmd_topomap,
}


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MPEEG_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
