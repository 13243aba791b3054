"""Experiment configuration: flat key=value files with CLI overrides.

The config format is a flat TOML-like text file: one ``key = value`` pair
per line, ``#`` comments, no sections.  Values are parsed as bool, int,
float or (optionally quoted) string.  Every key can also be overridden on
the command line as ``--key value``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .corrnet import LossWeights, TrainConfig
from .dnn import DnnConfig
from .hmm import HmmTopology
from .synth import PROMPTS_11, SynthConfig

#: Prompt membership of each binary phonological category.
PHONOLOGY_TASKS = {
    "bilabial": frozenset({"pat", "pot", "piy", "m"}),
    "nasal": frozenset({"knew", "gnaw", "m", "n"}),
    "uw": frozenset({"uw", "knew"}),
    "iy": frozenset({"iy", "piy", "tiy", "diy"}),
    # consonant-containing vs vowel-only prompts
    "cv": frozenset(set(PROMPTS_11) - {"iy", "uw"}),
}

TASKS = tuple(sorted(PHONOLOGY_TASKS)) + ("units11",)

PRESENT, ABSENT = "yes", "no"


def task_label(task: str, prompt: str) -> str:
    """Map a prompt to its label under a classification task."""
    if task == "units11":
        return prompt
    if task not in PHONOLOGY_TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    return PRESENT if prompt in PHONOLOGY_TASKS[task] else ABSENT


@dataclass
class ExperimentConfig:
    # experiment
    corpus: str = "corpus"
    out: str = "out"
    analysis_phase: str = "imagined"
    support_phase: str = "spoken"  # spoken | articulated | none
    projection: str = "hl"         # hl | rl | joint
    classifier: str = "gmm-hmm"    # gmm-hmm | dnn
    task: str = "cv"
    seed: int = 0
    # corrnet loss weights and training
    alpha: float = 1.5
    beta: float = 0.5
    gamma: float = 1.0
    lam: float = 2.5
    batch_size: int = 256
    learning_rate: float = 0.005
    lr_decay_factor: float = 0.5
    plateau_patience: int = 5
    max_epochs: int = 50
    min_learning_rate: float = 1e-5
    validation_fraction: float = 0.10
    # classifier stage
    hmm_states: int = 3
    gmm_components: int = 5
    hmm_max_rounds: int = 20
    gmm_max_iter: int = 100
    gmm_refit_iter: int = 10
    dnn_hidden: str = "128,128"
    dnn_epochs: int = 30
    dnn_learning_rate: float = 1e-3
    dnn_batch_size: int = 256
    # synthetic corpus
    num_subjects: int = 8
    trials_per_class: int = 6
    class_set: str = "binary"
    sampling_rate: float = 1000.0
    segment_seconds: float = 5.0
    rest_seconds: float = 1.0
    spoken_seconds_min: float = 3.0
    spoken_seconds_max: float = 4.5
    latent_dim: int = 6
    noise_sigma: float = 1.0
    coupling: float = 0.8
    subject_scale: float = 0.15
    class_separation: float = 1.0
    shared_mixing: bool = False
    lag_spoken: int = 40
    lag_articulated: int = 80

    def __post_init__(self):
        if self.support_phase not in ("spoken", "articulated", "none"):
            raise ValueError(f"bad support_phase: {self.support_phase!r}")
        if self.analysis_phase not in ("imagined", "spoken", "articulated"):
            raise ValueError(f"bad analysis_phase: {self.analysis_phase!r}")
        if self.projection not in ("hl", "rl", "joint"):
            raise ValueError(f"bad projection: {self.projection!r}")
        if self.classifier not in ("gmm-hmm", "dnn"):
            raise ValueError(f"bad classifier: {self.classifier!r}")
        if self.task not in TASKS:
            raise ValueError(f"bad task: {self.task!r}; expected {TASKS}")

    @property
    def baseline(self) -> bool:
        return self.support_phase == "none"

    def loss_weights(self) -> LossWeights:
        return LossWeights(self.alpha, self.beta, self.gamma, self.lam)

    def train_config(self, seed=None) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay_factor=self.lr_decay_factor,
            plateau_patience=self.plateau_patience,
            min_learning_rate=self.min_learning_rate,
            max_epochs=self.max_epochs,
            validation_fraction=self.validation_fraction,
            rng_seed=self.seed if seed is None else seed,
        )

    def hmm_topology(self, seed=None) -> HmmTopology:
        return HmmTopology(
            num_states=self.hmm_states,
            num_components=self.gmm_components,
            max_rounds=self.hmm_max_rounds,
            gmm_max_iter=self.gmm_max_iter,
            gmm_refit_iter=self.gmm_refit_iter,
            rng_seed=self.seed if seed is None else seed,
        )

    def dnn_config(self, seed=None) -> DnnConfig:
        hidden = tuple(
            int(v) for v in str(self.dnn_hidden).split(",") if v.strip()
        )
        return DnnConfig(
            hidden_units=hidden,
            learning_rate=self.dnn_learning_rate,
            batch_size=self.dnn_batch_size,
            max_epochs=self.dnn_epochs,
            rng_seed=self.seed if seed is None else seed,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            num_subjects=self.num_subjects,
            trials_per_class=self.trials_per_class,
            class_set=self.class_set,
            sampling_rate=self.sampling_rate,
            segment_seconds=self.segment_seconds,
            rest_seconds=self.rest_seconds,
            spoken_seconds_range=(self.spoken_seconds_min, self.spoken_seconds_max),
            latent_dim=self.latent_dim,
            noise_sigma=self.noise_sigma,
            cross_phase_coupling=self.coupling,
            subject_scale=self.subject_scale,
            class_separation=self.class_separation,
            shared_mixing=self.shared_mixing,
            lag_spoken=self.lag_spoken,
            lag_articulated=self.lag_articulated,
            rng_seed=self.seed,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}
CONFIG_KEYS = tuple(
    "lambda" if f.name == "lam" else f.name for f in fields(ExperimentConfig)
)


def _parse_value(key: str, raw):
    if isinstance(raw, (bool, int, float)):
        return raw
    text = str(raw).strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if (text.startswith('"') and text.endswith('"')) or (
        text.startswith("'") and text.endswith("'")
    ):
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def config_from_mapping(mapping) -> ExperimentConfig:
    kwargs = {}
    for key, raw in mapping.items():
        name = "lam" if key == "lambda" else key
        if name not in _FIELD_TYPES:
            raise ValueError(f"unknown config key: {key!r}")
        kwargs[name] = _parse_value(key, raw)
    return ExperimentConfig(**kwargs)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment."""
    mapping = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


def load_config(path=None, overrides=None) -> ExperimentConfig:
    mapping = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            mapping.update(parse_config_text(fh.read()))
    for key, value in (overrides or {}).items():
        if value is not None:
            mapping[key] = value
    return config_from_mapping(mapping)
