"""Multi-phasal EEG pipeline.

Windowed statistical features from multi-phasal EEG recordings feed a
bi-phasal correlation network whose shared-layer (or reconstruction)
projections are classified with GMM-HMM and hybrid DNN classifiers under
leave-one-subject-out evaluation.  A deterministic synthetic corpus
generator stands in for non-redistributable recordings.
"""

from .corrnet import CorrNet, LossWeights, TrainConfig
from .errors import (
    ChannelNotFoundError,
    InsufficientBatchError,
    InsufficientDataError,
    InstanceNotFoundError,
    SegmentTooShortError,
    SequenceTooShortError,
)
from .features import (
    FrameNormalizer,
    PrimaryFeatureExtractor,
    PrimaryFeatureTensor,
    SplicedFrameSequence,
    WindowPlan,
)
from .preprocessing import EegPreprocessor
from .dnn import HybridDnnHmmClassifier
from .hmm import GmmHmmClassifier
from .synth import SynthConfig
from .types import (
    ChannelSelection,
    DEFAULT_ANALYSIS_CHANNELS,
    PhaseMarker,
    PhaseSegment,
    RawRecording,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelNotFoundError",
    "ChannelSelection",
    "CorrNet",
    "DEFAULT_ANALYSIS_CHANNELS",
    "EegPreprocessor",
    "FrameNormalizer",
    "GmmHmmClassifier",
    "HybridDnnHmmClassifier",
    "InsufficientBatchError",
    "InsufficientDataError",
    "InstanceNotFoundError",
    "LossWeights",
    "PhaseMarker",
    "PhaseSegment",
    "PrimaryFeatureExtractor",
    "PrimaryFeatureTensor",
    "RawRecording",
    "SegmentTooShortError",
    "SequenceTooShortError",
    "SplicedFrameSequence",
    "SynthConfig",
    "TrainConfig",
    "WindowPlan",
]
