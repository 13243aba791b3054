"""Exception types shared across the pipeline.

Plain ``ValueError`` is used for generic invalid-argument conditions; the
classes below name the failure modes that callers are expected to branch on.
"""


class SegmentTooShortError(ValueError):
    """Segment has too few samples for the requested operation."""


class ChannelNotFoundError(ValueError):
    """A requested channel label is not present in the segment."""

    def __init__(self, channel):
        super().__init__(f"channel not found: {channel!r}")
        self.channel = channel


class InstanceNotFoundError(ValueError):
    """A requested training-instance id does not exist."""

    def __init__(self, instance_id):
        super().__init__(f"unknown instance id: {instance_id!r}")
        self.instance_id = instance_id


class InsufficientDataError(ValueError):
    """Not enough samples, frames or sequences to fit or evaluate."""


class InsufficientBatchError(InsufficientDataError):
    """Batch statistics need at least two samples."""


class SequenceTooShortError(ValueError):
    """Frame sequence is shorter than the composed label graph."""
