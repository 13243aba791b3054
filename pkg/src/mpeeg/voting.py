"""Plurality voting across the 11 per-trial classification instances."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .features import CHANNEL_AVERAGE

NUM_INSTANCES = 11


@dataclass
class TrialDecision:
    instance_labels: dict[str, str]
    tally: dict[str, int]
    final_label: str
    tie_break: str  # "modal" | "channel-average" | "lexicographic"
    margins: dict[str, float] = field(default_factory=dict)


def plurality_vote(instance_labels, margins=None) -> TrialDecision:
    """Vote over exactly 11 instance labels.

    Ties break to the channel-average instance's label when it is among the
    tied labels, otherwise to the lexicographically smallest tied label.
    """
    instance_labels = dict(instance_labels)
    if len(instance_labels) != NUM_INSTANCES:
        raise ValueError(
            f"expected {NUM_INSTANCES} instance labels, got {len(instance_labels)}"
        )
    if CHANNEL_AVERAGE not in instance_labels:
        raise ValueError(f"missing the {CHANNEL_AVERAGE!r} instance")
    tally = Counter(instance_labels.values())
    top = max(tally.values())
    tied = sorted(label for label, count in tally.items() if count == top)
    if len(tied) == 1:
        final, rule = tied[0], "modal"
    elif instance_labels[CHANNEL_AVERAGE] in tied:
        final, rule = instance_labels[CHANNEL_AVERAGE], "channel-average"
    else:
        final, rule = tied[0], "lexicographic"
    return TrialDecision(
        instance_labels=instance_labels,
        tally=dict(sorted(tally.items())),
        final_label=final,
        tie_break=rule,
        margins=dict(margins or {}),
    )
