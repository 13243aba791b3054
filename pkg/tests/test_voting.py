import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpeeg.features import CHANNEL_AVERAGE
from mpeeg.voting import NUM_INSTANCES, plurality_vote

CHANNELS = [f"ch{i}" for i in range(10)]
IDS = CHANNELS + [CHANNEL_AVERAGE]


def vote(labels):
    return plurality_vote(dict(zip(IDS, labels)))


class TestPluralityVote:
    def test_simple_majority(self):
        decision = vote(["yes"] * 6 + ["no"] * 5)
        assert decision.final_label == "yes"
        assert decision.tally == {"no": 5, "yes": 6}
        assert decision.tie_break == "modal"

    def test_channel_average_breaks_ties(self):
        # 5/5 tie between yes/no plus a third label on the average instance
        labels = ["yes"] * 5 + ["no"] * 5 + ["no"]
        decision = vote(labels)
        assert decision.tally["yes"] == 5 and decision.tally["no"] == 6
        # force an actual tie with the average voting for one side
        labels = ["yes"] * 5 + ["no"] * 4 + ["zz"] + ["no"]
        decision = vote(labels)
        assert decision.final_label == "no"

    def test_lexicographic_fallback(self):
        # average votes a third label not among the tied pair
        labels = ["b"] * 5 + ["a"] * 5 + ["c"]
        decision = vote(labels)
        assert decision.final_label == "a"
        assert decision.tie_break == "lexicographic"

    def test_unanimous(self):
        decision = vote(["m"] * 11)
        assert decision.final_label == "m"
        assert decision.tally == {"m": 11}

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            plurality_vote({f"ch{i}": "x" for i in range(11)})
        with pytest.raises(ValueError):
            plurality_vote({"ch0": "x", CHANNEL_AVERAGE: "x"})

    def test_exhaustive_three_label_multisets(self):
        # every multiset of 11 votes from {a, b, c}, with every choice of
        # the channel-average instance's label
        alphabet = ("a", "b", "c")
        seen = 0
        for counts in itertools.product(range(12), repeat=2):
            na, nb = counts
            nc = 11 - na - nb
            if nc < 0:
                continue
            labels = ["a"] * na + ["b"] * nb + ["c"] * nc
            for avg_label in sorted(set(labels)):
                rest = list(labels)
                rest.remove(avg_label)
                decision = vote(rest + [avg_label])
                seen += 1
                tally = Counter(labels)
                top = max(tally.values())
                tied = sorted(l for l, c in tally.items() if c == top)
                # final label always carries a maximal tally
                assert tally[decision.final_label] == top
                if len(tied) == 1:
                    assert decision.final_label == tied[0]
                elif avg_label in tied:
                    assert decision.final_label == avg_label
                else:
                    assert decision.final_label == tied[0]
        assert seen > 78  # all multisets, most with several average choices

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from(["x", "y", "z", "w"]),
                    min_size=11, max_size=11))
    def test_final_label_has_maximal_tally(self, labels):
        decision = vote(labels)
        assert decision.tally[decision.final_label] == max(
            decision.tally.values()
        )
