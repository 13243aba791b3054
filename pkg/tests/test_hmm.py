import itertools
import math

import numpy as np
import pytest

from mpeeg.errors import InsufficientDataError, SequenceTooShortError
from mpeeg.gmm import GmmParams
from mpeeg.hmm import (
    GmmHmmClassifier,
    HmmModel,
    HmmTopology,
    LabelGraph,
    NON_ACTIVITY,
    StateSpace,
    count_alignments,
    hmm_classify,
    hmm_train,
    make_label_graph,
    transitions_from_self_probs,
    viterbi_align,
)


def isotropic_gmm(mean, var=1.0):
    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    return GmmParams(
        weights=np.ones(1),
        means=mean[None, :],
        variances=np.full((1, mean.size), var),
    )


def simple_models(dim=1):
    """Non-activity near 0, three unit states at 3/6/9."""
    space = StateSpace(units=("u",), states_per_unit=3)
    models = {
        0: isotropic_gmm(np.zeros(dim)),
        1: isotropic_gmm(np.full(dim, 3.0)),
        2: isotropic_gmm(np.full(dim, 6.0)),
        3: isotropic_gmm(np.full(dim, 9.0)),
    }
    unit = HmmModel(
        unit_id="u", num_states=3,
        log_transitions=transitions_from_self_probs([0.5, 0.5, 0.5]),
        state_gmms=[models[1], models[2], models[3]],
    )
    na = HmmModel(
        unit_id=NON_ACTIVITY, num_states=1,
        log_transitions=transitions_from_self_probs([0.5]),
        state_gmms=[models[0]],
    )
    return space, models, unit, na


def brute_force_best(graph: LabelGraph, log_emis: np.ndarray):
    """Enumerate every monotone full-coverage path."""
    t_max, s = log_emis.shape
    best = -np.inf
    best_path = None
    for change_points in itertools.combinations(range(1, t_max), s - 1):
        bounds = (0,) + change_points + (t_max,)
        ll = 0.0
        path = []
        for slot in range(s):
            start, stop = bounds[slot], bounds[slot + 1]
            run = stop - start
            path.extend([slot] * run)
            ll += log_emis[start:stop, slot].sum()
            ll += (run - 1) * graph.self_logp[slot]
            if slot < s - 1:
                ll += graph.adv_logp[slot]
        if ll > best:
            best = ll
            best_path = path
    return best, np.asarray(best_path)


class TestLabelGraph:
    def test_minimum_frames_forced_path(self):
        space, models, unit, na = simple_models()
        graph = make_label_graph("u", 5, unit, na, space)
        assert graph.num_slots == 5
        assert graph.slot_state_ids == (0, 1, 2, 3, 0)
        emis = np.random.default_rng(0).standard_normal((5, 5))
        result = viterbi_align(models, graph, np.zeros((5, 1)))
        np.testing.assert_array_equal(result.slots, [0, 1, 2, 3, 4])

    def test_alignment_count_formula(self):
        assert count_alignments(19, 5) == math.comb(18, 4)
        assert count_alignments(19, 5) == 3060

    def test_alignment_count_matches_enumeration(self):
        for t, s in ((5, 5), (6, 5), (7, 5), (8, 4), (6, 3)):
            enumerated = sum(
                1 for _ in itertools.combinations(range(1, t), s - 1)
            )
            assert count_alignments(t, s) == enumerated

    def test_too_few_frames(self):
        space, models, unit, na = simple_models()
        with pytest.raises(SequenceTooShortError):
            make_label_graph("u", 4, unit, na, space)


class TestViterbi:
    def test_matches_brute_force(self):
        space, models, unit, na = simple_models(dim=2)
        rng = np.random.default_rng(1)
        for trial in range(50):
            t_len = rng.integers(5, 11)
            frames = rng.standard_normal((t_len, 2)) * 4.0
            graph = make_label_graph("u", t_len, unit, na, space)
            result = viterbi_align(models, graph, frames)
            emis = np.stack(
                [models[sid].log_prob(frames) for sid in graph.slot_state_ids],
                axis=1,
            )
            best, best_path = brute_force_best(graph, emis)
            assert result.log_likelihood == pytest.approx(best, abs=1e-9)
            np.testing.assert_array_equal(result.slots, best_path)

    def test_path_likelihood_decomposition(self):
        space, models, unit, na = simple_models()
        rng = np.random.default_rng(2)
        frames = rng.standard_normal((8, 1)) * 3.0
        graph = make_label_graph("u", 8, unit, na, space)
        result = viterbi_align(models, graph, frames)
        ll = 0.0
        for t, slot in enumerate(result.slots):
            sid = graph.slot_state_ids[slot]
            ll += float(models[sid].log_prob(frames[t:t + 1])[0])
            if t:
                prev = result.slots[t - 1]
                if slot == prev:
                    ll += graph.self_logp[slot]
                else:
                    ll += graph.adv_logp[prev]
        assert result.log_likelihood == pytest.approx(ll, abs=1e-9)

    def test_extension_bound(self):
        # appending a frame cannot raise the score by more than the best
        # single-step continuation
        space, models, unit, na = simple_models()
        rng = np.random.default_rng(3)
        frames = rng.standard_normal((9, 1))
        graph9 = make_label_graph("u", 9, unit, na, space)
        graph10 = make_label_graph("u", 10, unit, na, space)
        extended = np.concatenate([frames, frames[-1:]], axis=0)
        ll9 = viterbi_align(models, graph9, frames).log_likelihood
        ll10 = viterbi_align(models, graph10, extended).log_likelihood
        max_emis = max(
            float(models[sid].log_prob(frames[-1:])[0])
            for sid in set(graph9.slot_state_ids)
        )
        max_self = float(np.max(graph9.self_logp))
        assert ll10 <= ll9 + max_self + max_emis + 1e-9


def sample_hmm_sequences(rng, means, num_seqs, t_len=19, sigma=0.4,
                         flank=3, dim=2):
    """Ground-truth generator: na flanks then three states in order."""
    seqs = []
    for _ in range(num_seqs):
        mid = t_len - 2 * flank
        lengths = [flank]
        base, extra = divmod(mid, 3)
        lengths += [base + (1 if j < extra else 0) for j in range(3)]
        lengths += [flank]
        chunks = []
        for mean, run in zip([means[0], *means[1:4], means[0]], lengths):
            chunks.append(mean + sigma * rng.standard_normal((run, dim)))
        seqs.append(np.concatenate(chunks))
    return seqs


class TestHmmTrain:
    def test_recovers_separated_state_means(self):
        rng = np.random.default_rng(10)
        sigma = 0.4
        means = np.array([
            [0.0, 0.0],    # non-activity
            [4.0, 0.0],    # s1
            [0.0, 4.0],    # s2
            [-4.0, -4.0],  # s3
        ])
        seqs = sample_hmm_sequences(rng, means, num_seqs=40, sigma=sigma)
        result = hmm_train({"u": seqs}, HmmTopology(num_components=2,
                                                    rng_seed=0))
        unit = result.hmm_set.units["u"]
        for idx, true_mean in enumerate(means[1:4]):
            gmm = unit.state_gmms[idx]
            est = gmm.means.T @ gmm.weights
            assert np.linalg.norm(est - true_mean) < 0.5 * sigma * np.sqrt(2)

    def test_constant_frames_converge_quickly(self):
        seqs = [np.full((10, 2), 1.5) for _ in range(4)]
        result = hmm_train({"u": seqs}, HmmTopology(rng_seed=1))
        lls = result.round_log_likelihoods
        # stabilises within two re-estimation rounds of the initial fit
        assert len(lls) <= 3
        assert lls[-1] == pytest.approx(lls[-2], abs=1e-9)

    def test_monotone_round_likelihood(self):
        rng = np.random.default_rng(11)
        means = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [-2.0, 0.0]])
        seqs_a = sample_hmm_sequences(rng, means, num_seqs=25)
        seqs_b = sample_hmm_sequences(rng, means + 1.0, num_seqs=25)
        result = hmm_train({"a": seqs_a, "b": seqs_b},
                           HmmTopology(num_components=2, rng_seed=2))
        lls = np.asarray(result.round_log_likelihoods)
        assert len(lls) >= 2
        assert np.all(np.diff(lls) >= -1e-6)

    def test_alignments_cover_all_slots(self):
        rng = np.random.default_rng(12)
        means = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [-3.0, 0.0]])
        seqs = sample_hmm_sequences(rng, means, num_seqs=10)
        result = hmm_train({"u": seqs}, HmmTopology(rng_seed=3))
        for states in result.alignments["u"]:
            assert set(states) == {0, 1, 2, 3}

    def test_too_few_sequences(self):
        with pytest.raises(InsufficientDataError):
            hmm_train({"u": [np.zeros((10, 2))]}, HmmTopology())

    def test_too_short_sequence(self):
        with pytest.raises(SequenceTooShortError):
            hmm_train({"u": [np.zeros((4, 2)), np.zeros((4, 2))]},
                      HmmTopology())


class TestHmmClassify:
    def test_identical_models_tie_break(self):
        space = StateSpace(units=("a", "b"), states_per_unit=3)
        gmm = isotropic_gmm([0.0])
        trans = transitions_from_self_probs([0.5, 0.5, 0.5])
        unit_a = HmmModel("a", 3, trans, [gmm, gmm, gmm])
        unit_b = HmmModel("b", 3, trans.copy(), [gmm, gmm, gmm])
        na = HmmModel(NON_ACTIVITY, 1,
                      transitions_from_self_probs([0.5]), [gmm])
        from mpeeg.hmm import HmmSet

        hmm_set = HmmSet(units={"a": unit_a, "b": unit_b}, na=na,
                         state_space=space, topology=HmmTopology())
        label, scores = hmm_classify(hmm_set, np.zeros((8, 1)))
        assert scores["a"] == pytest.approx(scores["b"], abs=1e-12)
        assert label == "a"

    def test_monte_carlo_separable(self):
        rng = np.random.default_rng(13)
        means_0 = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [-3.0, 0.0]])
        means_1 = np.array([[0.0, 0.0], [0.0, -3.0], [3.0, 3.0], [0.0, 3.0]])
        train_0 = sample_hmm_sequences(rng, means_0, num_seqs=30)
        train_1 = sample_hmm_sequences(rng, means_1, num_seqs=30)
        clf = GmmHmmClassifier(num_components=2, random_state=0)
        clf.fit(train_0 + train_1, ["c0"] * 30 + ["c1"] * 30)
        test_0 = sample_hmm_sequences(rng, means_0, num_seqs=100)
        test_1 = sample_hmm_sequences(rng, means_1, num_seqs=100)
        pred = clf.predict(test_0 + test_1)
        truth = np.array(["c0"] * 100 + ["c1"] * 100)
        accuracy = float(np.mean(pred == truth))
        assert accuracy >= 0.95
        scores = clf.decision_scores(test_0[:5])
        margins = scores.max(axis=1) - np.sort(scores, axis=1)[:, -2]
        assert np.all(margins >= 0)

    def test_eleven_class_mode(self):
        rng = np.random.default_rng(14)
        labels = [f"u{i:02d}" for i in range(11)]
        train, y = [], []
        for i, label in enumerate(labels):
            angle = 2 * np.pi * i / 11
            shift = 4.0 * np.array([np.cos(angle), np.sin(angle)])
            means = np.array([[0.0, 0.0], shift, shift * 1.5, shift * 0.5])
            seqs = sample_hmm_sequences(rng, means, num_seqs=6)
            train.extend(seqs)
            y.extend([label] * 6)
        clf = GmmHmmClassifier(num_components=1, max_rounds=3, random_state=1)
        clf.fit(train, y)
        scores = clf.decision_scores(train[:3])
        assert scores.shape == (3, 11)

    def test_pure_function_isolation(self):
        # scoring one hypothesis does not perturb another's result
        space, models, unit, na = simple_models()
        rng = np.random.default_rng(15)
        frames = rng.standard_normal((9, 1))
        graph = make_label_graph("u", 9, unit, na, space)
        before = viterbi_align(models, graph, frames).log_likelihood
        _ = viterbi_align(models, graph, rng.standard_normal((9, 1)))
        after = viterbi_align(models, graph, frames).log_likelihood
        assert before == after
