import numpy as np
import pytest

from mpeeg.dnn import (
    DnnConfig,
    HybridDnnHmmClassifier,
    dnn_classify,
    dnn_train,
    hybrid_decode_scores,
    init_mlp,
    mlp_loss_and_grads,
)
from mpeeg.hmm import GmmHmmClassifier, hmm_classify
from tests.test_hmm import sample_hmm_sequences


class TestGradients:
    def test_finite_difference_check(self):
        rng = np.random.default_rng(0)
        dims = [6, 5, 4, 3]
        weights, biases = init_mlp(dims, seed=1, dtype=np.float64)
        x = rng.standard_normal((5, 6))
        y = rng.integers(0, 3, size=5)
        loss, gw, gb = mlp_loss_and_grads(weights, biases, x, y)
        eps = 1e-5
        for arrays, grads in ((weights, gw), (biases, gb)):
            for arr, g in zip(arrays, grads):
                flat = arr.reshape(-1)
                gflat = g.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    hi, _, _ = mlp_loss_and_grads(weights, biases, x, y)
                    flat[i] = orig - eps
                    lo, _, _ = mlp_loss_and_grads(weights, biases, x, y)
                    flat[i] = orig
                    numeric = (hi - lo) / (2 * eps)
                    denom = max(abs(numeric) + abs(gflat[i]), 1e-5)
                    assert abs(numeric - gflat[i]) / denom < 1e-4


def toy_sequences(rng, num=30, t_len=12, separation=4.0):
    """Two-state toy: linearly separable frame classes."""
    seqs, aligns = [], []
    for _ in range(num):
        states = rng.integers(0, 2, size=t_len)
        x = rng.standard_normal((t_len, 3)) * 0.3
        x[:, 0] += separation * states
        seqs.append(x)
        aligns.append(states)
    return seqs, aligns


class TestDnnTrain:
    def test_separable_training_accuracy(self):
        rng = np.random.default_rng(1)
        seqs, aligns = toy_sequences(rng)
        cfg = DnnConfig(hidden_units=(16,), max_epochs=40, batch_size=64,
                        rng_seed=2)
        model, log = dnn_train(seqs, aligns, num_states=2, cfg=cfg)
        correct = total = 0
        for seq, states in zip(seqs, aligns):
            post = model.posteriors_for_sequence(seq)
            correct += int(np.sum(post.argmax(axis=1) == states))
            total += len(states)
        assert correct / total >= 0.99

    def test_constant_inputs_balanced_posteriors(self):
        rng = np.random.default_rng(3)
        seqs = [np.zeros((10, 3)) for _ in range(20)]
        aligns = [np.tile([0, 1], 5) for _ in range(20)]
        cfg = DnnConfig(hidden_units=(8,), max_epochs=30, batch_size=32,
                        rng_seed=4)
        model, _ = dnn_train(seqs, aligns, num_states=2, cfg=cfg)
        post = np.exp(model.posteriors_for_sequence(seqs[0]))
        np.testing.assert_allclose(post, 0.5, atol=0.05)

    def test_unseen_state_prior_floored(self):
        rng = np.random.default_rng(5)
        seqs, aligns = toy_sequences(rng, num=10)
        model, _ = dnn_train(seqs, aligns, num_states=3,
                             cfg=DnnConfig(hidden_units=(8,), max_epochs=2,
                                           rng_seed=6))
        priors = np.exp(model.log_priors)
        assert priors[2] > 0
        assert priors[2] == pytest.approx(1e-6, rel=0.1)

    def test_deterministic(self):
        rng = np.random.default_rng(7)
        seqs, aligns = toy_sequences(rng, num=12)
        cfg = DnnConfig(hidden_units=(8,), max_epochs=3, rng_seed=8)
        m1, log1 = dnn_train(seqs, aligns, num_states=2, cfg=cfg)
        m2, log2 = dnn_train(seqs, aligns, num_states=2, cfg=cfg)
        assert log1 == log2
        for w1, w2 in zip(m1.weights, m2.weights):
            assert w1.tobytes() == w2.tobytes()

    def test_mismatched_alignment_rejected(self):
        with pytest.raises(ValueError):
            dnn_train([np.zeros((5, 2))], [np.zeros(4, dtype=int)],
                      num_states=2)


class TestHybridDecoding:
    def _fitted_gmm_hmm(self, rng):
        means_0 = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [-3.0, 0.0]])
        means_1 = np.array([[0.0, 0.0], [0.0, -3.0], [3.0, 3.0], [0.0, 3.0]])
        train_0 = sample_hmm_sequences(rng, means_0, num_seqs=20)
        train_1 = sample_hmm_sequences(rng, means_1, num_seqs=20)
        clf = GmmHmmClassifier(num_components=1, max_rounds=3, random_state=0)
        clf.fit(train_0 + train_1, ["c0"] * 20 + ["c1"] * 20)
        return clf, means_0, means_1

    def test_posteriors_from_gmm_reproduce_hmm_ranking(self):
        # posteriors proportional to normalized GMM likelihoods with uniform
        # priors give emission scores that rank classes exactly like the HMM
        rng = np.random.default_rng(9)
        clf, means_0, _ = self._fitted_gmm_hmm(rng)
        hmm_set = clf.hmm_set_
        models = hmm_set.state_models()
        num_states = hmm_set.state_space.num_states
        uniform_priors = np.full(num_states, 1.0 / num_states)
        for seq in sample_hmm_sequences(rng, means_0, num_seqs=20):
            lik = np.stack(
                [models[sid].log_prob(seq) for sid in range(num_states)],
                axis=1,
            )
            mx = lik.max(axis=1, keepdims=True)
            log_norm = lik - (mx + np.log(
                np.exp(lik - mx).sum(axis=1, keepdims=True)
            ))
            scores = hybrid_decode_scores(
                log_norm, np.log(uniform_priors), hmm_set
            )
            hmm_label, _ = hmm_classify(hmm_set, seq)
            best = max(scores.values())
            hybrid_label = min(l for l, s in scores.items() if s == best)
            assert hybrid_label == hmm_label

    def test_uniform_posteriors_fall_back_to_transitions(self):
        rng = np.random.default_rng(10)
        clf, _, _ = self._fitted_gmm_hmm(rng)
        hmm_set = clf.hmm_set_
        n = hmm_set.state_space.num_states
        log_post = np.full((12, n), -np.log(n))
        scores = hybrid_decode_scores(
            log_post, np.log(np.full(n, 1.0 / n)), hmm_set
        )
        assert set(scores) == {"c0", "c1"}
        # decision is driven purely by transitions; a tie breaks to "c0"
        best = max(scores.values())
        label = min(l for l, s in scores.items() if s == best)
        assert label in ("c0", "c1")

    def test_hybrid_close_to_gmm_hmm_accuracy(self):
        rng = np.random.default_rng(11)
        means_0 = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0], [-3.0, 0.0]])
        means_1 = np.array([[0.0, 0.0], [0.0, -3.0], [3.0, 3.0], [0.0, 3.0]])
        train_x = (sample_hmm_sequences(rng, means_0, num_seqs=25)
                   + sample_hmm_sequences(rng, means_1, num_seqs=25))
        train_y = ["c0"] * 25 + ["c1"] * 25
        test_x = (sample_hmm_sequences(rng, means_0, num_seqs=100)
                  + sample_hmm_sequences(rng, means_1, num_seqs=100))
        truth = np.array(["c0"] * 100 + ["c1"] * 100)

        gmm_clf = GmmHmmClassifier(num_components=1, max_rounds=3,
                                   random_state=1)
        gmm_clf.fit(train_x, train_y)
        gmm_acc = float(np.mean(gmm_clf.predict(test_x) == truth))

        hybrid = HybridDnnHmmClassifier(
            num_components=1, max_rounds=3, hidden_units=(32,),
            max_epochs=20, random_state=1,
        )
        hybrid.fit(train_x, train_y)
        hybrid_acc = float(np.mean(hybrid.predict(test_x) == truth))
        assert hybrid_acc >= gmm_acc - 0.02
        # goldens from the first verified run of these pinned seeds
        assert gmm_acc == pytest.approx(1.0, abs=0.02)
        assert hybrid_acc == pytest.approx(1.0, abs=0.02)

    def test_dnn_classify_runs(self):
        rng = np.random.default_rng(12)
        clf, means_0, _ = self._fitted_gmm_hmm(rng)
        seqs = sample_hmm_sequences(rng, means_0, num_seqs=4)
        aligns = clf.align(seqs, ["c0"] * 4)
        model, _ = dnn_train(
            seqs, aligns, num_states=clf.hmm_set_.state_space.num_states,
            cfg=DnnConfig(hidden_units=(16,), max_epochs=5, rng_seed=13),
        )
        label, scores = dnn_classify(model, clf.hmm_set_, seqs[0])
        assert label in scores
