import numpy as np
import pytest

from mpeeg.errors import InsufficientDataError
from mpeeg.gmm import GmmParams, VARIANCE_FLOOR, gmm_em_fit


class TestGmmFit:
    def test_identical_frames_degenerate(self):
        x = np.full((60, 3), 2.5)
        result = gmm_em_fit(x, k=5, seed=0)
        assert np.all(result.params.variances == VARIANCE_FLOOR)
        ll = result.params.log_prob(x)
        assert np.isfinite(ll).all()

    def test_two_separated_clusters(self):
        rng = np.random.default_rng(42)
        x = np.concatenate([
            rng.normal(-10.0, 0.1, size=(400, 1)),
            rng.normal(10.0, 0.1, size=(400, 1)),
        ])
        result = gmm_em_fit(x, k=2, seed=1)
        means = np.sort(result.params.means[:, 0])
        assert abs(means[0] + 10.0) < 0.1
        assert abs(means[1] - 10.0) < 0.1
        np.testing.assert_allclose(result.params.weights, 0.5, atol=0.05)

    def test_em_monotonic(self):
        rng = np.random.default_rng(43)
        x = rng.standard_normal((300, 4)) * [1.0, 2.0, 0.5, 1.5]
        result = gmm_em_fit(x, k=3, seed=2)
        lls = np.asarray(result.log_likelihoods)
        assert len(lls) >= 2
        assert np.all(np.diff(lls) >= -1e-9)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError):
            gmm_em_fit(np.zeros((30, 2)), k=5, seed=0)

    def test_deterministic(self):
        rng = np.random.default_rng(44)
        x = rng.standard_normal((200, 3))
        a = gmm_em_fit(x, k=3, seed=7)
        b = gmm_em_fit(x, k=3, seed=7)
        assert a.params.means.tobytes() == b.params.means.tobytes()
        assert a.log_likelihoods == b.log_likelihoods


class TestDensity:
    def _mc_integral(self, params, lo, hi, n, seed):
        rng = np.random.default_rng(seed)
        d = params.dim
        u = rng.uniform(lo, hi, size=(n, d))
        volume = float(np.prod(np.full(d, hi - lo)))
        dens = np.exp(params.log_prob(u))
        return float(dens.mean() * volume)

    def test_1d_density_integrates_to_one(self):
        rng = np.random.default_rng(45)
        x = np.concatenate([
            rng.normal(-1.0, 0.5, size=(300, 1)),
            rng.normal(2.0, 1.0, size=(300, 1)),
        ])
        params = gmm_em_fit(x, k=2, seed=3).params
        integral = self._mc_integral(params, -8.0, 9.0, 400_000, seed=11)
        assert integral == pytest.approx(1.0, rel=0.02)

    def test_2d_density_integrates_to_one(self):
        rng = np.random.default_rng(46)
        x = rng.standard_normal((500, 2)) + [1.0, -1.0]
        params = gmm_em_fit(x, k=3, seed=4).params
        integral = self._mc_integral(params, -7.0, 7.0, 800_000, seed=12)
        assert integral == pytest.approx(1.0, rel=0.02)


class TestSampling:
    def test_sample_statistics(self):
        params = GmmParams(
            weights=np.array([0.3, 0.7]),
            means=np.array([[0.0], [5.0]]),
            variances=np.array([[1.0], [0.25]]),
        )
        rng = np.random.default_rng(47)
        draws = params.sample(200_000, rng)
        assert draws.mean() == pytest.approx(0.3 * 0.0 + 0.7 * 5.0, abs=0.05)
