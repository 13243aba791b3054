"""Diagonal-covariance Gaussian mixtures fit by expectation-maximisation.

Initialisation is k-means++ seeding from a pinned RNG; per-iteration data
log-likelihood is recorded so callers can assert EM monotonicity.  Empty
components are re-seeded at the worst-explained frame and the event logged.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-4
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmParams:
    weights: np.ndarray    # [k], simplex
    means: np.ndarray      # [k, d]
    variances: np.ndarray  # [k, d], floored

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.variances = np.asarray(self.variances, dtype=np.float64)
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")
        if (self.variances < VARIANCE_FLOOR * (1 - 1e-12)).any():
            raise ValueError(f"variances must respect the {VARIANCE_FLOOR} floor")

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_prob_components(self, x) -> np.ndarray:
        """log(w_k) + log N(x | mu_k, var_k): [N, k].

        The Mahalanobis term is expanded into three matrix products so the
        evaluation stays in BLAS instead of an [N, k, d] broadcast.
        """
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inv_var = 1.0 / self.variances                     # [k, d]
        mean_over_var = self.means * inv_var               # [k, d]
        maha = (
            (x * x) @ inv_var.T
            - 2.0 * (x @ mean_over_var.T)
            + (self.means * mean_over_var).sum(axis=1)[None, :]
        )
        log_det = np.log(self.variances).sum(axis=1)
        log_norm = -0.5 * (self.dim * _LOG_2PI + log_det)
        return np.log(self.weights)[None, :] + log_norm[None, :] - 0.5 * maha

    def log_prob(self, x) -> np.ndarray:
        """Mixture log-density per frame."""
        comp = self.log_prob_components(x)
        mx = comp.max(axis=1, keepdims=True)
        return (mx + np.log(np.exp(comp - mx).sum(axis=1, keepdims=True)))[:, 0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comps = rng.choice(self.num_components, size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim))
        return self.means[comps] + noise * np.sqrt(self.variances[comps])


@dataclass
class GmmFitResult:
    params: GmmParams
    log_likelihoods: list[float] = field(default_factory=list)
    reseeded_iterations: list[int] = field(default_factory=list)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def gmm_em_fit(
    frames,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol_per_frame: float = 1e-6,
    variance_floor: float = VARIANCE_FLOOR,
    init: GmmParams | None = None,
) -> GmmFitResult:
    """Fit a k-component diagonal GMM; warm-startable via ``init``."""
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("frames must be a [N, d] matrix")
    n = x.shape[0]
    if n < 10 * k:
        raise InsufficientDataError(
            f"{n} frames are too few for {k} components (need {10 * k})"
        )
    data_var = np.maximum(x.var(axis=0), variance_floor)
    if init is not None:
        if init.num_components != k or init.dim != x.shape[1]:
            raise ValueError("warm-start parameters have mismatched shape")
        params = GmmParams(
            init.weights.copy(), init.means.copy(), init.variances.copy()
        )
    else:
        rng = np.random.default_rng(seed)
        params = GmmParams(
            weights=np.full(k, 1.0 / k),
            means=_kmeanspp_centers(x, k, rng),
            variances=np.tile(data_var, (k, 1)),
        )

    result = GmmFitResult(params=params)
    prev_ll = None
    for iteration in range(max_iter):
        comp = params.log_prob_components(x)
        mx = comp.max(axis=1, keepdims=True)
        lse = mx + np.log(np.exp(comp - mx).sum(axis=1, keepdims=True))
        ll = float(lse.sum())
        result.log_likelihoods.append(ll)
        if prev_ll is not None and ll - prev_ll < tol_per_frame * n:
            break
        prev_ll = ll

        resp = np.exp(comp - lse)
        nk = resp.sum(axis=0)
        dead = np.flatnonzero(nk < 1e-10)
        healthy = nk >= 1e-10
        safe_nk = np.where(healthy, nk, 1.0)
        means = (resp.T @ x) / safe_nk[:, None]
        second = (resp.T @ (x * x)) / safe_nk[:, None]
        variances = np.maximum(second - means * means, variance_floor)
        weights = np.where(healthy, nk, 0.0)
        if dead.size:
            worst = int(np.argmin(lse[:, 0]))
            for j in dead:
                means[j] = x[worst]
                variances[j] = data_var
                weights[j] = weights[healthy].sum() / max(k - dead.size, 1)
            result.reseeded_iterations.append(iteration)
            logger.warning(
                "re-seeded %d empty GMM component(s) at iteration %d",
                dead.size, iteration,
            )
        weights = weights / weights.sum()
        params = GmmParams(weights=weights, means=means, variances=variances)
        result.params = params
    return result
