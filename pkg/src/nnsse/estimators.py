"""Bayesian estimator back-ends: linear/extended/unscented Kalman and particle.

All four operate on state-space maps with a scalar observation (the first
state coordinate).  The nonlinear estimators accept any model object exposing
``transition``/``observe`` (plus ``transition_jacobian`` for the extended
variant); batched variants (``transition_batch``/``observe_batch``) are used
when present.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import NoiseSpec


class EstimatorError(RuntimeError):
    """Base class for recoverable estimator failures."""


class CovarianceDegeneracyError(EstimatorError):
    """Covariance lost positive semidefiniteness beyond the jitter budget."""


class DegenerateLikelihoodError(EstimatorError):
    """All particle likelihoods underflowed to zero."""


def _symmetrized(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


@dataclass
class GaussianBelief:
    """Posterior mean and covariance; covariance is re-symmetrized on entry."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = _symmetrized(np.asarray(self.cov, dtype=float))
        n = self.mean.size
        if self.cov.shape != (n, n):
            raise ValueError("covariance shape does not match mean length")


@dataclass(frozen=True)
class UkeParams:
    """Unscented-transform spread parameters; lambda = alpha^2 (n+kappa) - n."""

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0

    def lam(self, n: int) -> float:
        return self.alpha ** 2 * (n + self.kappa) - n


DEFAULT_UKE_PARAMS = UkeParams()


@dataclass
class SigmaSet:
    """2n+1 deterministic samples with mean and covariance weights."""

    points: np.ndarray
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    def __post_init__(self):
        m, n = self.points.shape
        if m != 2 * n + 1:
            raise ValueError("sigma set must contain 2n+1 points")


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Lower-triangular factor of a symmetric PSD matrix.

    Cholesky with escalating diagonal jitter {0, 1e-12, 1e-9, 1e-6} scaled by
    trace(M)/n.  An exactly zero matrix factors to zero (its trace gives the
    jitter no scale to work with, and L = 0 already reproduces it).
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if not M.any():
        return np.zeros_like(M)
    scale = float(np.trace(M)) / n
    for jitter in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            if jitter == 0.0:
                return np.linalg.cholesky(M)
            return np.linalg.cholesky(M + (jitter * scale) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
    raise CovarianceDegeneracyError(
        "matrix square root failed at maximum jitter 1e-6*trace/n")


def uke_sigma_points(belief: GaussianBelief, params: UkeParams = DEFAULT_UKE_PARAMS) -> SigmaSet:
    """Sigma points around a Gaussian belief with the scaled-spread weights."""
    n = belief.mean.size
    lam = params.lam(n)
    s = n + lam
    if not s > 0:
        raise ValueError(f"n + lambda must be positive (got {s})")
    L = psd_sqrt(s * belief.cov)
    points = np.empty((2 * n + 1, n))
    points[0] = belief.mean
    points[1:n + 1] = belief.mean[None, :] + L.T
    points[n + 1:] = belief.mean[None, :] - L.T
    w_mean = np.full(2 * n + 1, 1.0 / (2.0 * s))
    w_mean[0] = lam / s
    w_cov = w_mean.copy()
    w_cov[0] = w_mean[0] + 1.0 - params.alpha ** 2 - params.beta
    return SigmaSet(points, w_mean, w_cov)


def _apply_transition_batch(model, X: np.ndarray) -> np.ndarray:
    if hasattr(model, "transition_batch"):
        return model.transition_batch(X)
    return np.stack([model.transition(x) for x in X])


def _apply_observe_batch(model, X: np.ndarray) -> np.ndarray:
    if hasattr(model, "observe_batch"):
        return np.asarray(model.observe_batch(X), dtype=float)
    return np.array([model.observe(x) for x in X], dtype=float)


def _scalar_update(x_pred: np.ndarray, P_pred: np.ndarray, H: np.ndarray,
                   R: float, z: float):
    """Shared scalar-observation measurement update.

    Returns (posterior belief, predicted observation).  Raises on a
    non-positive innovation variance.
    """
    hP = P_pred @ H
    s = float(H @ hP) + R
    if not s > 0:
        raise CovarianceDegeneracyError(
            f"innovation variance must be positive (got {s})")
    z_hat = float(H @ x_pred)
    K = hP / s
    mean = x_pred + K * (z - z_hat)
    cov = _symmetrized(P_pred - np.outer(K, hP))
    return GaussianBelief(mean, cov), z_hat


def lke_step(F: np.ndarray, H: np.ndarray, noise: NoiseSpec,
             belief: GaussianBelief, z: float):
    """Linear Kalman predict/update; returns (posterior, innovation)."""
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float).reshape(-1)
    n = belief.mean.size
    if F.shape != (n, n) or H.shape != (n,) or noise.Q.shape != (n, n):
        raise ValueError("inconsistent dimensions in lke_step")
    x_pred = F @ belief.mean
    P_pred = _symmetrized(F @ belief.cov @ F.T + noise.Q)
    posterior, z_hat = _scalar_update(x_pred, P_pred, H, noise.R, z)
    return posterior, z - z_hat


def eke_step(model, noise: NoiseSpec, belief: GaussianBelief, z: float):
    """Extended Kalman step: nonlinear mean propagation, Jacobian covariance.

    Returns (posterior, predicted observation).  The observation map is the
    unit selector on coordinate 0.
    """
    n = belief.mean.size
    F = np.asarray(model.transition_jacobian(belief.mean), dtype=float)
    x_pred = np.asarray(model.transition(belief.mean), dtype=float)
    P_pred = _symmetrized(F @ belief.cov @ F.T + noise.Q)
    if not np.all(np.isfinite(x_pred)) or not np.all(np.isfinite(P_pred)):
        raise CovarianceDegeneracyError("non-finite values in prediction")
    H = np.zeros(n)
    H[0] = 1.0
    return _scalar_update(x_pred, P_pred, H, noise.R, z)


def uke_step(model, noise: NoiseSpec, belief: GaussianBelief, z: float,
             params: UkeParams = DEFAULT_UKE_PARAMS):
    """Unscented Kalman step; returns (posterior, predicted observation).

    Sigma points are generated twice: once from the posterior for the time
    update, and again from the propagated prior for the observation moments.
    """
    sig = uke_sigma_points(belief, params)
    propagated = _apply_transition_batch(model, sig.points)
    x_pred = sig.mean_weights @ propagated
    D = propagated - x_pred
    P_pred = _symmetrized((D.T * sig.cov_weights) @ D + noise.Q)
    if not np.all(np.isfinite(P_pred)):
        raise CovarianceDegeneracyError("non-finite propagated covariance")

    sig_prior = uke_sigma_points(GaussianBelief(x_pred, P_pred), params)
    Z = _apply_observe_batch(model, sig_prior.points)
    z_hat = float(sig_prior.mean_weights @ Z)
    dz = Z - z_hat
    s = float(sig_prior.cov_weights @ (dz * dz)) + noise.R
    if not s > 0:
        raise CovarianceDegeneracyError(
            f"innovation variance must be positive (got {s})")
    D_prior = sig_prior.points - x_pred
    P_xz = D_prior.T @ (sig_prior.cov_weights * dz)
    K = P_xz / s
    mean = x_pred + K * (z - z_hat)
    cov = _symmetrized(P_pred - np.outer(K, K) * s)
    return GaussianBelief(mean, cov), z_hat


@dataclass
class ParticleSet:
    """Weighted sample cloud; weights are kept normalized."""

    particles: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.particles.ndim != 2 or self.weights.shape != (self.particles.shape[0],):
            raise ValueError("particles must be (N, n) with N weights")

    @property
    def ess(self) -> float:
        return 1.0 / float(self.weights @ self.weights)

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Index vector for systematic resampling with a single uniform draw."""
    N = weights.size
    positions = (np.arange(N) + rng.random()) / N
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0  # guard against round-off at the top end
    return np.searchsorted(cumulative, positions)


def _draw_process_noise(Q: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    n = Q.shape[0]
    e = rng.standard_normal((count, n))
    diag = np.diagonal(Q)
    if np.count_nonzero(Q - np.diag(diag)) == 0:
        return e * np.sqrt(diag)
    return e @ psd_sqrt(Q).T


def pe_step(model, noise: NoiseSpec, particles: ParticleSet, z: float,
            rng: np.random.Generator):
    """Bootstrap particle step; returns (new ParticleSet, predicted observation).

    Propagates through the transition plus Gaussian process noise, weights by
    the Gaussian likelihood of the measurement, and resamples systematically
    when the effective sample size drops below N/2.
    """
    N = particles.particles.shape[0]
    if N < 2:
        raise ValueError("particle estimator needs at least 2 particles")
    X = _apply_transition_batch(model, particles.particles)
    X = X + _draw_process_noise(noise.Q, N, rng)
    obs = _apply_observe_batch(model, X)
    lik = np.exp(-0.5 * (z - obs) ** 2 / noise.R) / np.sqrt(2.0 * np.pi * noise.R)
    w = particles.weights * lik
    total = float(w.sum())
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateLikelihoodError(
            "all particle likelihoods underflowed to zero")
    w = w / total
    if 1.0 / float(w @ w) < N / 2.0:
        idx = systematic_resample(w, rng)
        X = X[idx]
        obs = obs[idx]
        w = np.full(N, 1.0 / N)
    predicted = float(w @ obs)
    return ParticleSet(X, w), predicted
