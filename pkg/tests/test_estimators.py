"""Tests for the Kalman/unscented/particle estimator back-ends."""

from __future__ import annotations

import numpy as np
import pytest

from nnsse.estimators import (
    CovarianceDegeneracyError,
    DegenerateLikelihoodError,
    GaussianBelief,
    ParticleSet,
    SigmaSet,
    UkeParams,
    eke_step,
    lke_step,
    pe_step,
    psd_sqrt,
    systematic_resample,
    uke_sigma_points,
    uke_step,
)
from nnsse.model import NoiseSpec, Topology, NetworkStateSpace


class LinearModel:
    """Transition x -> F x with the unit-selector observation, for testing."""

    def __init__(self, F):
        self.F = np.asarray(F, dtype=float)

    def transition(self, x):
        return self.F @ x

    def transition_batch(self, X):
        return X @ self.F.T

    def observe(self, x):
        return float(x[0])

    def observe_batch(self, X):
        return X[:, 0]

    def transition_jacobian(self, x):
        return self.F


def uam3_F(T=0.005):
    return np.array([[1.0, T, T * T / 2.0], [0.0, 1.0, T], [0.0, 0.0, 1.0]])


# ---------------------------------------------------------------------------
# psd_sqrt


def test_psd_sqrt_identity():
    np.testing.assert_array_equal(psd_sqrt(np.eye(4)), np.eye(4))


def test_psd_sqrt_diagonal():
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_psd_sqrt_random_factor_oracle():
    rng = np.random.default_rng(101)
    for _ in range(20):
        A = rng.standard_normal((6, 6))
        M = A @ A.T
        L = psd_sqrt(M)
        assert np.abs(L @ L.T - M).max() <= 1e-10
        assert np.allclose(L, np.tril(L))


def test_psd_sqrt_zero_matrix():
    np.testing.assert_array_equal(psd_sqrt(np.zeros((3, 3))), np.zeros((3, 3)))


def test_psd_sqrt_semidefinite_jitter():
    M = np.diag([1.0, 0.0])
    L = psd_sqrt(M)
    assert np.abs(L @ L.T - M).max() <= 1e-8


def test_psd_sqrt_degenerate_raises():
    with pytest.raises(CovarianceDegeneracyError):
        psd_sqrt(np.array([[1.0, 0.0], [0.0, -1.0]]))


# ---------------------------------------------------------------------------
# sigma points


def test_sigma_points_n1_example():
    belief = GaussianBelief(np.zeros(1), np.ones((1, 1)))
    sig = uke_sigma_points(belief, UkeParams(alpha=1.0, beta=2.0, kappa=0.0))
    np.testing.assert_allclose(sig.points.ravel(), [0.0, 1.0, -1.0])
    np.testing.assert_allclose(sig.mean_weights, [0.0, 0.5, 0.5])
    # zeroth covariance weight is w_mean[0] + 1 - alpha^2 - beta
    assert sig.cov_weights[0] == pytest.approx(0.0 + 1.0 - 1.0 - 2.0)


def test_sigma_mean_weights_sum_to_one():
    rng = np.random.default_rng(55)
    for n in (1, 4, 9):
        A = rng.standard_normal((n, n))
        belief = GaussianBelief(rng.standard_normal(n), A @ A.T)
        for params in (UkeParams(), UkeParams(1.0, 2.0, 0.0), UkeParams(0.5, 2.0, 3.0 - n)):
            sig = uke_sigma_points(belief, params)
            assert float(np.sum(sig.mean_weights)) == pytest.approx(1.0, abs=1e-9)


def test_sigma_zero_covariance_points_collapse():
    mean = np.array([2.0, -1.0, 0.5])
    sig = uke_sigma_points(GaussianBelief(mean, np.zeros((3, 3))))
    for p in sig.points:
        np.testing.assert_array_equal(p, mean)


def test_sigma_reconstruction():
    rng = np.random.default_rng(77)
    for n in (2, 5):
        A = rng.standard_normal((n, n))
        cov = A @ A.T
        mean = rng.standard_normal(n)
        sig = uke_sigma_points(GaussianBelief(mean, cov), UkeParams(1.0, 2.0, 0.0))
        np.testing.assert_allclose(sig.mean_weights @ sig.points, mean, atol=1e-12)
        D = sig.points - mean
        recon = (D.T * sig.cov_weights) @ D
        assert np.abs(recon - cov).max() <= 1e-10


def test_sigma_set_count_validation():
    with pytest.raises(ValueError):
        SigmaSet(np.zeros((4, 2)), np.zeros(4), np.zeros(4))


def test_sigma_scale_must_be_positive():
    belief = GaussianBelief(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        uke_sigma_points(belief, UkeParams(alpha=1.0, beta=2.0, kappa=-3.0))


# ---------------------------------------------------------------------------
# lke_step


def test_lke_infinite_measurement_noise_keeps_prior():
    F = uam3_F()
    noise = NoiseSpec(np.zeros((3, 3)), 1e18, np.eye(3))
    belief = GaussianBelief(np.array([1.0, 2.0, 3.0]), np.eye(3))
    posterior, innov = lke_step(F, np.array([1.0, 0.0, 0.0]), noise, belief, 100.0)
    np.testing.assert_allclose(posterior.mean, F @ belief.mean, atol=1e-9)
    np.testing.assert_allclose(posterior.cov, F @ belief.cov @ F.T, atol=1e-9)
    assert innov == pytest.approx(100.0 - (F @ belief.mean)[0])


def test_lke_scalar_hand_case():
    # F=1, H=1, Q=0, R=1, P=1, x=0, z=2  ->  K=1/2, mean=1, cov=1/2
    noise = NoiseSpec(np.zeros((1, 1)), 1.0, np.ones((1, 1)))
    belief = GaussianBelief(np.zeros(1), np.ones((1, 1)))
    posterior, innov = lke_step(np.ones((1, 1)), np.ones(1), noise, belief, 2.0)
    assert posterior.mean[0] == pytest.approx(1.0)
    assert posterior.cov[0, 0] == pytest.approx(0.5)
    assert innov == pytest.approx(2.0)


def test_lke_noiseless_quadratic_innovations_vanish():
    T = 0.01
    F = uam3_F(T)
    noise = NoiseSpec(1e-8 * np.eye(3), 1e-2, np.eye(3))
    steps = 4000
    t = np.arange(steps) * T
    z = 1.0 + 0.5 * t + 0.25 * t * t
    belief = GaussianBelief(np.array([z[0], 0.0, 0.0]), np.eye(3))
    innovations = np.empty(steps)
    H = np.array([1.0, 0.0, 0.0])
    for i in range(steps):
        belief, innovations[i] = lke_step(F, H, noise, belief, z[i])
    assert np.abs(innovations[-100:]).max() < 1e-6


def test_lke_dimension_check():
    noise = NoiseSpec(np.eye(2), 1.0, np.eye(2))
    belief = GaussianBelief(np.zeros(3), np.eye(3))
    with pytest.raises(ValueError):
        lke_step(np.eye(3), np.array([1.0, 0.0, 0.0]), noise, belief, 0.0)


# ---------------------------------------------------------------------------
# uke_step


def run_linear_comparison(seed, steps=1000, params=UkeParams(1.0, 2.0, 0.0)):
    """LKE vs UKE vs EKE on the order-3 kinematic model, shared measurements."""
    rng = np.random.default_rng(seed)
    F = uam3_F()
    model = LinearModel(F)
    noise = NoiseSpec(np.diag([1e-4, 1e-3, 1e-2]), 1.0, np.eye(3))
    z = 10.0 * np.sin(2 * np.pi * np.arange(steps) / 200.0) + rng.standard_normal(steps)
    H = np.array([1.0, 0.0, 0.0])
    b_l = GaussianBelief(np.array([z[0], 0.0, 0.0]), np.eye(3))
    b_u = GaussianBelief(np.array([z[0], 0.0, 0.0]), np.eye(3))
    b_e = GaussianBelief(np.array([z[0], 0.0, 0.0]), np.eye(3))
    max_rel_u = 0.0
    max_rel_e = 0.0
    for i in range(steps):
        b_l, _ = lke_step(F, H, noise, b_l, z[i])
        b_u, _ = uke_step(model, noise, b_u, z[i], params)
        b_e, _ = eke_step(model, noise, b_e, z[i])
        denom = max(np.abs(b_l.mean).max(), 1e-12)
        max_rel_u = max(max_rel_u, np.abs(b_u.mean - b_l.mean).max() / denom)
        max_rel_e = max(max_rel_e, np.abs(b_e.mean - b_l.mean).max() / denom)
    return max_rel_u, max_rel_e, b_l, b_u, b_e


def test_uke_eke_match_lke_on_linear_model():
    rel_u, rel_e, b_l, b_u, b_e = run_linear_comparison(seed=1)
    assert rel_u <= 1e-8
    assert rel_e <= 1e-12
    np.testing.assert_allclose(b_u.cov, b_l.cov, rtol=1e-8, atol=1e-12)


def test_uke_matches_lke_at_default_spread():
    # alpha=1e-3 puts +-1e6 sigma weights in play; the transform is still
    # exact for linear maps, with float64 agreement at the 1e-6 level.
    rel_u, _, b_l, b_u, _ = run_linear_comparison(seed=1, params=UkeParams())
    assert rel_u <= 1e-6
    np.testing.assert_allclose(b_u.cov, b_l.cov, rtol=1e-4, atol=1e-10)


def test_uke_zero_innovation_keeps_mean():
    model = LinearModel(np.eye(2))
    noise = NoiseSpec(np.zeros((2, 2)), 1.0, np.eye(2))
    belief = GaussianBelief(np.array([3.0, -1.0]), 0.5 * np.eye(2))
    _, z_hat = uke_step(model, noise, belief, 0.0)
    posterior, _ = uke_step(model, noise, belief, z_hat)
    np.testing.assert_allclose(posterior.mean, belief.mean, atol=1e-12)


def test_uke_variance_strictly_decreases():
    # identity transition, Q=0, repeated identical measurement
    model = LinearModel(np.eye(2))
    noise = NoiseSpec(np.zeros((2, 2)), 1.0, np.eye(2))
    belief = GaussianBelief(np.zeros(2), np.eye(2))
    prev = belief.cov[0, 0]
    sigma2 = 1.0
    for _ in range(12):
        belief, _ = uke_step(model, noise, belief, 0.5)
        # scalar Bayes oracle: var' = var*R/(var+R)
        sigma2 = sigma2 * 1.0 / (sigma2 + 1.0)
        assert belief.cov[0, 0] < prev
        assert belief.cov[0, 0] == pytest.approx(sigma2, rel=1e-6)
        prev = belief.cov[0, 0]


# ---------------------------------------------------------------------------
# eke_step


def test_eke_zero_innovation_keeps_mean():
    model = LinearModel(np.eye(3))
    noise = NoiseSpec(np.zeros((3, 3)), 2.0, np.eye(3))
    belief = GaussianBelief(np.array([1.0, 2.0, 3.0]), np.eye(3))
    posterior, z_hat = eke_step(model, noise, belief, 1.0)
    assert z_hat == pytest.approx(1.0)
    np.testing.assert_allclose(posterior.mean, belief.mean, atol=1e-15)


def test_eke_frozen_weights_equals_position_block_lke():
    # With the weight block pinned (zero Q and zero initial covariance there),
    # the position marginal of the extended filter must match an LKE running
    # on the position-only stack transition built from the frozen weights.
    top = Topology.weighted_sum(3, horizon_a=2)
    model = NetworkStateSpace(top)
    n = top.state_dim
    k = top.position_count  # 4
    w = np.array([0.6, 0.3, 0.1])
    rng = np.random.default_rng(5)
    z = np.cumsum(rng.standard_normal(80))

    Q = np.zeros((n, n))
    Q[:k, :k] = 1e-4 * np.eye(k)
    P0 = np.zeros((n, n))
    P0[:k, :k] = np.eye(k)
    noise = NoiseSpec(Q, 1.0, P0)
    mean0 = np.concatenate([np.zeros(k), w])
    belief = GaussianBelief(mean0, P0)

    # oracle: position-block linear filter (network input at offsets 1..3)
    F_pos = np.zeros((k, k))
    F_pos[0, 1:] = w
    for r in range(1, k):
        F_pos[r, r - 1] = 1.0
    noise_pos = NoiseSpec(1e-4 * np.eye(k), 1.0, np.eye(k))
    belief_pos = GaussianBelief(np.zeros(k), np.eye(k))
    H_pos = np.zeros(k)
    H_pos[0] = 1.0
    for i in range(80):
        belief_pos, _ = lke_step(F_pos, H_pos, noise_pos, belief_pos, z[i])
        belief, _ = eke_step(model, noise, belief, z[i])
        np.testing.assert_allclose(belief.mean[:k], belief_pos.mean, atol=1e-12)
        np.testing.assert_allclose(belief.cov[:k, :k], belief_pos.cov, atol=1e-12)
        np.testing.assert_array_equal(belief.mean[k:], w)


# ---------------------------------------------------------------------------
# particle estimator


def test_systematic_resample_point_mass():
    rng = np.random.default_rng(0)
    idx = systematic_resample(np.array([1.0, 0.0, 0.0, 0.0]), rng)
    np.testing.assert_array_equal(idx, np.zeros(4, dtype=idx.dtype))


def test_particle_set_validation_and_ess():
    ps = ParticleSet(np.zeros((4, 2)), np.full(4, 0.25))
    assert ps.ess == pytest.approx(4.0)
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((4, 2)), np.full(3, 1 / 3))


def test_pe_deterministic_with_zero_process_noise():
    model = LinearModel(uam3_F())
    noise = NoiseSpec(np.zeros((3, 3)), 1e18, np.eye(3))
    rng = np.random.default_rng(9)
    parts = ParticleSet(rng.standard_normal((8, 3)), np.full(8, 1 / 8))
    expected = parts.particles @ model.F.T
    new, _ = pe_step(model, noise, parts, 0.0, np.random.default_rng(1))
    np.testing.assert_array_equal(new.particles, expected)
    # uniform weights stay uniform under a flat likelihood, ess == N
    np.testing.assert_allclose(new.weights, np.full(8, 1 / 8))


def simulate_uam3_truth(steps, Q, R, rng):
    """Ground truth generated by the model itself, so LKE is the exact filter."""
    F = uam3_F()
    Lq = np.sqrt(np.diagonal(Q))
    x = np.zeros(3)
    states = np.empty((steps, 3))
    z = np.empty(steps)
    for i in range(steps):
        x = F @ x + Lq * rng.standard_normal(3)
        states[i] = x
        z[i] = x[0] + np.sqrt(R) * rng.standard_normal()
    return states, z


def test_pe_tracks_lke_posterior_mean():
    steps = 500
    F = uam3_F()
    model = LinearModel(F)
    Q = np.diag([1e-4, 1e-3, 1e-2])
    noise = NoiseSpec(Q, 1.0, np.eye(3))
    _, z = simulate_uam3_truth(steps, Q, 1.0, np.random.default_rng(3))
    H = np.array([1.0, 0.0, 0.0])
    belief = GaussianBelief(np.zeros(3), np.eye(3))
    prng = np.random.default_rng(12345)
    N = 4000
    parts = ParticleSet(prng.standard_normal((N, 3)), np.full(N, 1.0 / N))
    err = np.empty(steps)
    for i in range(steps):
        belief, _ = lke_step(F, H, noise, belief, z[i])
        parts, _ = pe_step(model, noise, parts, z[i], prng)
        err[i] = parts.mean()[0] - belief.mean[0]
    rmse = float(np.sqrt(np.mean(err ** 2)))
    assert rmse <= 0.1  # 10% of unit measurement noise std


def test_pe_degenerate_likelihood_raises():
    model = LinearModel(np.eye(2))
    noise = NoiseSpec(np.zeros((2, 2)), 1e-250, np.eye(2))
    parts = ParticleSet(np.zeros((4, 2)), np.full(4, 0.25))
    with pytest.raises(DegenerateLikelihoodError):
        pe_step(model, noise, parts, 50.0, np.random.default_rng(0))


def test_pe_bit_reproducible():
    model = LinearModel(uam3_F())
    noise = NoiseSpec(1e-3 * np.eye(3), 1.0, np.eye(3))

    def run():
        rng = np.random.default_rng(77)
        parts = ParticleSet(np.zeros((64, 3)), np.full(64, 1 / 64))
        outs = []
        for i in range(30):
            parts, pred = pe_step(model, noise, parts, np.sin(0.1 * i), rng)
            outs.append(pred)
        return np.array(outs), parts.particles.copy()

    o1, p1 = run()
    o2, p2 = run()
    np.testing.assert_array_equal(o1, o2)
    np.testing.assert_array_equal(p1, p2)


def test_pe_requires_two_particles():
    model = LinearModel(np.eye(2))
    noise = NoiseSpec(np.zeros((2, 2)), 1.0, np.eye(2))
    parts = ParticleSet(np.zeros((1, 2)), np.ones(1))
    with pytest.raises(ValueError):
        pe_step(model, noise, parts, 0.0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# covariance hygiene


def test_posteriors_stay_symmetric_and_psd():
    rng = np.random.default_rng(31)
    model = LinearModel(uam3_F())
    noise = NoiseSpec(np.diag([1e-4, 1e-3, 1e-2]), 1.0, np.eye(3))
    belief = GaussianBelief(np.zeros(3), np.eye(3))
    for i in range(200):
        belief, _ = uke_step(model, noise, belief, rng.standard_normal())
        assert np.abs(belief.cov - belief.cov.T).max() <= 1e-12
        assert np.linalg.eigvalsh(belief.cov).min() >= -1e-9
