"""Unscented transform, UKF, backward sampling, and the exact Kalman oracle."""

import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

import mcmctrack as mt
from mcmctrack.gaussian import (GaussianBelief, gaussian_backward_sample,
                                kalman_filter, kalman_log_marginal,
                                kalman_smoother, linear_obs_of, safe_cholesky,
                                sigma_points, symmetrize_clamp,
                                ukf_track_filter, unscented_transform)

from conftest import make_br_hmm, make_linear_hmm


def random_belief(rng, d=4, scale=3.0):
    A = rng.standard_normal((d, d))
    return GaussianBelief(rng.standard_normal(d) * scale,
                          A @ A.T + 0.5 * np.eye(d))


# ---------------------------------------------------------------------------
# sigma points and the unscented transform


def test_sigma_point_reconstruction(rng):
    for _ in range(1000):
        b = random_belief(rng)
        sp = sigma_points(b)
        assert np.isclose(sp.w_mean.sum(), 1.0, atol=1e-12)
        m = sp.w_mean @ sp.points
        assert np.allclose(m, b.mean, atol=1e-9)
        d = sp.points - m
        P = (d * sp.w_cov[:, None]).T @ d
        assert np.allclose(P, b.cov, atol=1e-9 * max(1.0, np.abs(b.cov).max()))


def test_ut_identity(rng):
    b = random_belief(rng)
    out = unscented_transform(b, lambda x: x)
    assert np.allclose(out.mean, b.mean, atol=1e-12)
    assert np.allclose(out.cov, b.cov, atol=1e-10)


def test_ut_linear_map(rng):
    b = random_belief(rng)
    A = rng.standard_normal((3, 4))
    out = unscented_transform(b, lambda x: A @ x)
    assert np.allclose(out.mean, A @ b.mean, atol=1e-10)
    assert np.allclose(out.cov, A @ b.cov @ A.T, atol=1e-10)


def test_ut_square_scalar():
    """x ~ N(0,1), g(x) = x^2, c = 3: points 0, +-sqrt(3), weights 2/3, 1/6."""
    b = GaussianBelief(np.zeros(1), np.eye(1))
    sp = sigma_points(b, c=3.0)
    assert np.allclose(sorted(sp.points.ravel()),
                       [-math.sqrt(3), 0.0, math.sqrt(3)], atol=1e-12)
    assert np.allclose(sorted(sp.w_mean), [1 / 6, 1 / 6, 2 / 3], atol=1e-12)
    out = unscented_transform(b, lambda x: x ** 2, c=3.0)
    assert np.isclose(out.mean[0], 1.0, atol=1e-12)


def test_sigma_points_rejects_bad_scaling():
    with pytest.raises(ValueError):
        sigma_points(GaussianBelief(np.zeros(2), np.eye(2)), c=0.0)


def test_symmetrize_clamp_negative_diagonal():
    out = symmetrize_clamp(np.array([[-1.0, 0.0], [0.0, 2.0]]))
    w = np.linalg.eigvalsh(out)
    assert w.min() >= -1e-12


def test_safe_cholesky_jitters_through_rank_deficiency():
    cov = np.outer([1.0, 2.0], [1.0, 2.0])  # rank 1
    L = safe_cholesky(cov)
    assert np.allclose(L @ L.T, cov, atol=1e-5)


# ---------------------------------------------------------------------------
# UKF over one track


def test_ukf_all_missing_predicts_prior(rng):
    hmm = make_br_hmm()
    preds, filts, lls = ukf_track_filter(hmm, [None] * 5)
    mean = hmm.mu_b.copy()
    for t in range(5):
        assert np.allclose(filts[t].mean, mean, atol=1e-10)
        assert np.allclose(preds[t].mean, mean, atol=1e-10)
        assert lls[t] == 0.0
        mean = hmm.F @ mean
    assert len(preds) == len(filts) == 5


def test_ukf_equals_kalman_on_linear_models(rng):
    for _ in range(20):
        hmm = make_linear_hmm(sigma_x2=float(rng.uniform(0.1, 2)),
                              sigma_y2=float(rng.uniform(0.1, 2)),
                              sigma_r2=float(rng.uniform(0.5, 2)),
                              sigma_b2=float(rng.uniform(0.5, 2)))
        lin = linear_obs_of(hmm)
        obs = [None if rng.random() < 0.3 else rng.normal(10, 5, size=2)
               for _ in range(8)]
        preds_u, filts_u, ll_u = ukf_track_filter(hmm, obs)
        _, filts_k, ll_k = kalman_filter(hmm, lin, obs)
        for t in range(8):
            assert np.allclose(filts_u[t].mean, filts_k[t].mean, atol=1e-8)
            assert np.allclose(filts_u[t].cov, filts_k[t].cov, atol=1e-8)
        assert np.isclose(sum(ll_u), sum(ll_k), atol=1e-8)


def test_ukf_bearing_range_single_update_against_grid():
    """One bearing-range update vs dense Bayes on a position grid."""
    hmm = make_br_hmm(sigma_r2=1.0, sigma_b2=1e-3)
    prior = GaussianBelief(np.array([80.0, 0.0, 100.0, 0.0]),
                           np.diag([4.0, 1.0, 4.0, 1.0]))
    truth = np.array([82.0, 0.0, 98.0, 0.0])
    y = mt.model.obs_mean(hmm, truth)
    preds, filts, lls = ukf_track_filter(hmm, [y], init=prior,
                                         init_is_predicted=True)
    post = filts[0]
    # dense Bayes over the positions (the measurement ignores velocities)
    gx = np.linspace(80 - 8, 80 + 8, 641)
    gy = np.linspace(100 - 8, 100 + 8, 641)
    X, Y = np.meshgrid(gx, gy, indexing="ij")
    pts = np.zeros(X.shape + (4,))
    pts[..., 0] = X
    pts[..., 2] = Y
    log_prior = (-0.5 * (X - 80.0) ** 2 / 4.0 - 0.5 * (Y - 100.0) ** 2 / 4.0)
    log_like = mt.model.log_obs_density(hmm, y, pts)
    w = np.exp(log_prior + log_like - (log_prior + log_like).max())
    w /= w.sum()
    mx, my = float((w * X).sum()), float((w * Y).sum())
    assert abs(post.mean[0] - mx) < 1e-2
    assert abs(post.mean[2] - my) < 1e-2
    assert np.trace(post.cov) < np.trace(prior.cov)


# ---------------------------------------------------------------------------
# Gaussian backward sampling


def test_backward_sample_single_step_prior(rng):
    hmm = make_linear_hmm()
    prior = GaussianBelief(hmm.mu_b, hmm.Sigma_b)
    draws = np.array([gaussian_backward_sample([prior], hmm, rng)[0][0]
                      for _ in range(10_000)])
    sd = np.sqrt(np.diag(hmm.Sigma_b))
    se = sd / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - hmm.mu_b) < 3 * se + 1e-12)


def test_backward_sample_matches_rts_smoother(rng):
    hmm = make_linear_hmm()
    lin = linear_obs_of(hmm)
    obs = [np.array([10.0, 11.0]), None, np.array([12.5, 12.0]),
           np.array([13.0, 13.5]), None, np.array([15.0, 16.0])]
    _, filts, _ = kalman_filter(hmm, lin, obs)
    smooth = kalman_smoother(hmm, lin, obs)
    draws = np.array([gaussian_backward_sample(filts, hmm, rng)[0]
                      for _ in range(8000)])
    for t in range(6):
        se = draws[:, t].std(axis=0, ddof=1) / math.sqrt(len(draws))
        err = np.abs(draws[:, t].mean(axis=0) - smooth[t].mean)
        assert np.all(err < 3 * se + 1e-9), (t, err, se)


def test_backward_sample_evaluate_reproduces_density(rng):
    hmm = make_br_hmm()
    obs = [mt.model.obs_mean(hmm, np.array([80.0, 1, 100.0, -1])), None,
           mt.model.obs_mean(hmm, np.array([82.0, 1, 98.0, -1]))]
    preds, filts, _ = ukf_track_filter(hmm, obs)
    path, logq = gaussian_backward_sample(filts, hmm, rng)
    path2, logq2 = gaussian_backward_sample(filts, hmm, path=path)
    assert np.array_equal(path, path2)
    assert logq == logq2


def test_backward_sample_boundary_conditioning(rng):
    """Conditioning on the next state concentrates the last-step draw."""
    hmm = make_linear_hmm(sigma_x2=0.01, sigma_y2=0.01)
    prior = GaussianBelief(hmm.mu_b, hmm.Sigma_b)
    nxt = np.array([12.0, 1.0, 9.0, -1.0])
    draws = np.array([gaussian_backward_sample([prior], hmm, rng,
                                               boundary_after=nxt)[0][0]
                      for _ in range(3000)])
    # the implied previous state is close to F^-1 nxt for tiny process noise
    implied = hmm.F_inv @ nxt
    assert np.all(np.abs(draws.mean(axis=0) - implied) < 0.3)


def test_backward_sample_zero_noise_deterministic(rng):
    hmm = make_linear_hmm(sigma_x2=1e-12, sigma_y2=1e-12)
    preds, filts, _ = ukf_track_filter(hmm, [None] * 5)
    path, _ = gaussian_backward_sample(filts, hmm, rng)
    for t in range(4):
        assert np.allclose(path[t + 1], hmm.F @ path[t], atol=1e-4)


# ---------------------------------------------------------------------------
# exact Kalman oracle


def test_kalman_log_marginal_scalar_toy():
    """Positions prior N(0,1), observation noise 1, y = 0 on both axes:
    each axis contributes log N(0; 0, 2) ~ -1.2655."""
    hmm = make_linear_hmm(mu_bx=0.0, mu_by=0.0, sigma_bpx2=1.0, sigma_bpy2=1.0,
                          sigma_r2=1.0, sigma_b2=1.0)
    lin = linear_obs_of(hmm)
    ll = kalman_log_marginal(hmm, lin, [np.zeros(2)])
    per_axis = -0.5 * math.log(2 * math.pi * 2.0)
    assert np.isclose(ll, 2 * per_axis, atol=1e-12)
    assert np.isclose(ll / 2, -1.2655, atol=1e-4)


def test_kalman_log_marginal_all_missing():
    hmm = make_linear_hmm()
    assert kalman_log_marginal(hmm, linear_obs_of(hmm), [None] * 7) == 0.0


def test_kalman_log_marginal_against_dense_mvn(rng):
    hmm = make_linear_hmm(sigma_x2=0.3, sigma_y2=0.8)
    lin = linear_obs_of(hmm)
    T = 10
    obs_times = [0, 1, 3, 4, 6, 9]
    obs_seq = [None] * T
    raw = rng.normal(10, 4, size=(len(obs_times), 2))
    for i, t in enumerate(obs_times):
        obs_seq[t] = raw[i]
    # dense joint Gaussian over the stacked observed scans
    F, Su = hmm.F, hmm.Sigma_u
    means = [hmm.mu_b]
    covs = np.zeros((T, T, 4, 4))
    covs[0, 0] = hmm.Sigma_b
    for t in range(1, T):
        means.append(F @ means[-1])
        covs[t, t] = F @ covs[t - 1, t - 1] @ F.T + Su
        for s in range(t):
            covs[t, s] = F @ covs[t - 1, s]
            covs[s, t] = covs[t, s].T
    G, Sv = lin.G, lin.Sigma_v
    k = len(obs_times)
    y_mean = np.concatenate([G @ means[t] for t in obs_times])
    y_cov = np.zeros((2 * k, 2 * k))
    for i, t in enumerate(obs_times):
        for j, s in enumerate(obs_times):
            y_cov[2 * i:2 * i + 2, 2 * j:2 * j + 2] = G @ covs[t, s] @ G.T
        y_cov[2 * i:2 * i + 2, 2 * i:2 * i + 2] += Sv
    dense = multivariate_normal(mean=y_mean, cov=y_cov).logpdf(raw.ravel())
    ll = kalman_log_marginal(hmm, lin, obs_seq)
    assert np.isclose(ll, dense, atol=1e-8)


def test_kalman_log_marginal_is_pure(rng):
    hmm = make_linear_hmm()
    lin = linear_obs_of(hmm)
    obs = [rng.normal(10, 3, size=2) for _ in range(5)]
    vals = {kalman_log_marginal(hmm, lin, obs) for _ in range(5)}
    assert len(vals) == 1


def test_kalman_smoother_matches_filter_at_final_step(rng):
    hmm = make_linear_hmm()
    lin = linear_obs_of(hmm)
    obs = [rng.normal(10, 3, size=2) for _ in range(6)]
    _, filts, _ = kalman_filter(hmm, lin, obs)
    smooth = kalman_smoother(hmm, lin, obs)
    assert np.allclose(smooth[-1].mean, filts[-1].mean, atol=1e-10)
    assert np.allclose(smooth[-1].cov, filts[-1].cov, atol=1e-10)
