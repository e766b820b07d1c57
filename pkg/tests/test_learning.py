"""Conjugate parameter updates: sufficient statistics, posterior laws,
support constraints, and the combined sampler loop."""

import math

import numpy as np
import pytest
from scipy import stats as sps

import mcmctrack as mt
from mcmctrack.chain import initial_state, state_from_association
from mcmctrack.learning import (PARAM_NAMES, PriorHyperparams, VAR_CEIL,
                                VAR_FLOOR, MttSampler, association_counts,
                                birth_stats, mle_given_truth, obs_noise_stats,
                                param_vector, sample_assoc_params,
                                sample_hmm_params, transition_stats)
from mcmctrack.model import Scene, Track, obs_mean

from conftest import make_linear_hmm, make_linear_params


def _two_track_state():
    """n = 4 scene with two tracks: spans (1, 4) and (2, 5).

    Track 1 survives twice and dies (t_d = 4 <= n); track 2 survives twice
    and leaves the window alive.  Detections: 2 + 3; misses: 3 + 0.
    """
    obs = [np.array([[10.0, 10.0]]),
           np.array([[10.5, 10.2], [11.0, 9.0]]),
           np.array([[11.0, 9.4], [30.0, 30.0]]),
           np.array([[11.5, 9.1]])]
    scene = Scene(obs=obs)
    st = initial_state(scene)
    s1 = np.array([[10.0, 0.5, 10.0, -0.3],
                   [10.5, 0.5, 9.7, -0.3],
                   [11.0, 0.5, 9.4, -0.3]])
    s2 = np.array([[11.0, 0.2, 9.0, 0.1],
                   [11.2, 0.2, 9.1, 0.1],
                   [11.4, 0.2, 9.2, 0.1]])
    st.tracks = [Track(1, 4, s1, np.array([1, 1, 1])),
                 Track(2, 5, s2, np.array([2, 0, 1]))]
    for tr in st.tracks:
        for i, j in enumerate(tr.y_idx):
            if j > 0:
                st.free[tr.t_b + i - 1].discard(int(j))
    return st, scene


def test_association_counts():
    st, scene = _two_track_state()
    c = association_counts(st, scene)
    assert c == {"surv": 4, "deaths": 1, "det": 5, "miss": 1,
                 "births": 2, "clutter": 1, "n": 4}


def test_beta_posterior_moments(rng):
    """surv = 10, deaths = 2 gives p_s | z ~ Beta(11, 3)."""
    counts = {"surv": 10, "deaths": 2, "det": 0, "miss": 0,
              "births": 0, "clutter": 0, "n": 5}
    prior = PriorHyperparams()
    n = 100_000
    draws = np.array([sample_assoc_params(prior, counts, rng)[0]
                      for _ in range(n)])
    mean, var = 11.0 / 14.0, 11 * 3 / (14.0 ** 2 * 15.0)
    assert abs(draws.mean() - mean) < 3 * math.sqrt(var / n)
    assert abs(draws.var() - var) < 4 * var * math.sqrt(2.0 / n)


def test_rate_posterior_empty_scene(rng):
    """No tracks, no clutter over n = 50 scans: the birth rate draw is
    Gamma(alpha0, scale 1 / (1/beta0 + 50))."""
    counts = {"surv": 0, "deaths": 0, "det": 0, "miss": 0,
              "births": 0, "clutter": 0, "n": 50}
    prior = PriorHyperparams()
    n = 100_000
    draws = np.array([sample_assoc_params(prior, counts, rng)[2]
                      for _ in range(n)])
    scale = 1.0 / (1.0 / prior.beta_rate + 50)
    mean = prior.alpha_rate * scale
    sd = math.sqrt(prior.alpha_rate) * scale
    assert abs(draws.mean() - mean) < 4 * sd / math.sqrt(n)
    ks = sps.kstest(draws[:2000], sps.gamma(prior.alpha_rate, scale=scale).cdf)
    assert ks.pvalue > 0.001, ks


def test_transition_stats_by_hand():
    hmm = make_linear_hmm()
    scene = Scene(obs=[np.empty((0, 2))] * 2)
    st = initial_state(scene)
    x1 = np.array([1.0, 0.5, -2.0, 0.25])
    x2 = np.array([2.3, 0.1, -1.0, 0.5])
    st.tracks = [Track(1, 3, np.array([x1, x2]), np.array([0, 0]))]
    m, S_x, S_y = transition_stats(st, hmm)
    assert m == 1
    d = hmm.delta
    blk_inv = np.linalg.inv(np.array([[d ** 3 / 3, d ** 2 / 2],
                                      [d ** 2 / 2, d]]))
    diff = x2 - hmm.F @ x1
    assert abs(S_x - diff[:2] @ blk_inv @ diff[:2]) < 1e-12
    assert abs(S_y - diff[2:] @ blk_inv @ diff[2:]) < 1e-12


def test_obs_noise_stats_zero_residual():
    """States placed exactly on the observations leave zero residuals, so
    the observation-variance conditional collapses to the prior
    InvGamma(alpha0 + n_det/2, beta0)."""
    st, scene = _two_track_state()
    hmm = make_linear_hmm()
    for tr in st.tracks:
        for i, j in enumerate(tr.y_idx):
            if j > 0:
                y = scene.obs[tr.t_b + i - 1][j - 1]
                tr.states[i][0], tr.states[i][2] = y
    n_det, S1, S2 = obs_noise_stats(st, scene, hmm)
    assert n_det == 5 and S1 == 0.0 and S2 == 0.0

    prior = PriorHyperparams()
    rng = np.random.default_rng(0)
    draws = np.array([sample_hmm_params(prior, st, scene, hmm, rng).sigma_r2
                      for _ in range(3000)])
    a, b = prior.alpha_var + 0.5 * n_det, prior.beta_var
    ks = sps.kstest(draws, sps.invgamma(a, scale=b).cdf)
    assert ks.pvalue > 0.001, ks


def test_gibbs_variance_draw_matches_closed_form(rng):
    """sigma_x^2 | rest ~ InvGamma(alpha0 + m, beta0 + S_x / 2)."""
    st, scene = _two_track_state()
    hmm = make_linear_hmm()
    prior = PriorHyperparams(alpha_var=0.5, beta_var=0.5)
    m, S_x, _ = transition_stats(st, hmm)
    assert m == 4
    draws = np.array([sample_hmm_params(prior, st, scene, hmm, rng).sigma_x2
                      for _ in range(3000)])
    ks = sps.kstest(draws, sps.invgamma(prior.alpha_var + m,
                                        scale=prior.beta_var + 0.5 * S_x).cdf)
    assert ks.pvalue > 0.001, ks


def test_birth_mean_posterior(rng):
    """mu_bx | rest is Normal((n0 mu0 + K xbar)/(n0 + K), sigma_bp^2/(n0+K))."""
    st, scene = _two_track_state()
    hmm = make_linear_hmm()
    prior = PriorHyperparams(n0=2.0, mu0_x=8.0)
    px = birth_stats(st)[0]
    K, xb = len(px), float(np.mean(px))
    loc = (prior.n0 * prior.mu0_x + K * xb) / (prior.n0 + K)
    out = [sample_hmm_params(prior, st, scene, hmm, rng) for _ in range(4000)]
    mx = np.array([h.mu_bx for h in out])
    sc = np.array([h.sigma_bpx2 for h in out])
    z = (mx - loc) * np.sqrt((prior.n0 + K) / sc)
    ks = sps.kstest(z, sps.norm.cdf)
    assert ks.pvalue > 0.001, ks


def test_tied_vs_untied_birth_variances(rng):
    st, scene = _two_track_state()
    hmm = make_linear_hmm()
    prior = PriorHyperparams()
    tied = sample_hmm_params(prior, st, scene, hmm, rng, tied_birth=True)
    assert tied.sigma_bpx2 == tied.sigma_bpy2
    assert tied.sigma_bvx2 == tied.sigma_bvy2
    untied = [sample_hmm_params(prior, st, scene, hmm, rng, tied_birth=False)
              for _ in range(20)]
    assert any(h.sigma_bpx2 != h.sigma_bpy2 for h in untied)


def test_parameter_support_fuzz(rng):
    """Draws from arbitrary states always yield a valid parameter vector."""
    params = make_linear_params()
    _, scene = mt.simulate(params, 8, rng)
    st = initial_state(scene)   # empty: vaguest possible statistics
    prior = PriorHyperparams()
    counts = association_counts(st, scene)
    for _ in range(2000):
        p_s, p_d, lb, lf = sample_assoc_params(prior, counts, rng)
        hmm = sample_hmm_params(prior, st, scene, params.hmm, rng)
        assert 0.0 <= p_s <= 1.0 and 0.0 <= p_d <= 1.0
        assert lb >= 0.0 and lf >= 0.0
        for v in (hmm.sigma_x2, hmm.sigma_y2, hmm.sigma_r2, hmm.sigma_b2,
                  hmm.sigma_bpx2, hmm.sigma_bvx2):
            assert VAR_FLOOR <= v <= VAR_CEIL
        mt.ModelParams(hmm=hmm, p_s=p_s, p_d=p_d, lambda_b=lb, lambda_f=lf,
                       obs_window=params.obs_window).validate()


def test_param_vector_layout():
    params = make_linear_params()
    v = param_vector(params)
    assert len(v) == len(PARAM_NAMES) == 12
    assert v[0] == params.p_s and v[1] == params.p_d
    assert v[2] == params.lambda_b and v[3] == params.lambda_f
    assert v[6] == params.hmm.sigma_bpx2 and v[8] == params.hmm.sigma_x2
    assert v[11] == params.hmm.sigma_b2


def test_mle_given_truth_centres_the_frozen_posterior():
    """Conditioned on the true association and states, the conjugate
    posterior concentrates around the truth-conditioned maximiser."""
    rng = np.random.default_rng(11)
    params = make_linear_params(hmm=make_linear_hmm(
        mu_bx=80.0, mu_by=100.0, sigma_bpx2=49.0, sigma_bpy2=49.0,
        sigma_r2=4.0, sigma_b2=4.0), lambda_b=0.8)
    assoc, scene = mt.simulate(params, 30, rng)
    target = mle_given_truth(params, scene)
    st = state_from_association(assoc, scene, scene.truth_states)
    sampler = MttSampler(params, scene, rng=rng, n_moves=0, n_pg=0,
                         n_param=1, init_state=st)
    draws = []
    for _ in range(2000):
        sampler.sweep()
        draws.append(param_vector(sampler.params))
    draws = np.array(draws)
    mean, sd = draws.mean(axis=0), draws.std(axis=0, ddof=1)
    # vague-prior posterior mean tracks the MLE to within a few SDs
    assert np.all(np.abs(mean - target) < 4 * sd + 1e-6), \
        list(zip(PARAM_NAMES, mean - target, sd))


def test_mle_given_truth_requires_truth():
    params = make_linear_params()
    scene = Scene(obs=[np.empty((0, 2))] * 3)
    with pytest.raises(ValueError, match="truth"):
        mle_given_truth(params, scene)


def test_sampler_zero_counts_change_nothing(rng):
    params = make_linear_params()
    _, scene = mt.simulate(params, 6, rng)
    sampler = MttSampler(params, scene, rng=rng, n_moves=0, n_pg=0, n_param=0)
    before = param_vector(sampler.params).copy()
    k0 = sampler.state.K
    sampler.run(3)
    assert np.array_equal(param_vector(sampler.params), before)
    assert sampler.state.K == k0
    assert np.isfinite(sampler.log_joint)


def test_sampler_run_callback_and_stats(rng):
    params = make_linear_params(hmm=make_linear_hmm(
        mu_bx=80.0, mu_by=100.0, sigma_bpx2=49.0, sigma_bpy2=49.0,
        sigma_r2=4.0, sigma_b2=4.0))
    _, scene = mt.simulate(params, 6, rng)
    sampler = MttSampler(params, scene, rng=rng, n_moves=10, n_pg=1, n_param=1)
    seen = []
    sampler.run(5, callback=lambda i, s: seen.append((i, s.log_joint)))
    assert [i for i, _ in seen] == list(range(5))
    assert sum(sampler.stats.proposed.values()) == 50
    # parameters moved (conjugate draws are continuous)
    assert not np.array_equal(param_vector(sampler.params),
                              param_vector(params))
