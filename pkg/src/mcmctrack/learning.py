"""Conjugate parameter updates and the full batch tracking sampler.

Given the tracks and states, every model parameter has a conjugate full
conditional: Beta for the survival and detection probabilities, Gamma for
the birth and clutter rates, inverse-Gamma for the noise and birth-prior
variances and Normal for the birth-prior position means.  The sampler
interleaves association moves, particle-Gibbs state refreshment and these
parameter draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .chain import ChainState, chain_log_joint, initial_state, \
    state_from_association
from .model import (HmmParams, MISS, ModelParams, Scene, obs_mean,
                    obs_residual)
from .moves import MoveConfig, MoveStats, mcmc_step
from .pgibbs import refresh_states

PARAM_NAMES = ("p_s", "p_d", "lambda_b", "lambda_f", "mu_bx", "mu_by",
               "sigma_bp2", "sigma_bv2", "sigma_x2", "sigma_y2",
               "sigma_r2", "sigma_b2")


@dataclass
class PriorHyperparams:
    """Hyperparameters of the conjugate priors.

    Rates use Gamma(alpha_rate, scale=beta_rate); variances use
    InvGamma(alpha_var, beta_var); the birth position means use a Normal
    prior with pseudo-count n0 around (mu0_x, mu0_y).  Survival/detection
    probabilities use the uniform Beta(1, 1) prior.
    """

    alpha_rate: float = 0.01
    beta_rate: float = 100.0
    alpha_var: float = 0.01
    beta_var: float = 0.01
    n0: float = 0.01
    mu0_x: float = 0.0
    mu0_y: float = 0.0


VAR_FLOOR = 1e-12
VAR_CEIL = 1e12


def _sample_invgamma(a: float, b: float, rng: np.random.Generator) -> float:
    """InvGamma(shape a, scale b) draw, clamped to a wide finite support.

    With a vague prior (a, b of order 0.01) and empty sufficient statistics
    the untruncated draw overflows downstream covariances every few hundred
    draws; the clamp truncates only mass that is numerically unusable anyway.
    """
    g = rng.gamma(a, 1.0)
    if g <= 0.0:   # tiny shapes can underflow to exactly zero
        return VAR_CEIL
    return float(np.clip(b / g, VAR_FLOOR, VAR_CEIL))


# ---------------------------------------------------------------------------
# sufficient statistics from one chain state


def association_counts(state: ChainState, scene: Scene) -> dict:
    surv = sum(tr.length - 1 for tr in state.tracks)
    deaths = sum(1 for tr in state.tracks if tr.t_d <= scene.n)
    det = sum(int(np.sum(tr.y_idx > 0)) for tr in state.tracks)
    alive = sum(tr.length for tr in state.tracks)
    clutter = sum(len(s) for s in state.free)
    return {"surv": surv, "deaths": deaths, "det": det, "miss": alive - det,
            "births": state.K, "clutter": clutter, "n": scene.n}


def transition_stats(state: ChainState, hmm: HmmParams):
    """(m, S_x, S_y): transition count and per-axis quadratic forms of the
    innovations under the unit-variance dynamics-noise shape."""
    d = hmm.delta
    blk = np.array([[d ** 3 / 3.0, d ** 2 / 2.0], [d ** 2 / 2.0, d]])
    blk_inv = np.linalg.inv(blk)
    F = hmm.F
    m = 0
    S_x = S_y = 0.0
    for tr in state.tracks:
        if tr.length < 2:
            continue
        diff = tr.states[1:] - tr.states[:-1] @ F.T
        m += len(diff)
        dx, dy = diff[:, :2], diff[:, 2:]
        S_x += float(np.einsum("ni,ij,nj->", dx, blk_inv, dx))
        S_y += float(np.einsum("ni,ij,nj->", dy, blk_inv, dy))
    return m, S_x, S_y


def obs_noise_stats(state: ChainState, scene: Scene, hmm: HmmParams):
    """(n_det, S_1, S_2): detection count and squared-residual sums for the
    two measurement components."""
    n_det = 0
    S = np.zeros(2)
    for tr in state.tracks:
        rows = np.flatnonzero(tr.y_idx != MISS)
        for r in rows:
            t = tr.t_b + r
            y = scene.obs[t - 1][tr.y_idx[r] - 1]
            res = obs_residual(hmm, y, obs_mean(hmm, tr.states[r]))
            S += res ** 2
        n_det += len(rows)
    return n_det, float(S[0]), float(S[1])


def birth_stats(state: ChainState):
    """Initial states of every track: (px, vx, py, vy) arrays."""
    if state.K == 0:
        z = np.zeros(0)
        return z, z, z, z
    first = np.array([tr.states[0] for tr in state.tracks])
    return first[:, 0], first[:, 1], first[:, 2], first[:, 3]


# ---------------------------------------------------------------------------
# conjugate draws


def sample_assoc_params(prior: PriorHyperparams, counts: dict,
                        rng: np.random.Generator):
    p_s = rng.beta(1 + counts["surv"], 1 + counts["deaths"])
    p_d = rng.beta(1 + counts["det"], 1 + counts["miss"])
    scale = 1.0 / (1.0 / prior.beta_rate + counts["n"])
    lambda_b = rng.gamma(prior.alpha_rate + counts["births"], scale)
    lambda_f = rng.gamma(prior.alpha_rate + counts["clutter"], scale)
    return p_s, p_d, lambda_b, lambda_f


def sample_hmm_params(prior: PriorHyperparams, state: ChainState,
                      scene: Scene, hmm: HmmParams, rng: np.random.Generator,
                      tied_birth: bool = True) -> HmmParams:
    a0, b0 = prior.alpha_var, prior.beta_var
    m, S_x, S_y = transition_stats(state, hmm)
    sigma_x2 = _sample_invgamma(a0 + m, b0 + 0.5 * S_x, rng)
    sigma_y2 = _sample_invgamma(a0 + m, b0 + 0.5 * S_y, rng)

    n_det, S_1, S_2 = obs_noise_stats(state, scene, hmm)
    sigma_r2 = _sample_invgamma(a0 + 0.5 * n_det, b0 + 0.5 * S_1, rng)
    sigma_b2 = _sample_invgamma(a0 + 0.5 * n_det, b0 + 0.5 * S_2, rng)

    px, vx, py, vy = birth_stats(state)
    K = len(px)
    n0 = prior.n0

    def pos_terms(x, mu0):
        if K == 0:
            return 0.0, 0.0, mu0
        xb = float(np.mean(x))
        b1 = float(np.sum((x - xb) ** 2))
        b2 = n0 * K / (n0 + K) * (mu0 - xb) ** 2
        return b1, b2, xb
    b1x, b2x, xbx = pos_terms(px, prior.mu0_x)
    b1y, b2y, xby = pos_terms(py, prior.mu0_y)
    if tied_birth:
        sigma_bp2 = _sample_invgamma(a0 + K, b0 + 0.5 * (b1x + b2x + b1y + b2y),
                                     rng)
        sigma_bpx2 = sigma_bpy2 = sigma_bp2
        sigma_bv2 = _sample_invgamma(
            a0 + K, b0 + 0.5 * (float(np.sum(vx ** 2)) + float(np.sum(vy ** 2))),
            rng)
        sigma_bvx2 = sigma_bvy2 = sigma_bv2
    else:
        sigma_bpx2 = _sample_invgamma(a0 + 0.5 * K, b0 + 0.5 * (b1x + b2x), rng)
        sigma_bpy2 = _sample_invgamma(a0 + 0.5 * K, b0 + 0.5 * (b1y + b2y), rng)
        sigma_bvx2 = _sample_invgamma(a0 + 0.5 * K,
                                      b0 + 0.5 * float(np.sum(vx ** 2)), rng)
        sigma_bvy2 = _sample_invgamma(a0 + 0.5 * K,
                                      b0 + 0.5 * float(np.sum(vy ** 2)), rng)
    mu_bx = (n0 * prior.mu0_x + K * xbx) / (n0 + K) \
        + math.sqrt(sigma_bpx2 / (n0 + K)) * rng.standard_normal()
    mu_by = (n0 * prior.mu0_y + K * xby) / (n0 + K) \
        + math.sqrt(sigma_bpy2 / (n0 + K)) * rng.standard_normal()

    return replace(hmm, sigma_x2=sigma_x2, sigma_y2=sigma_y2,
                   sigma_r2=sigma_r2, sigma_b2=sigma_b2,
                   mu_bx=mu_bx, mu_by=mu_by,
                   sigma_bpx2=sigma_bpx2, sigma_bpy2=sigma_bpy2,
                   sigma_bvx2=sigma_bvx2, sigma_bvy2=sigma_bvy2)


# ---------------------------------------------------------------------------
# parameter vector utilities and the truth-conditioned maximiser


def param_vector(params: ModelParams) -> np.ndarray:
    """12-vector (see PARAM_NAMES); variances, not standard deviations.
    The birth variances are reported as the x-axis values (equal to the
    y-axis ones when tied)."""
    h = params.hmm
    return np.array([params.p_s, params.p_d, params.lambda_b, params.lambda_f,
                     h.mu_bx, h.mu_by, h.sigma_bpx2, h.sigma_bvx2,
                     h.sigma_x2, h.sigma_y2, h.sigma_r2, h.sigma_b2])


def mle_given_truth(params: ModelParams, scene: Scene,
                    tied_birth: bool = True) -> np.ndarray:
    """Maximum-likelihood parameter vector given the true tracks and states
    recorded in the scene (the natural target for posterior coverage)."""
    if scene.truth_assoc is None or scene.truth_states is None:
        raise ValueError("scene carries no truth")
    state = state_from_association(scene.truth_assoc, scene,
                                   scene.truth_states)
    hmm = params.hmm
    c = association_counts(state, scene)
    p_s = c["surv"] / max(c["surv"] + c["deaths"], 1)
    p_d = c["det"] / max(c["det"] + c["miss"], 1)
    lambda_b = c["births"] / c["n"]
    lambda_f = c["clutter"] / c["n"]
    m, S_x, S_y = transition_stats(state, hmm)
    sigma_x2 = S_x / (2 * m) if m else hmm.sigma_x2
    sigma_y2 = S_y / (2 * m) if m else hmm.sigma_y2
    n_det, S_1, S_2 = obs_noise_stats(state, scene, hmm)
    sigma_r2 = S_1 / n_det if n_det else hmm.sigma_r2
    sigma_b2 = S_2 / n_det if n_det else hmm.sigma_b2
    px, vx, py, vy = birth_stats(state)
    K = len(px)
    mu_bx = float(np.mean(px)) if K else hmm.mu_bx
    mu_by = float(np.mean(py)) if K else hmm.mu_by
    if K:
        if tied_birth:
            sigma_bp2 = float(np.sum((px - mu_bx) ** 2)
                              + np.sum((py - mu_by) ** 2)) / (2 * K)
            sigma_bv2 = float(np.sum(vx ** 2) + np.sum(vy ** 2)) / (2 * K)
        else:
            sigma_bp2 = float(np.sum((px - mu_bx) ** 2)) / K
            sigma_bv2 = float(np.sum(vx ** 2)) / K
    else:
        sigma_bp2, sigma_bv2 = hmm.sigma_bpx2, hmm.sigma_bvx2
    return np.array([p_s, p_d, lambda_b, lambda_f, mu_bx, mu_by,
                     sigma_bp2, sigma_bv2, sigma_x2, sigma_y2,
                     sigma_r2, sigma_b2])


# ---------------------------------------------------------------------------
# the batch sampler


class MttSampler:
    """Batch tracking (and optionally parameter-learning) MCMC sampler.

    Each sweep runs n_moves association moves, n_pg particle-Gibbs state
    refreshments and n_param conjugate parameter updates (0 = parameters
    stay fixed).
    """

    def __init__(self, params: ModelParams, scene: Scene,
                 cfg: MoveConfig | None = None,
                 rng: np.random.Generator | None = None,
                 n_moves: int = 50, n_pg: int = 1, n_param: int = 0,
                 n_particles: int = 15,
                 prior: PriorHyperparams | None = None,
                 tied_birth: bool = True,
                 init_state: ChainState | None = None):
        self.params = params
        self.scene = scene
        self.cfg = cfg or MoveConfig()
        self.cfg.validate()
        self.rng = rng or np.random.default_rng()
        self.n_moves = n_moves
        self.n_pg = n_pg
        self.n_param = n_param
        self.n_particles = n_particles
        self.prior = prior or PriorHyperparams()
        self.tied_birth = tied_birth
        self.state = init_state.copy() if init_state is not None \
            else initial_state(scene)
        self.stats = MoveStats()

    def sweep(self) -> None:
        for _ in range(self.n_moves):
            self.state = mcmc_step(self.params, self.state, self.scene,
                                   self.cfg, self.rng, self.stats)
        for _ in range(self.n_pg):
            self.state = refresh_states(self.params, self.state, self.scene,
                                        self.n_particles, self.rng)
        for _ in range(self.n_param):
            counts = association_counts(self.state, self.scene)
            p_s, p_d, lb, lf = sample_assoc_params(self.prior, counts, self.rng)
            hmm = sample_hmm_params(self.prior, self.state, self.scene,
                                    self.params.hmm, self.rng, self.tied_birth)
            self.params = replace(self.params, hmm=hmm, p_s=p_s, p_d=p_d,
                                  lambda_b=lb, lambda_f=lf)

    def run(self, n_sweeps: int, callback=None):
        for i in range(n_sweeps):
            self.sweep()
            if callback is not None:
                callback(i, self)
        return self

    @property
    def log_joint(self) -> float:
        return chain_log_joint(self.params, self.state, self.scene)
