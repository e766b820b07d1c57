"""Particle filtering for a single track: bootstrap/UKF-proposal particle
filter, multinomial resampling, backward simulation, and the conditional
particle filter used by the particle-Gibbs state refresh.

Observation entries may be None (mis-detection: unit likelihood).
Resampling is multinomial and happens at every step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import HmmParams, log_obs_density


class DegeneracyError(RuntimeError):
    """All particle weights vanished."""


@dataclass
class ParticleSystem:
    particles: np.ndarray   # (T, N, 4)
    weights: np.ndarray     # (T, N), normalised
    ancestors: np.ndarray   # (T, N); row 0 is the identity
    log_lik: float

    @property
    def T(self) -> int:
        return self.particles.shape[0]

    @property
    def N(self) -> int:
        return self.particles.shape[1]


def multinomial_resample(weights: np.ndarray, N: int,
                         rng: np.random.Generator) -> np.ndarray:
    """N i.i.d. categorical draws from the normalised weights (0-based)."""
    weights = np.asarray(weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9 or np.any(weights < 0):
        raise ValueError("weights must be normalised and nonnegative")
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(N)).astype(int)


def _log_weights(hmm: HmmParams, y, xs: np.ndarray) -> np.ndarray:
    if y is None:
        return np.zeros(len(xs))
    return np.asarray(log_obs_density(hmm, np.asarray(y, float), xs), dtype=float)


def _normalise(logw: np.ndarray, t: int):
    m = np.max(logw)
    if not np.isfinite(m):
        raise DegeneracyError(f"all particle weights zero at step {t + 1}")
    w = np.exp(logw - m)
    s = w.sum()
    return w / s, float(m + np.log(s / len(logw)))


def _propagate(hmm: HmmParams, xs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    Lu = np.linalg.cholesky(hmm.Sigma_u)
    return xs @ hmm.F.T + rng.standard_normal(xs.shape) @ Lu.T


def _sample_initial(hmm: HmmParams, N: int, rng: np.random.Generator) -> np.ndarray:
    sd = np.sqrt(np.diag(hmm.Sigma_b))
    return hmm.mu_b + sd * rng.standard_normal((N, 4))


def particle_filter(hmm: HmmParams, obs_seq, N: int,
                    rng: np.random.Generator) -> ParticleSystem:
    """Bootstrap particle filter over one track.

    The proposal is the transition density, so the incremental weight is
    the observation likelihood (1 for mis-detections).  log_lik accumulates
    log of the per-step average unnormalised weight.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    T = len(obs_seq)
    particles = np.empty((T, N, 4))
    weights = np.empty((T, N))
    ancestors = np.empty((T, N), dtype=int)
    ancestors[0] = np.arange(N)
    log_lik = 0.0
    particles[0] = _sample_initial(hmm, N, rng)
    weights[0], inc = _normalise(_log_weights(hmm, obs_seq[0], particles[0]), 0)
    log_lik += inc
    for t in range(1, T):
        anc = multinomial_resample(weights[t - 1], N, rng)
        ancestors[t] = anc
        particles[t] = _propagate(hmm, particles[t - 1][anc], rng)
        weights[t], inc = _normalise(_log_weights(hmm, obs_seq[t], particles[t]), t)
        log_lik += inc
    return ParticleSystem(particles, weights, ancestors, log_lik)


def conditional_particle_filter(hmm: HmmParams, obs_seq, N: int,
                                retained: np.ndarray,
                                rng: np.random.Generator) -> ParticleSystem:
    """Particle filter with slot 0 pinned to the retained path."""
    retained = np.asarray(retained, dtype=float).reshape(-1, 4)
    T = len(obs_seq)
    if len(retained) != T:
        raise ValueError("retained path length must equal obs_seq length")
    if N < 1:
        raise ValueError("N must be >= 1")
    particles = np.empty((T, N, 4))
    weights = np.empty((T, N))
    ancestors = np.empty((T, N), dtype=int)
    ancestors[0] = np.arange(N)
    log_lik = 0.0
    particles[0] = _sample_initial(hmm, N, rng)
    particles[0, 0] = retained[0]
    weights[0], inc = _normalise(_log_weights(hmm, obs_seq[0], particles[0]), 0)
    log_lik += inc
    for t in range(1, T):
        anc = multinomial_resample(weights[t - 1], N, rng)
        anc[0] = 0
        ancestors[t] = anc
        particles[t] = _propagate(hmm, particles[t - 1][anc], rng)
        particles[t, 0] = retained[t]
        weights[t], inc = _normalise(_log_weights(hmm, obs_seq[t], particles[t]), t)
        log_lik += inc
    return ParticleSystem(particles, weights, ancestors, log_lik)


def backward_simulate(ps: ParticleSystem, hmm: HmmParams,
                      rng: np.random.Generator):
    """Draw one path from the particle approximation, back to front.

    Backward weights at t are W_t^m * f(x_{t+1}^{b_{t+1}} | x_t^m).
    Returns (indices b_{1:T}, path (T, 4))."""
    T, N = ps.T, ps.N
    F = hmm.F
    Su_inv = np.linalg.inv(hmm.Sigma_u)
    idx = np.empty(T, dtype=int)
    idx[T - 1] = multinomial_resample(ps.weights[T - 1], 1, rng)[0]
    for t in range(T - 2, -1, -1):
        diff = ps.particles[t + 1, idx[t + 1]] - ps.particles[t] @ F.T
        logf = -0.5 * np.einsum("ni,ij,nj->n", diff, Su_inv, diff)
        logw = np.log(ps.weights[t], out=np.full(N, -np.inf),
                      where=ps.weights[t] > 0) + logf
        m = np.max(logw)
        if not np.isfinite(m):
            raise DegeneracyError(f"all backward weights zero at step {t + 1}")
        w = np.exp(logw - m)
        idx[t] = multinomial_resample(w / w.sum(), 1, rng)[0]
    path = ps.particles[np.arange(T), idx]
    return idx, path
