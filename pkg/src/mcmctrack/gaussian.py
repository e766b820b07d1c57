"""Unscented transform, UKF track filtering with missing observations,
Gaussian backward sampling, and exact Kalman routines for the linear model.

Everything here is a pure function of its inputs; randomness comes from an
explicitly passed numpy Generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (HmmParams, LOG_2PI, obs_mean, obs_residual, wrap_angle)

SYM_TOL = 1e-10
JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


class NumericalError(RuntimeError):
    """Covariance factorisation failed even after jitter escalation."""


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)

    def copy(self) -> "GaussianBelief":
        return GaussianBelief(self.mean.copy(), self.cov.copy())


def symmetrize_clamp(cov: np.ndarray) -> np.ndarray:
    """Symmetrise; clamp negative eigenvalues when the diagonal reveals
    indefiniteness (subtler losses of positivity are absorbed by the jitter
    ladder in safe_cholesky)."""
    cov = 0.5 * (cov + cov.T)
    if float(np.min(np.diagonal(cov))) < 0.0:
        w, v = np.linalg.eigh(cov)
        cov = (v * np.clip(w, 0.0, None)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return cov


def safe_cholesky(cov: np.ndarray) -> np.ndarray:
    # fast path: numpy reads only the lower triangle, so a plain attempt is
    # equivalent to factorising the symmetrised matrix in the common case
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    cov = symmetrize_clamp(cov)
    scale = max(np.max(np.abs(np.diag(cov))), 1.0)
    for jit in JITTERS:
        try:
            return np.linalg.cholesky(cov + jit * scale * np.eye(len(cov)))
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(
        f"Cholesky failed; diagonal={np.diag(cov)}, cond hint={np.linalg.cond(cov):.3e}")


@dataclass
class SigmaPointSet:
    points: np.ndarray   # (2d+1, d)
    w_mean: np.ndarray
    w_cov: np.ndarray
    c: float


def sigma_points(belief: GaussianBelief, c: float | None = None) -> SigmaPointSet:
    """Symmetric sigma points; default scaling c = d + kappa with kappa = 3 - d."""
    d = len(belief.mean)
    if c is None:
        c = 3.0
    if c <= 0:
        raise ValueError("sigma point scaling c must be > 0")
    L = safe_cholesky(belief.cov)
    pts = np.empty((2 * d + 1, d))
    pts[0] = belief.mean
    sq = math.sqrt(c) * L
    pts[1:d + 1] = belief.mean + sq.T
    pts[d + 1:] = belief.mean - sq.T
    w = np.full(2 * d + 1, 1.0 / (2.0 * c))
    w[0] = (c - d) / c
    return SigmaPointSet(points=pts, w_mean=w, w_cov=w.copy(), c=c)


def unscented_transform(belief: GaussianBelief, g, c: float | None = None,
                        residual=None) -> GaussianBelief:
    """Propagate a Gaussian through y = g(x) via the weighted sigma points."""
    sp = sigma_points(belief, c)
    ys = np.asarray([g(p) for p in sp.points], dtype=float)
    m = sp.w_mean @ ys
    diff = ys - m if residual is None else residual(ys, m)
    cov = (diff * sp.w_cov[:, None]).T @ diff
    return GaussianBelief(m, symmetrize_clamp(cov))


# ---------------------------------------------------------------------------
# UKF over one track


def _predict(hmm: HmmParams, belief: GaussianBelief) -> GaussianBelief:
    F = hmm.F
    return GaussianBelief(F @ belief.mean,
                          symmetrize_clamp(F @ belief.cov @ F.T + hmm.Sigma_u))


def _measurement_moments(hmm: HmmParams, pred: GaussianBelief, c: float | None):
    """UT moments of the measurement: (yhat, S, C) with additive noise."""
    sp = sigma_points(pred, c)
    ys = obs_mean(hmm, sp.points)
    if hmm.obs_model == "bearing_range":
        # keep the bearing cloud on one branch before averaging
        ys = ys.copy()
        ys[:, 1] = ys[0, 1] + wrap_angle(ys[:, 1] - ys[0, 1])
    yhat = sp.w_mean @ ys
    dy = ys - yhat
    dx = sp.points - pred.mean
    S = (dy * sp.w_cov[:, None]).T @ dy + hmm.Sigma_v
    C = (dx * sp.w_cov[:, None]).T @ dy
    if hmm.obs_model == "bearing_range":
        yhat = np.array([yhat[0], wrap_angle(yhat[1])])
    return yhat, S, C


def _update(hmm: HmmParams, pred: GaussianBelief, y: np.ndarray,
            c: float | None):
    yhat, S, C = _measurement_moments(hmm, pred, c)
    innov = obs_residual(hmm, y, yhat)
    # closed-form 2x2 inverse on the well-conditioned path
    a, b, d = S[0, 0], 0.5 * (S[0, 1] + S[1, 0]), S[1, 1]
    det = a * d - b * b
    if det > 0.0 and a > 0.0 and d > 0.0:
        S = np.array([[a, b], [b, d]])
        Sinv = np.array([[d, -b], [-b, a]]) / det
        logdet = math.log(det)
    else:
        L = safe_cholesky(symmetrize_clamp(S))
        S = L @ L.T
        Sinv = np.linalg.inv(S)
        logdet = 2.0 * float(np.log(np.diagonal(L)).sum())
    K = C @ Sinv
    mean = pred.mean + K @ innov
    cov = symmetrize_clamp(pred.cov - K @ S @ K.T)
    loglik = float(-0.5 * innov @ Sinv @ innov - 0.5 * logdet - LOG_2PI)
    return GaussianBelief(mean, cov), loglik


def ukf_track_filter(hmm: HmmParams, obs_seq, init: GaussianBelief | None = None,
                     c: float | None = None, init_is_predicted: bool = True):
    """Forward UKF over one track with possible missing observations.

    obs_seq entries are 2-vectors or None (mis-detection: filtered = predicted).
    ``init`` defaults to the birth prior; it is the *predicted* belief for the
    first step unless ``init_is_predicted`` is False (then it is propagated
    through the dynamics first, as for a known boundary state).
    Returns (predicted list, filtered list, per-step log predictive list).
    """
    if len(obs_seq) < 1:
        raise ValueError("obs_seq must have length >= 1")
    if init is None:
        init = GaussianBelief(hmm.mu_b, hmm.Sigma_b)
    preds, filts, logliks = [], [], []
    belief = init if init_is_predicted else _predict(hmm, init)
    for t, y in enumerate(obs_seq):
        if t > 0:
            belief = _predict(hmm, filts[-1])
        preds.append(belief)
        if y is None:
            filts.append(belief.copy())
            logliks.append(0.0)
        else:
            f, ll = _update(hmm, belief, np.asarray(y, dtype=float), c)
            filts.append(f)
            logliks.append(ll)
    return preds, filts, logliks


# ---------------------------------------------------------------------------
# Gaussian backward sampling


def _log_gauss(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    return float(-0.5 * d @ np.linalg.solve(cov, d)
                 - 0.5 * logdet - 0.5 * len(d) * LOG_2PI)


def _condition_on_next(hmm: HmmParams, belief: GaussianBelief,
                       x_next: np.ndarray) -> GaussianBelief:
    """Belief of x_t given x_{t+1}: ~ f(x_{t+1}|x_t) * belief(x_t)."""
    F, Su = hmm.F, hmm.Sigma_u
    P = belief.cov
    Spred = symmetrize_clamp(F @ P @ F.T + Su)
    L = safe_cholesky(Spred)
    Spred = L @ L.T
    J = np.linalg.solve(Spred, F @ P).T
    mean = belief.mean + J @ (x_next - F @ belief.mean)
    cov = symmetrize_clamp(P - J @ Spred @ J.T)
    return GaussianBelief(mean, cov)


def gaussian_backward_sample(filtered, hmm: HmmParams,
                             rng: np.random.Generator | None = None,
                             boundary_after: np.ndarray | None = None,
                             path: np.ndarray | None = None):
    """Sample a state path from the filtered beliefs, back to front.

    With ``boundary_after`` given, the final step is conditioned on the known
    state just after the window.  When ``path`` is supplied no sampling takes
    place and the exact log proposal density of that path is returned.
    Returns (path, log_density).
    """
    T = len(filtered)
    sample = path is None
    if sample:
        if rng is None:
            raise ValueError("rng is required in sample mode")
        path = np.empty((T, len(filtered[0].mean)))
    else:
        path = np.asarray(path, dtype=float)
    logq = 0.0
    belief = filtered[T - 1]
    if boundary_after is not None:
        belief = _condition_on_next(hmm, belief, np.asarray(boundary_after, float))
    for t in range(T - 1, -1, -1):
        if t < T - 1:
            belief = _condition_on_next(hmm, filtered[t], path[t + 1])
        # one factorisation serves both the draw and its density, so the
        # evaluated proposal density matches the sampling law exactly even
        # when the jitter ladder had to regularise the covariance
        L = safe_cholesky(belief.cov)
        if sample:
            path[t] = belief.mean + L @ rng.standard_normal(len(belief.mean))
        z = np.linalg.solve(L, path[t] - belief.mean)
        logq += float(-0.5 * z @ z - np.log(np.diagonal(L)).sum()
                      - 0.5 * len(z) * LOG_2PI)
    return path, logq


# ---------------------------------------------------------------------------
# exact Kalman routines (linear observation model)


@dataclass
class LinearObsModel:
    G: np.ndarray
    Sigma_v: np.ndarray

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.Sigma_v = np.asarray(self.Sigma_v, dtype=float)


def linear_obs_of(hmm: HmmParams) -> LinearObsModel:
    if hmm.obs_model != "linear":
        raise ValueError("hmm does not use the linear observation model")
    return LinearObsModel(G=np.array([[1.0, 0, 0, 0], [0, 0, 1.0, 0]]),
                          Sigma_v=hmm.Sigma_v)


def kalman_filter(hmm: HmmParams, lin: LinearObsModel, obs_seq,
                  init: GaussianBelief | None = None):
    """Exact KF; obs entries may be None. Returns (preds, filts, logliks)."""
    if init is None:
        init = GaussianBelief(hmm.mu_b, hmm.Sigma_b)
    F, Su = hmm.F, hmm.Sigma_u
    G, Sv = lin.G, lin.Sigma_v
    preds, filts, logliks = [], [], []
    belief = init
    for t, y in enumerate(obs_seq):
        if t > 0:
            b = filts[-1]
            belief = GaussianBelief(F @ b.mean,
                                    symmetrize_clamp(F @ b.cov @ F.T + Su))
        preds.append(belief)
        if y is None:
            filts.append(belief.copy())
            logliks.append(0.0)
        else:
            S = G @ belief.cov @ G.T + Sv
            Sinv = np.linalg.inv(S)
            K = belief.cov @ G.T @ Sinv
            innov = np.asarray(y, float) - G @ belief.mean
            mean = belief.mean + K @ innov
            cov = symmetrize_clamp(belief.cov - K @ S @ K.T)
            filts.append(GaussianBelief(mean, cov))
            sign, logdet = np.linalg.slogdet(S)
            logliks.append(float(-0.5 * innov @ Sinv @ innov
                                 - 0.5 * logdet - LOG_2PI))
    return preds, filts, logliks


def kalman_log_marginal(hmm: HmmParams, lin: LinearObsModel, obs_seq,
                        init: GaussianBelief | None = None) -> float:
    """Exact log p(y_{1:l}) by prediction-error decomposition; None entries
    contribute zero."""
    _, _, lls = kalman_filter(hmm, lin, obs_seq, init)
    return float(sum(lls))


def kalman_smoother(hmm: HmmParams, lin: LinearObsModel, obs_seq,
                    init: GaussianBelief | None = None):
    """RTS smoother (test oracle). Returns list of smoothed GaussianBeliefs."""
    preds, filts, _ = kalman_filter(hmm, lin, obs_seq, init)
    F = hmm.F
    T = len(obs_seq)
    smooth = [None] * T
    smooth[T - 1] = filts[T - 1]
    for t in range(T - 2, -1, -1):
        P, Pp = filts[t].cov, preds[t + 1].cov
        J = P @ F.T @ np.linalg.inv(Pp)
        mean = filts[t].mean + J @ (smooth[t + 1].mean - preds[t + 1].mean)
        cov = symmetrize_clamp(P + J @ (smooth[t + 1].cov - Pp) @ J.T)
        smooth[t] = GaussianBelief(mean, cov)
    return smooth
