"""Reversible-jump Metropolis-Hastings moves on the track configuration.

Six moves, in reverse pairs: track birth/death, track extension/reduction,
and two self-paired moves that rewire the target links at a single scan
boundary (state move) or the target-observation links at a single scan
(measurement move), refreshing the states in a window around the edited
scan from a UKF forward filter followed by Gaussian backward sampling.

Every move supports two modes through its ``path`` argument.  With
``path=None`` the move samples all discrete choices and new states from the
supplied RNG and records them in the returned path.  With a complete path
given, the move replays it deterministically and returns the exact same
acceptance ratio arithmetic; the returned ``reverse_path`` replayed from the
proposed state reproduces the original state bit for bit with the negated
log ratio.  That symmetry is what the reversibility tests check.

Track births propose the death time and the claimed observations with a
grouping recursion that walks forward in blocks of ``t_m`` scans (the
smallest horizon over which a missed detection is improbable), picking
nearby unassigned observations in proportion to their likelihood under a
UKF predicted mean.  The same sequence of choices can arise from several
initial death-time guesses, so the acceptance ratio uses the proposal
probability marginalised over every generating choice sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainState
from .gaussian import (GaussianBelief, _predict, _update,
                       gaussian_backward_sample, ukf_track_filter)
from .model import (MISS, ModelParams, Scene, Track, log_obs_density,
                    scan_count_log_term, track_log_term)

MOVE_NAMES = ("birth", "death", "extension", "reduction",
              "state", "measurement")
# reverse-move pairing, by index into MOVE_NAMES
PAIR = (1, 0, 3, 2, 4, 5)

NEG_INF = -np.inf


def logsumexp(a):
    """log-sum-exp of a small 1-d array; -inf for empty or all -inf input."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return NEG_INF
    m = float(a.max())
    if not np.isfinite(m):
        return m
    return m + math.log(float(np.exp(a - m).sum()))


class MoveError(RuntimeError):
    """A move path was structurally inconsistent with the chain state."""


@dataclass
class MoveConfig:
    """Tuning knobs shared by the association moves.

    p_m: probability of trying to claim an observation (rather than
         skipping ahead) in each block of the birth grouping recursion.
    tau: half-width of the state-refresh window around an edited scan.
    log_gate: minimum log observation likelihood for an observation to be
         offered as a grouping/extension candidate (-inf disables gating).
    ut_c: sigma-point scaling passed to the UKF (None = default).
    move_probs: selection probabilities for the six moves.
    t_m_cap: upper bound on the grouping block length.
    """

    p_m: float = 0.99
    tau: int = 5
    log_gate: float = -np.inf
    ut_c: float | None = None
    move_probs: tuple = (1 / 6,) * 6
    t_m_cap: int = 100

    def validate(self) -> None:
        if not (0.0 < self.p_m < 1.0):
            raise ValueError("p_m must lie strictly in (0, 1)")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")
        if len(self.move_probs) != 6 or abs(sum(self.move_probs) - 1.0) > 1e-9 \
                or min(self.move_probs) < 0:
            raise ValueError("move_probs must be 6 nonnegative numbers summing to 1")


@dataclass
class ProposalResult:
    move: str
    log_ratio: float
    new_state: ChainState | None
    path: dict | None = None
    reverse_path: dict | None = None


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else NEG_INF


def _log1m(p: float) -> float:
    return math.log(1.0 - p) if p < 1.0 else NEG_INF


def compute_tm(p_d: float, p_m: float, cap: int = 100) -> int:
    """Smallest t with (1 - p_d)^t <= 1 - p_m, capped."""
    if p_d >= 1.0:
        return 1
    if p_d <= 0.0:
        return cap
    target = (1.0 - p_m) * (1.0 + 1e-12)
    t = 1
    while (1.0 - p_d) ** t > target and t < cap:
        t += 1
    return t


# ---------------------------------------------------------------------------
# truncated geometric distributions for proposed death / birth times


def _geom_death_logpmf(p_s: float, t_ref: int, n: int, s: int) -> float:
    """Death time proposal on {t_ref+1, ..., n+1}: geometric in the survival
    probability, with the tail mass lumped on n+1 (still alive at the end)."""
    if not (t_ref + 1 <= s <= n + 1):
        return NEG_INF
    if s == n + 1:
        k = n - t_ref
        return 0.0 if k == 0 else k * _log(p_s)
    k = s - t_ref - 1
    return (0.0 if k == 0 else k * _log(p_s)) + _log1m(p_s)


def _sample_geom_death(p_s: float, t_ref: int, n: int,
                       rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for s in range(t_ref + 1, n + 1):
        acc += math.exp(_geom_death_logpmf(p_s, t_ref, n, s))
        if u < acc:
            return s
    return n + 1


def _geom_birth_logpmf(p_s: float, t_ref: int, s: int) -> float:
    """Birth time proposal on {1, ..., t_ref-1}: geometric backwards from
    t_ref, tail mass lumped on scan 1."""
    if not (1 <= s <= t_ref - 1):
        return NEG_INF
    if s == 1:
        k = t_ref - 2
        return 0.0 if k == 0 else k * _log(p_s)
    k = t_ref - 1 - s
    return (0.0 if k == 0 else k * _log(p_s)) + _log1m(p_s)


def _sample_geom_birth(p_s: float, t_ref: int, rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for s in range(t_ref - 1, 1, -1):
        acc += math.exp(_geom_birth_logpmf(p_s, t_ref, s))
        if u < acc:
            return s
    return 1


def _death_block_logpmf(t_d: int, lo: int, hi: int, q: float) -> float:
    """Within-block death time: weights q^(s-lo) on {lo, ..., hi}."""
    if not (lo <= t_d <= hi):
        return NEG_INF
    if q <= 0.0:
        return 0.0 if t_d == lo else NEG_INF
    logw = np.arange(hi - lo + 1) * math.log(q)
    return float(logw[t_d - lo] - logsumexp(logw))


def _sample_death_block(lo: int, hi: int, q: float,
                        rng: np.random.Generator) -> int:
    if q <= 0.0 or hi == lo:
        return lo
    w = q ** np.arange(hi - lo + 1)
    w /= w.sum()
    return lo + int(rng.choice(hi - lo + 1, p=w))


# ---------------------------------------------------------------------------
# grouping proposal for track births


class _BeliefWalker:
    """Predicted UKF beliefs along a growing track, updated at claimed
    observations; deterministic given the claim sequence."""

    def __init__(self, hmm, t_b: int, ut_c):
        self.hmm = hmm
        self.ut_c = ut_c
        self.t0 = t_b
        self.preds = [GaussianBelief(hmm.mu_b, hmm.Sigma_b)]
        self.filts = [self.preds[0]]

    def pred_at(self, s: int) -> GaussianBelief:
        while len(self.preds) <= s - self.t0:
            self.preds.append(_predict(self.hmm, self.filts[-1]))
            self.filts.append(self.preds[-1])
        return self.preds[s - self.t0]

    def claim(self, s: int, y: np.ndarray) -> None:
        pred = self.pred_at(s)
        filt, _ = _update(self.hmm, pred, np.asarray(y, float), self.ut_c)
        i = s - self.t0
        del self.preds[i + 1:], self.filts[i + 1:]
        self.filts[i] = filt


def _scan_candidates(params, scene, cfg, free, s: int, mean: np.ndarray):
    """(indices, log likelihoods) of gated free observations at scan s."""
    js = sorted(free[s - 1])
    if not js:
        return [], np.empty(0)
    ys = scene.obs[s - 1][np.array(js) - 1]
    lg = np.atleast_1d(log_obs_density(params.hmm, ys, mean))
    keep = lg >= cfg.log_gate
    return [j for j, k in zip(js, keep) if k], lg[keep]


def sample_group(params: ModelParams, scene: Scene, cfg: MoveConfig, free,
                 t_b: int, rng: np.random.Generator):
    """Propose (t_d, y_idx) for a track born at t_b from the free pools."""
    n = scene.n
    t_m = compute_tm(params.p_d, cfg.p_m, cfg.t_m_cap)
    q_death = params.p_s * (1.0 - params.p_d)
    td0 = _sample_geom_death(params.p_s, t_b, n, rng)
    walker = _BeliefWalker(params.hmm, t_b, cfg.ut_c)
    assigned = {}
    t_cur = t_b - 1
    while True:
        if t_cur >= td0 - 1:
            t_d = td0
            break
        b_end = min(t_cur + t_m, td0 - 1)
        cand = []
        logw = []
        for s in range(t_cur + 1, b_end + 1):
            js, lg = _scan_candidates(params, scene, cfg, free, s,
                                      walker.pred_at(s).mean)
            cand.extend((s, j) for j in js)
            logw.extend(lg)
        if rng.random() < cfg.p_m:
            if cand:
                logw = np.asarray(logw)
                p = np.exp(logw - logsumexp(logw))
                s, j = cand[int(rng.choice(len(cand), p=p / p.sum()))]
                assigned[s] = j
                walker.claim(s, scene.obs[s - 1][j - 1])
                t_cur = s
                continue
            lo, hi = t_cur + 2, min(t_cur + t_m + 1, td0)
            t_d = _sample_death_block(lo, hi, q_death, rng)
            break
        if td0 <= t_cur + t_m + 1:
            t_d = td0
            break
        t_cur += t_m
    y_idx = np.zeros(t_d - t_b, dtype=int)
    for s, j in assigned.items():
        y_idx[s - t_b] = j
    return t_d, y_idx


def group_log_prob(params: ModelParams, scene: Scene, cfg: MoveConfig, free,
                   t_b: int, t_d: int, y_idx) -> float:
    """Total log probability that the grouping recursion started at t_b emits
    exactly (t_d, y_idx), marginal over every generating choice sequence."""
    n = scene.n
    t_m = compute_tm(params.p_d, cfg.p_m, cfg.t_m_cap)
    q_death = params.p_s * (1.0 - params.p_d)
    log_det, log_skip = _log(cfg.p_m), _log1m(cfg.p_m)
    y_idx = np.asarray(y_idx, dtype=int)
    obs = [(t_b + i, int(j)) for i, j in enumerate(y_idx) if j != MISS]
    for s, j in obs:
        if j not in free[s - 1]:
            return NEG_INF
    hmm = params.hmm
    m = len(obs)

    # Candidate weights depend on the belief, hence on how many claims have
    # been made so far.  Blocks walked with i claims made use the prefix-i
    # belief for every scan they cover, including scans past the next claim,
    # so one table per prefix is required.  All tables are filled lazily.
    preds = [[GaussianBelief(hmm.mu_b, hmm.Sigma_b)]]
    anchors = [t_b]
    lse_cache = [{} for _ in range(m + 1)]

    def pred_at(i, s):
        P = preds[i]
        while len(P) <= s - anchors[i]:
            P.append(_predict(hmm, P[-1]))
        return P[s - anchors[i]]

    def scan_table(i, s):
        out = lse_cache[i].get(s)
        if out is None:
            js, lg = _scan_candidates(params, scene, cfg, free, s,
                                      pred_at(i, s).mean)
            out = (logsumexp(lg) if len(lg) else NEG_INF, dict(zip(js, lg)))
            lse_cache[i][s] = out
        return out

    claim_lw = []
    for i, (s_i, j_i) in enumerate(obs):
        _, table = scan_table(i, s_i)
        if j_i not in table:
            return NEG_INF
        claim_lw.append(table[j_i])
        upd, _ = _update(hmm, pred_at(i, s_i),
                         scene.obs[s_i - 1][j_i - 1], cfg.ut_c)
        preds.append([_predict(hmm, upd)])
        anchors.append(s_i + 1)

    block_cache = {}

    def block_lse(i, lo, hi):
        key = (i, lo, hi)
        out = block_cache.get(key)
        if out is None:
            out = logsumexp([scan_table(i, s)[0] for s in range(lo, hi + 1)])
            block_cache[key] = out
        return out

    def replay(td0: int) -> float:
        contribs = []
        t_cur, i, pref = t_b - 1, 0, 0.0
        while True:
            if t_cur >= td0 - 1:
                if i == len(obs) and t_d == td0:
                    contribs.append(pref)
                break
            b_end = min(t_cur + t_m, td0 - 1)
            if i < len(obs) and obs[i][0] <= b_end:
                s_i, j_i = obs[i]
                pref += log_det + claim_lw[i] - block_lse(i, t_cur + 1, b_end)
                t_cur, i = s_i, i + 1
                continue
            has_cand = np.isfinite(block_lse(i, t_cur + 1, b_end))
            if i == len(obs) and not has_cand:
                lo, hi = t_cur + 2, min(t_cur + t_m + 1, td0)
                d = _death_block_logpmf(t_d, lo, hi, q_death)
                if np.isfinite(d):
                    contribs.append(pref + log_det + d)
            if td0 <= t_cur + t_m + 1:
                if i == len(obs) and t_d == td0:
                    contribs.append(pref + log_skip)
                break
            pref += log_skip
            t_cur += t_m
        return float(logsumexp(contribs)) if contribs else NEG_INF

    total = [_geom_death_logpmf(params.p_s, t_b, n, td0) + replay(td0)
             for td0 in range(max(t_d, t_b + 1), n + 2)]
    return float(logsumexp(total)) if total else NEG_INF


# ---------------------------------------------------------------------------
# shared helpers


def _track_obs_seq(tr: Track, scene: Scene, mask_rows=()) -> list:
    out = []
    for r in range(tr.length):
        j = int(tr.y_idx[r])
        if r in mask_rows or j == MISS:
            out.append(None)
        else:
            out.append(scene.obs[tr.t_b + r - 1][j - 1])
    return out


def _propose_track_states(params, tr: Track, scene, cfg, rng=None, given=None,
                          rows=None, mask_rows=(), boundary_after_end=None):
    """UKF forward + Gaussian backward over a row range of one track.

    rows defaults to the full track.  The init belief is the birth prior when
    the range starts at the first row, else a point mass on the preceding
    (kept) state.  In sample mode the rows of tr.states are overwritten; in
    evaluate mode (``given``) the log proposal density of those values is
    returned and the rows are set to them.
    """
    hmm = params.hmm
    r0, r1 = (0, tr.length - 1) if rows is None else rows
    obs_seq = _track_obs_seq(tr, scene, mask_rows)[r0:r1 + 1]
    if r0 == 0:
        init, init_pred = None, True
    else:
        init = GaussianBelief(tr.states[r0 - 1], np.zeros((4, 4)))
        init_pred = False
    if r1 + 1 < tr.length:
        ba = tr.states[r1 + 1]
    else:
        ba = boundary_after_end
    _, filts, _ = ukf_track_filter(hmm, obs_seq, init, cfg.ut_c, init_pred)
    vals, logq = gaussian_backward_sample(filts, hmm, rng, ba,
                                          None if given is None else given)
    tr.states[r0:r1 + 1] = vals
    return float(logq)


def _delta_scan_terms(params, scene, old: ChainState, new: ChainState,
                      scans) -> float:
    out = 0.0
    for t in set(scans):
        out += scan_count_log_term(params, new.k_b_at(t), new.k_f_at(t),
                                   scene.k_y(t))
        out -= scan_count_log_term(params, old.k_b_at(t), old.k_f_at(t),
                                   scene.k_y(t))
    return out


def _pick_softmax(keys, logws, rng=None, pick=None):
    """Categorical over keys with log weights.  Sample mode returns
    (key, logq); evaluate mode returns logq of ``pick`` (-inf if absent)."""
    logws = np.asarray(logws, dtype=float)
    if len(keys) == 0:
        return (None, NEG_INF) if pick is None else NEG_INF
    lse = logsumexp(logws)
    if not np.isfinite(lse):
        return (None, NEG_INF) if pick is None else NEG_INF
    if pick is not None:
        for k, lw in zip(keys, logws):
            if k == pick:
                return float(lw - lse)
        return NEG_INF
    p = np.exp(logws - lse)
    i = int(rng.choice(len(keys), p=p / p.sum()))
    return keys[i], float(logws[i] - lse)


# ---------------------------------------------------------------------------
# birth / death


def birth_move(params: ModelParams, state: ChainState, scene: Scene,
               cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    n = scene.n
    if path is None:
        t_b = int(rng.integers(1, n + 1))
        t_d, y_idx = sample_group(params, scene, cfg, state.free, t_b, rng)
        path = {"move": "birth", "t_b": t_b, "t_d": t_d, "y_idx": y_idx,
                "states": None}
    t_b, t_d, y_idx = path["t_b"], path["t_d"], np.asarray(path["y_idx"], int)
    l = t_d - t_b
    tr = Track(t_b, t_d, np.zeros((l, 4)), y_idx.copy())
    logq_x = _propose_track_states(params, tr, scene, cfg, rng,
                                   given=path["states"])
    path = dict(path, states=tr.states.copy())
    logq_z = group_log_prob(params, scene, cfg, state.free, t_b, t_d, y_idx)
    if not np.isfinite(logq_z):
        return ProposalResult("birth", NEG_INF, None, path)

    new = state.copy()
    new.tracks.append(tr)
    scans = {t_b}
    for i, j in enumerate(y_idx):
        if j != MISS:
            new.free[t_b + i - 1].discard(int(j))
            scans.add(t_b + i)
    dlogp = track_log_term(params, tr, scene) \
        + _delta_scan_terms(params, scene, state, new, scans)
    logq_fwd = -math.log(n) + logq_z + logq_x
    logq_rev = -math.log(state.K + 1)
    rev = {"move": "death", "track": state.K}
    return ProposalResult("birth", dlogp + logq_rev - logq_fwd, new, path, rev)


def death_move(params: ModelParams, state: ChainState, scene: Scene,
               cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    if state.K == 0:
        return ProposalResult("death", NEG_INF, None, {"move": "death"})
    if path is None:
        path = {"move": "death", "track": int(rng.integers(state.K))}
    k = path["track"]
    tr = state.tracks[k]
    new = state.copy()
    del new.tracks[k]
    scans = {tr.t_b}
    for i, j in enumerate(tr.y_idx):
        if j != MISS:
            new.free[tr.t_b + i - 1].add(int(j))
            scans.add(tr.t_b + i)
    logq_z = group_log_prob(params, scene, cfg, new.free, tr.t_b, tr.t_d,
                            tr.y_idx)
    if not np.isfinite(logq_z):
        return ProposalResult("death", NEG_INF, None, path)
    tmp = tr.copy()
    logq_x = _propose_track_states(params, tmp, scene, cfg,
                                   given=tr.states.copy())
    dlogp = -track_log_term(params, tr, scene) \
        + _delta_scan_terms(params, scene, state, new, scans)
    logq_fwd = -math.log(state.K)
    logq_rev = -math.log(scene.n) + logq_z + logq_x
    rev = {"move": "birth", "t_b": tr.t_b, "t_d": tr.t_d,
           "y_idx": tr.y_idx.copy(), "states": tr.states.copy()}
    return ProposalResult("death", dlogp + logq_rev - logq_fwd, new, path, rev)


# ---------------------------------------------------------------------------
# extension / reduction


def _extend_choices(params, scene, cfg, free, tr_boundary_state, scans,
                    forward: bool, rng=None, given=None):
    """Claim observations over the extension scans.

    scans runs outward from the existing track.  Returns (y_ext, logq);
    in evaluate mode ``given`` supplies y_ext.
    """
    hmm = params.hmm
    sample = given is None
    y_ext = np.zeros(len(scans), dtype=int) if sample else np.asarray(given, int)
    logq = 0.0
    filt = GaussianBelief(np.asarray(tr_boundary_state, float), np.zeros((4, 4)))
    for r, s in enumerate(scans):
        if forward:
            pred = _predict(hmm, filt)
        else:
            F_inv = hmm.F_inv
            pred = GaussianBelief(F_inv @ filt.mean,
                                  F_inv @ (filt.cov + hmm.Sigma_u) @ F_inv.T)
        js, lg = _scan_candidates(params, scene, cfg, free, s, pred.mean)
        if not js:
            if not sample and y_ext[r] != MISS:
                return y_ext, NEG_INF
            filt = pred
            continue
        if sample:
            if rng.random() < params.p_d:
                j, lq = _pick_softmax(js, lg, rng=rng)
                y_ext[r] = j
                logq += _log(params.p_d) + lq
                filt, _ = _update(hmm, pred, scene.obs[s - 1][j - 1], cfg.ut_c)
            else:
                logq += _log1m(params.p_d)
                filt = pred
        else:
            j = int(y_ext[r])
            if j == MISS:
                logq += _log1m(params.p_d)
                filt = pred
            else:
                lq = _pick_softmax(js, lg, pick=j)
                logq += _log(params.p_d) + lq
                filt, _ = _update(hmm, pred, scene.obs[s - 1][j - 1], cfg.ut_c)
        if not np.isfinite(logq):
            return y_ext, NEG_INF
    return y_ext, float(logq)


def extension_move(params: ModelParams, state: ChainState, scene: Scene,
                   cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    n = scene.n
    if state.K == 0:
        return ProposalResult("extension", NEG_INF, None, {"move": "extension"})
    if path is None:
        k = int(rng.integers(state.K))
        direction = "fwd" if rng.random() < 0.5 else "bwd"
        path = {"move": "extension", "track": k, "direction": direction,
                "t_new": None, "y_ext": None, "states": None}
    k, direction = path["track"], path["direction"]
    tr = state.tracks[k]
    forward = direction == "fwd"
    if (forward and tr.t_d > n) or (not forward and tr.t_b < 2):
        return ProposalResult("extension", NEG_INF, None, path)

    if forward:
        if path["t_new"] is None:
            path["t_new"] = _sample_geom_death(params.p_s, tr.t_d, n, rng)
        t_new = path["t_new"]
        logq_t = _geom_death_logpmf(params.p_s, tr.t_d, n, t_new)
        scans = list(range(tr.t_d, t_new))
        boundary = tr.states[-1]
    else:
        if path["t_new"] is None:
            path["t_new"] = _sample_geom_birth(params.p_s, tr.t_b, rng)
        t_new = path["t_new"]
        logq_t = _geom_birth_logpmf(params.p_s, tr.t_b, t_new)
        scans = list(range(tr.t_b - 1, t_new - 1, -1))
        boundary = tr.states[0]
    y_ext, logq_obs = _extend_choices(params, scene, cfg, state.free, boundary,
                                      scans, forward, rng, path["y_ext"])
    path["y_ext"] = y_ext
    if not np.isfinite(logq_t + logq_obs):
        return ProposalResult("extension", NEG_INF, None, path)

    # assemble the extended track; extension rows in time order
    m = len(scans)
    if forward:
        new_tr = Track(tr.t_b, t_new,
                       np.concatenate([tr.states, np.zeros((m, 4))]),
                       np.concatenate([tr.y_idx, y_ext]))
        rows = (tr.length, tr.length + m - 1)
    else:
        new_tr = Track(t_new, tr.t_d,
                       np.concatenate([np.zeros((m, 4)), tr.states]),
                       np.concatenate([y_ext[::-1], tr.y_idx]))
        rows = (0, m - 1)
    logq_x = _propose_track_states(params, new_tr, scene, cfg, rng,
                                   given=path["states"], rows=rows)
    path = dict(path, states=new_tr.states[rows[0]:rows[1] + 1].copy())

    new = state.copy()
    new.tracks[k] = new_tr
    scans_touched = set()
    for r, s in enumerate(scans):
        if y_ext[r] != MISS:
            new.free[s - 1].discard(int(y_ext[r]))
            scans_touched.add(s)
    if not forward:
        scans_touched.update((tr.t_b, t_new))
    dlogp = track_log_term(params, new_tr, scene) \
        - track_log_term(params, tr, scene) \
        + _delta_scan_terms(params, scene, state, new, scans_touched)

    if forward:
        cut, kind = tr.t_d, "tail"
        n_cuts = new_tr.t_d - 1 - new_tr.t_b
    else:
        cut, kind = tr.t_b - 1, "head"
        n_cuts = new_tr.t_d - 1 - new_tr.t_b
    logq_fwd = -math.log(state.K) - math.log(2.0) + logq_t + logq_obs + logq_x
    logq_rev = -math.log(state.K) - math.log(2.0) - math.log(n_cuts)
    rev = {"move": "reduction", "track": k, "kind": kind, "cut": cut}
    return ProposalResult("extension", dlogp + logq_rev - logq_fwd, new,
                          path, rev)


def reduction_move(params: ModelParams, state: ChainState, scene: Scene,
                   cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    n = scene.n
    if state.K == 0:
        return ProposalResult("reduction", NEG_INF, None, {"move": "reduction"})
    if path is None:
        k = int(rng.integers(state.K))
        kind = "tail" if rng.random() < 0.5 else "head"
        path = {"move": "reduction", "track": k, "kind": kind, "cut": None}
    k, kind = path["track"], path["kind"]
    tr = state.tracks[k]
    if kind == "tail":
        cuts = list(range(tr.t_b + 1, tr.t_d))
    else:
        cuts = list(range(tr.t_b, tr.t_d - 1))
    if not cuts:
        return ProposalResult("reduction", NEG_INF, None, path)
    if path["cut"] is None:
        path["cut"] = int(cuts[rng.integers(len(cuts))])
    cut = path["cut"]
    if cut not in cuts:
        raise MoveError(f"illegal {kind} cut {cut} for track ({tr.t_b}, {tr.t_d})")

    if kind == "tail":
        keep = slice(0, cut - tr.t_b)
        drop_scans = list(range(cut, tr.t_d))
        new_tr = Track(tr.t_b, cut, tr.states[keep].copy(), tr.y_idx[keep].copy())
        dropped = tr.y_idx[cut - tr.t_b:]
        drop_states = tr.states[cut - tr.t_b:].copy()
    else:
        keep = slice(cut + 1 - tr.t_b, tr.length)
        drop_scans = list(range(cut, tr.t_b - 1, -1))   # outward order
        new_tr = Track(cut + 1, tr.t_d, tr.states[keep].copy(), tr.y_idx[keep].copy())
        dropped = tr.y_idx[:cut + 1 - tr.t_b][::-1]      # outward order
        drop_states = tr.states[:cut + 1 - tr.t_b].copy()

    new = state.copy()
    new.tracks[k] = new_tr
    scans_touched = set()
    for r, s in enumerate(drop_scans):
        j = int(dropped[r])
        if j != MISS:
            new.free[s - 1].add(j)
            scans_touched.add(s)
    if kind == "head":
        scans_touched.update((tr.t_b, new_tr.t_b))

    # reverse extension replayed from the reduced state
    forward = kind == "tail"
    if forward:
        logq_t = _geom_death_logpmf(params.p_s, new_tr.t_d, n, tr.t_d)
        boundary = new_tr.states[-1]
        rev_states = drop_states
        rows = (new_tr.length, tr.length - 1)
    else:
        logq_t = _geom_birth_logpmf(params.p_s, new_tr.t_b, tr.t_b)
        boundary = new_tr.states[0]
        rev_states = drop_states
        rows = (0, cut + 1 - tr.t_b - 1)
    _, logq_obs = _extend_choices(params, scene, cfg, new.free, boundary,
                                  drop_scans, forward, given=dropped)
    if not np.isfinite(logq_t + logq_obs):
        return ProposalResult("reduction", NEG_INF, None, path)
    tmp = tr.copy()
    logq_x = _propose_track_states(params, tmp, scene, cfg, given=rev_states,
                                   rows=rows)

    dlogp = track_log_term(params, new_tr, scene) \
        - track_log_term(params, tr, scene) \
        + _delta_scan_terms(params, scene, state, new, scans_touched)
    logq_fwd = -math.log(state.K) - math.log(2.0) - math.log(len(cuts))
    logq_rev = -math.log(state.K) - math.log(2.0) + logq_t + logq_obs + logq_x
    rev = {"move": "extension", "track": k,
           "direction": "fwd" if forward else "bwd",
           "t_new": tr.t_d if forward else tr.t_b,
           "y_ext": np.asarray(dropped, int).copy(),
           "states": rev_states}
    return ProposalResult("reduction", dlogp + logq_rev - logq_fwd, new,
                          path, rev)


# ---------------------------------------------------------------------------
# state move: rewire target links at the boundary between scans t and t+1


def _split_track(tr: Track, t: int):
    r = t - tr.t_b + 1
    pre = Track(tr.t_b, t + 1, tr.states[:r].copy(), tr.y_idx[:r].copy())
    suf = Track(t + 1, tr.t_d, tr.states[r:].copy(), tr.y_idx[r:].copy())
    return pre, suf


def _join_tracks(pre: Track, suf: Track) -> Track:
    if pre.t_d != suf.t_b:
        raise MoveError("track join mismatch")
    return Track(pre.t_b, suf.t_d,
                 np.concatenate([pre.states, suf.states]),
                 np.concatenate([pre.y_idx, suf.y_idx]))


def _state_sets(state: ChainState, t: int, a: int):
    """(others-with-descendant, childless-others, newborns-at-t+1)."""
    B = [k for k, tr in enumerate(state.tracks)
         if k != a and tr.t_b <= t < tr.t_d and tr.t_d > t + 1]
    C = [k for k, tr in enumerate(state.tracks)
         if k != a and tr.t_b <= t < tr.t_d and tr.t_d == t + 1]
    N = [k for k, tr in enumerate(state.tracks) if tr.t_b == t + 1]
    return B, C, N


def _state_applicable(a_has_desc: bool, nB: int, nC: int, nN: int):
    """(applicable sub-move ids, choice count per id)."""
    if a_has_desc:
        cand = {1: nB, 2: nB, 3: nB * nC, 4: nN, 5: nN * nC, 6: 1}
    else:
        cand = {7: nN, 8: nB}
    return {m: c for m, c in cand.items() if c > 0}


def _state_link_logq(state: ChainState, n: int, t: int, a: int, sub: int) -> float:
    """Log probability of the discrete part of a state-move path."""
    tr = state.tracks[a]
    B, C, N = _state_sets(state, t, a)
    app = _state_applicable(tr.t_d > t + 1, len(B), len(C), len(N))
    if sub not in app:
        return NEG_INF
    k_x = len(state.alive_at(t))
    return (-math.log(n - 1) - math.log(k_x)
            - math.log(len(app)) - math.log(app[sub]))


def _resample_window(params, tr: Track, scene, t: int, cfg, rng=None,
                     given=None, mask_rows=()):
    """Refresh tr.states on the window around scan t; returns log density."""
    ws = max(tr.t_b, t - cfg.tau + 1)
    we = min(tr.t_d - 1, t + cfg.tau)
    rows = (ws - tr.t_b, we - tr.t_b)
    return _propose_track_states(params, tr, scene, cfg, rng, given=given,
                                 rows=rows, mask_rows=mask_rows)


def _window_rows(tr: Track, t: int, cfg) -> tuple:
    ws = max(tr.t_b, t - cfg.tau + 1)
    we = min(tr.t_d - 1, t + cfg.tau)
    return ws - tr.t_b, we - tr.t_b


def state_move(params: ModelParams, state: ChainState, scene: Scene,
               cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    n = scene.n
    if n < 2:
        return ProposalResult("state", NEG_INF, None, {"move": "state"})
    if path is None:
        t = int(rng.integers(1, n))
        alive = state.alive_at(t)
        if not alive:
            return ProposalResult("state", NEG_INF, None,
                                  {"move": "state", "t": t})
        a = int(alive[rng.integers(len(alive))])
        tr = state.tracks[a]
        B, C, N = _state_sets(state, t, a)
        app = _state_applicable(tr.t_d > t + 1, len(B), len(C), len(N))
        if not app:
            return ProposalResult("state", NEG_INF, None,
                                  {"move": "state", "t": t, "track": a})
        sub = list(app)[int(rng.integers(len(app)))]
        b = int(B[rng.integers(len(B))]) if sub in (1, 2, 3, 8) else None
        c = int(C[rng.integers(len(C))]) if sub in (3, 5) else None
        nn = int(N[rng.integers(len(N))]) if sub in (4, 5, 7) else None
        path = {"move": "state", "t": t, "track": a, "sub": sub,
                "b": b, "c": c, "nn": nn, "win": None}
    t, a, sub = path["t"], path.get("track"), path.get("sub")
    if sub is None:
        return ProposalResult("state", NEG_INF, None, path)
    b, c, nn = path.get("b"), path.get("c"), path.get("nn")
    logq_links_fwd = _state_link_logq(state, n, t, a, sub)
    if not np.isfinite(logq_links_fwd):
        return ProposalResult("state", NEG_INF, None, path)

    tracks = state.tracks
    A = tracks[a]
    new_tracks = list(tracks)

    def sh(i, removed):
        return i - 1 if removed is not None and i > removed else i

    removed = None
    appended = None
    if sub in (1, 2, 3, 4, 5, 6):
        preA, sufA = _split_track(A, t)
    if sub == 1:
        preB, sufB = _split_track(tracks[b], t)
        new_tracks[a] = _join_tracks(preA, sufB)
        new_tracks[b] = preB
        new_tracks.append(sufA)
        appended = len(new_tracks) - 1
        affected_new = [a, b, appended]
        affected_old = [a, b]
        rev = {"sub": 5, "track": a, "b": None, "c": b, "nn": appended}
    elif sub == 2:
        preB, sufB = _split_track(tracks[b], t)
        new_tracks[a] = _join_tracks(preA, sufB)
        new_tracks[b] = _join_tracks(preB, sufA)
        affected_new = [a, b]
        affected_old = [a, b]
        rev = {"sub": 2, "track": a, "b": b, "c": None, "nn": None}
    elif sub == 3:
        preB, sufB = _split_track(tracks[b], t)
        new_tracks[a] = _join_tracks(preA, sufB)
        new_tracks[b] = preB
        new_tracks[c] = _join_tracks(tracks[c], sufA)
        affected_new = [a, b, c]
        affected_old = [a, b, c]
        rev = {"sub": 3, "track": a, "b": c, "c": b, "nn": None}
    elif sub == 4:
        new_tracks[a] = _join_tracks(preA, tracks[nn])
        new_tracks[nn] = sufA
        affected_new = [a, nn]
        affected_old = [a, nn]
        rev = {"sub": 4, "track": a, "b": None, "c": None, "nn": nn}
    elif sub == 5:
        new_tracks[a] = _join_tracks(preA, tracks[nn])
        new_tracks[c] = _join_tracks(tracks[c], sufA)
        del new_tracks[nn]
        removed = nn
        affected_new = [sh(a, nn), sh(c, nn)]
        affected_old = [a, nn, c]
        rev = {"sub": 1, "track": sh(a, nn), "b": sh(c, nn),
               "c": None, "nn": None}
    elif sub == 6:
        new_tracks[a] = preA
        new_tracks.append(sufA)
        appended = len(new_tracks) - 1
        affected_new = [a, appended]
        affected_old = [a]
        rev = {"sub": 7, "track": a, "b": None, "c": None, "nn": appended}
    elif sub == 7:
        new_tracks[a] = _join_tracks(A, tracks[nn])
        del new_tracks[nn]
        removed = nn
        affected_new = [sh(a, nn)]
        affected_old = [a, nn]
        rev = {"sub": 6, "track": sh(a, nn), "b": None, "c": None, "nn": None}
    elif sub == 8:
        preB, sufB = _split_track(tracks[b], t)
        new_tracks[a] = _join_tracks(A, sufB)
        new_tracks[b] = preB
        affected_new = [a, b]
        affected_old = [a, b]
        rev = {"sub": 8, "track": b, "b": a, "c": None, "nn": None}
    else:
        raise MoveError(f"unknown state sub-move {sub}")

    new = ChainState(tracks=new_tracks, free=[set(s) for s in state.free])

    # refresh states on the windows of every rewired track
    win_given = path.get("win")
    logq_win_fwd = 0.0
    win_record = {}
    for idx in affected_new:
        trk = new.tracks[idx].copy()
        g = None if win_given is None else win_given[idx]
        logq_win_fwd += _resample_window(params, trk, scene, t, cfg, rng, g)
        new.tracks[idx] = trk
        r0, r1 = _window_rows(trk, t, cfg)
        win_record[idx] = trk.states[r0:r1 + 1].copy()
    path = dict(path, win=win_record)

    # reverse path: the window values are the old states of the rewired tracks
    rev_win = {}
    logq_win_rev = 0.0
    for idx in affected_old:
        trk = state.tracks[idx]
        r0, r1 = _window_rows(trk, t, cfg)
        key = idx
        rev_win[key] = trk.states[r0:r1 + 1].copy()
        tmp = trk.copy()
        logq_win_rev += _resample_window(params, tmp, scene, t, cfg,
                                         given=rev_win[key])
    # remap reverse window keys to the indices the reverse replay will use:
    # the reverse move rebuilds the old tracks at known positions
    rev_positions = _reverse_state_positions(sub, a, b, c, nn,
                                             removed, appended,
                                             len(state.tracks))
    rev_win = {rev_positions[idx]: rev_win[idx] for idx in affected_old}
    rev_path = {"move": "state", "t": t, "track": rev["track"],
                "sub": rev["sub"], "b": rev["b"], "c": rev["c"],
                "nn": rev["nn"], "win": rev_win}

    logq_links_rev = _state_link_logq(new, n, t, rev_path["track"],
                                      rev_path["sub"])
    dlogp = sum(track_log_term(params, new.tracks[i], scene)
                for i in affected_new) \
        - sum(track_log_term(params, state.tracks[i], scene)
              for i in affected_old) \
        + _delta_scan_terms(params, scene, state, new, {t + 1})
    log_ratio = (dlogp + logq_links_rev + logq_win_rev
                 - logq_links_fwd - logq_win_fwd)
    return ProposalResult("state", log_ratio, new, path, rev_path)


def _reverse_state_positions(sub, a, b, c, nn, removed, appended, K_old):
    """Map old-track indices to the positions the reverse sub-move recreates
    them at when replayed on the proposed state."""
    def sh(i):
        return i - 1 if removed is not None and i > removed else i

    if sub == 1:        # reverse 5: joins pre(A')+G' at a, B'+suf(A') at b
        return {a: a, b: b}
    if sub == 2:
        return {a: a, b: b}
    if sub == 3:
        return {a: a, b: b, c: c}
    if sub == 4:        # reverse 4: A back at a, N reborn at appended slot nn
        return {a: a, nn: nn}
    if sub == 5:        # reverse 1: A at sh(a), C at sh(c), N appended at end
        return {a: sh(a), c: sh(c), nn: K_old - 1}
    if sub == 6:        # reverse 7: A back at a (G' removed)
        return {a: a}
    if sub == 7:        # reverse 6: A at sh(a), N appended at end
        return {a: sh(a), nn: K_old - 1}
    if sub == 8:
        return {a: a, b: b}
    raise MoveError(f"unknown state sub-move {sub}")


# ---------------------------------------------------------------------------
# measurement move: rewire target-observation links at one scan


def _meas_sets(state: ChainState, t: int, a: int):
    """(detected-others, misdetected-others) at scan t, and A's obs index."""
    det, mis = [], []
    for k, tr in enumerate(state.tracks):
        if not (tr.t_b <= t < tr.t_d) or k == a:
            continue
        if tr.y_idx[t - tr.t_b] != MISS:
            det.append(k)
        else:
            mis.append(k)
    return det, mis


def _meas_applicable(a_detected: bool, nB: int, nC: int, n_cl: int):
    if a_detected:
        cand = {1: nB, 2: nB, 3: nB * nC, 4: n_cl, 5: n_cl * nC,
                6: 1, 7: nC}
    else:
        cand = {8: n_cl, 9: nB}
    return {m: c for m, c in cand.items() if c > 0}


def measurement_move(params: ModelParams, state: ChainState, scene: Scene,
                     cfg: MoveConfig, rng=None, path=None) -> ProposalResult:
    n = scene.n
    hmm = params.hmm
    if path is None:
        t = int(rng.integers(1, n + 1))
        alive = state.alive_at(t)
        if not alive:
            return ProposalResult("measurement", NEG_INF, None,
                                  {"move": "measurement", "t": t})
        a = int(alive[rng.integers(len(alive))])
        path = {"move": "measurement", "t": t, "track": a, "sub": None,
                "b": None, "c": None, "obs": None, "win": None}
    t, a = path["t"], path.get("track")
    if a is None:
        return ProposalResult("measurement", NEG_INF, None, path)
    A = state.tracks[a]
    row = t - A.t_b
    y_old = int(A.y_idx[row])
    det, mis = _meas_sets(state, t, a)
    clutter = sorted(state.free[t - 1])
    app = _meas_applicable(y_old != MISS, len(det), len(mis), len(clutter))
    if not app:
        return ProposalResult("measurement", NEG_INF, None, path)

    # refresh A's window first, masking the scan-t link; the filter is then
    # identical for the forward and reverse proposals
    newA = A.copy()
    logq_win_fwd = _resample_window(params, newA, scene, t, cfg, rng,
                                    given=path.get("win"), mask_rows=(row,))
    r0, r1 = _window_rows(newA, t, cfg)
    path = dict(path, win=newA.states[r0:r1 + 1].copy())
    x_new = newA.states[row]

    def obs_logw(js):
        ys = scene.obs[t - 1][np.array(js) - 1]
        return np.atleast_1d(log_obs_density(hmm, ys, x_new))

    if path["sub"] is None:
        path["sub"] = list(app)[int(rng.integers(len(app)))]
    sub = path["sub"]
    if sub not in app:
        return ProposalResult("measurement", NEG_INF, None, path)
    logq_choice = -math.log(len(app))

    b, c, obs_j = path.get("b"), path.get("c"), path.get("obs")
    if sub in (1, 2, 3, 9):
        keys = det
        lws = obs_logw([int(state.tracks[k].y_idx[t - state.tracks[k].t_b])
                        for k in det])
        if b is None:
            b, lq = _pick_softmax(keys, lws, rng=rng)
            path["b"] = b
        else:
            lq = _pick_softmax(keys, lws, pick=b)
        logq_choice += lq
    if sub in (4, 5, 8):
        lws = obs_logw(clutter)
        if obs_j is None:
            obs_j, lq = _pick_softmax(clutter, lws, rng=rng)
            path["obs"] = obs_j
        else:
            lq = _pick_softmax(clutter, lws, pick=obs_j)
        logq_choice += lq
    if sub in (3, 5, 7):
        if c is None:
            c = int(mis[rng.integers(len(mis))])
            path["c"] = c
        elif c not in mis:
            return ProposalResult("measurement", NEG_INF, None, path)
        logq_choice += -math.log(len(mis))
    if not np.isfinite(logq_choice):
        return ProposalResult("measurement", NEG_INF, None, path)

    # apply the link surgery
    new = state.copy()
    new.tracks[a] = newA
    y_b = int(state.tracks[b].y_idx[t - state.tracks[b].t_b]) if b is not None else None

    def set_link(state_, k, j):
        tr = state_.tracks[k]
        if tr is state.tracks[k] or tr is A:
            tr = tr.copy()
            state_.tracks[k] = tr
        tr.y_idx[t - tr.t_b] = j

    if sub == 1:
        set_link(new, a, y_b)
        set_link(new, b, MISS)
        new.free[t - 1].add(y_old)
        rev = {"sub": 5, "b": None, "c": b, "obs": y_old}
    elif sub == 2:
        set_link(new, a, y_b)
        set_link(new, b, y_old)
        rev = {"sub": 2, "b": b, "c": None, "obs": None}
    elif sub == 3:
        set_link(new, a, y_b)
        set_link(new, b, MISS)
        set_link(new, c, y_old)
        rev = {"sub": 3, "b": c, "c": b, "obs": None}
    elif sub == 4:
        set_link(new, a, obs_j)
        new.free[t - 1].discard(obs_j)
        new.free[t - 1].add(y_old)
        rev = {"sub": 4, "b": None, "c": None, "obs": y_old}
    elif sub == 5:
        set_link(new, a, obs_j)
        set_link(new, c, y_old)
        new.free[t - 1].discard(obs_j)
        rev = {"sub": 1, "b": c, "c": None, "obs": None}
    elif sub == 6:
        set_link(new, a, MISS)
        new.free[t - 1].add(y_old)
        rev = {"sub": 8, "b": None, "c": None, "obs": y_old}
    elif sub == 7:
        set_link(new, a, MISS)
        set_link(new, c, y_old)
        rev = {"sub": 9, "b": c, "c": None, "obs": None}
    elif sub == 8:
        set_link(new, a, obs_j)
        new.free[t - 1].discard(obs_j)
        rev = {"sub": 6, "b": None, "c": None, "obs": None}
    elif sub == 9:
        set_link(new, a, y_b)
        set_link(new, b, MISS)
        rev = {"sub": 7, "b": None, "c": b, "obs": None}
    else:
        raise MoveError(f"unknown measurement sub-move {sub}")

    # reverse proposal probability, with A's old states as the window values
    x_old = A.states[row]
    det_r, mis_r = _meas_sets(new, t, a)
    clutter_r = sorted(new.free[t - 1])
    y_new = int(new.tracks[a].y_idx[row])
    app_r = _meas_applicable(y_new != MISS, len(det_r), len(mis_r),
                             len(clutter_r))
    rsub = rev["sub"]
    if rsub not in app_r:
        return ProposalResult("measurement", NEG_INF, None, path)
    logq_choice_rev = -math.log(len(app_r))

    def obs_logw_rev(js):
        ys = scene.obs[t - 1][np.array(js) - 1]
        return np.atleast_1d(log_obs_density(hmm, ys, x_old))

    if rsub in (1, 2, 3, 9):
        lws = obs_logw_rev([int(new.tracks[k].y_idx[t - new.tracks[k].t_b])
                            for k in det_r])
        logq_choice_rev += _pick_softmax(det_r, lws, pick=rev["b"])
    if rsub in (4, 5, 8):
        lws = obs_logw_rev(clutter_r)
        logq_choice_rev += _pick_softmax(clutter_r, lws, pick=rev["obs"])
    if rsub in (3, 5, 7):
        if rev["c"] not in mis_r:
            return ProposalResult("measurement", NEG_INF, None, path)
        logq_choice_rev += -math.log(len(mis_r))
    if not np.isfinite(logq_choice_rev):
        return ProposalResult("measurement", NEG_INF, None, path)
    tmpA = A.copy()
    tmpA.y_idx[row] = y_new  # reverse filter masks the row anyway
    logq_win_rev = _resample_window(params, tmpA, scene, t, cfg,
                                    given=A.states[r0:r1 + 1].copy(),
                                    mask_rows=(row,))

    affected = {a}
    if b is not None:
        affected.add(b)
    if c is not None:
        affected.add(c)
    dlogp = sum(track_log_term(params, new.tracks[i], scene) for i in affected) \
        - sum(track_log_term(params, state.tracks[i], scene) for i in affected) \
        + _delta_scan_terms(params, scene, state, new, {t})
    kx = len(state.alive_at(t))
    logq_fwd = -math.log(n) - math.log(kx) + logq_win_fwd + logq_choice
    logq_rev = -math.log(n) - math.log(kx) + logq_win_rev + logq_choice_rev
    rev_path = {"move": "measurement", "t": t, "track": a, "sub": rsub,
                "b": rev["b"], "c": rev["c"], "obs": rev["obs"],
                "win": A.states[r0:r1 + 1].copy()}
    return ProposalResult("measurement", dlogp + logq_rev - logq_fwd, new,
                          path, rev_path)


# ---------------------------------------------------------------------------
# dispatch


_MOVE_FUNCS = {
    "birth": birth_move,
    "death": death_move,
    "extension": extension_move,
    "reduction": reduction_move,
    "state": state_move,
    "measurement": measurement_move,
}


def propose(params, state, scene, cfg, move: str, rng=None, path=None):
    return _MOVE_FUNCS[move](params, state, scene, cfg, rng, path)


@dataclass
class MoveStats:
    proposed: dict = field(default_factory=lambda: {m: 0 for m in MOVE_NAMES})
    accepted: dict = field(default_factory=lambda: {m: 0 for m in MOVE_NAMES})

    def rate(self, move: str | None = None) -> float:
        if move is None:
            p = sum(self.proposed.values())
            return sum(self.accepted.values()) / p if p else 0.0
        p = self.proposed[move]
        return self.accepted[move] / p if p else 0.0


def mcmc_step(params, state, scene, cfg, rng, stats: MoveStats | None = None):
    """One move: select, propose, accept or reject.  Returns the new state."""
    i = int(rng.choice(6, p=np.asarray(cfg.move_probs)))
    move = MOVE_NAMES[i]
    res = propose(params, state, scene, cfg, move, rng)
    log_ratio = res.log_ratio
    # unequal selection probabilities of a move and its reverse enter the ratio
    pi, pr = cfg.move_probs[i], cfg.move_probs[PAIR[i]]
    if np.isfinite(log_ratio) and pi != pr:
        log_ratio += _log(pr) - _log(pi)
    if stats is not None:
        stats.proposed[move] += 1
    if np.isnan(log_ratio):
        log_ratio = NEG_INF
    if res.new_state is not None and math.log(rng.random()) < log_ratio:
        if stats is not None:
            stats.accepted[move] += 1
        return res.new_state
    return state
