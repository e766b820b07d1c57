"""Generative multi-target tracking model.

Targets are born from a Poisson process, survive with a fixed probability,
evolve as nearly-constant-velocity HMMs and are observed (when detected)
through either a linear position sensor or a bearing-range sensor.  Clutter
is Poisson in count and uniform over the observation window.

The module holds the parameter containers, the per-scan ("flat") data
association record, the per-target track view, the bijection between the
two, the simulator and the joint log density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

MISS = 0  # sentinel in observation-index vectors: target alive but undetected

LOG_2PI = math.log(2.0 * math.pi)


class ValidationError(ValueError):
    """An association/scene pair violates a structural invariant."""


# ---------------------------------------------------------------------------
# parameters


@dataclass
class HmmParams:
    """Single-target HMM: constant-velocity dynamics + 2-D sensor.

    State is (s_x, v_x, s_y, v_y).  ``obs_model`` selects the sensor:
    ``"bearing_range"`` observes (range, bearing) with noise variances
    (sigma_r2, sigma_b2); ``"linear"`` observes (s_x, s_y) with the same two
    variances reused as the per-axis noise.
    """

    sigma_x2: float
    sigma_y2: float
    sigma_r2: float
    sigma_b2: float
    mu_bx: float
    mu_by: float
    sigma_bpx2: float
    sigma_bpy2: float
    sigma_bvx2: float
    sigma_bvy2: float
    delta: float = 1.0
    obs_model: str = "bearing_range"

    def validate(self) -> None:
        for name in ("sigma_x2", "sigma_y2", "sigma_r2", "sigma_b2",
                     "sigma_bpx2", "sigma_bpy2", "sigma_bvx2", "sigma_bvy2",
                     "delta"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"HmmParams.{name} must be > 0")
        if self.obs_model not in ("bearing_range", "linear"):
            raise ValidationError(f"unknown obs_model {self.obs_model!r}")

    def _derived(self, key: str, build):
        # derived matrices are cached; instances are treated as immutable
        # (parameter updates go through dataclasses.replace) and consumers
        # never write into these arrays
        cache = self.__dict__.setdefault("_derived_cache", {})
        if key not in cache:
            cache[key] = build()
        return cache[key]

    @property
    def F(self) -> np.ndarray:
        def build():
            d = self.delta
            a = np.array([[1.0, d], [0.0, 1.0]])
            out = np.zeros((4, 4))
            out[:2, :2] = a
            out[2:, 2:] = a
            return out
        return self._derived("F", build)

    @property
    def F_inv(self) -> np.ndarray:
        def build():
            d = self.delta
            a = np.array([[1.0, -d], [0.0, 1.0]])
            out = np.zeros((4, 4))
            out[:2, :2] = a
            out[2:, 2:] = a
            return out
        return self._derived("F_inv", build)

    @property
    def Sigma_u(self) -> np.ndarray:
        def build():
            d = self.delta
            blk = np.array([[d ** 3 / 3.0, d ** 2 / 2.0], [d ** 2 / 2.0, d]])
            out = np.zeros((4, 4))
            out[:2, :2] = self.sigma_x2 * blk
            out[2:, 2:] = self.sigma_y2 * blk
            return out
        return self._derived("Sigma_u", build)

    @property
    def Sigma_u_inv(self) -> np.ndarray:
        return self._derived("Sigma_u_inv", lambda: np.linalg.inv(self.Sigma_u))

    @property
    def Sigma_u_logdet(self) -> float:
        return self._derived(
            "Sigma_u_logdet", lambda: float(np.linalg.slogdet(self.Sigma_u)[1]))

    @property
    def Sigma_v(self) -> np.ndarray:
        return self._derived(
            "Sigma_v", lambda: np.diag([self.sigma_r2, self.sigma_b2]))

    @property
    def mu_b(self) -> np.ndarray:
        return self._derived(
            "mu_b", lambda: np.array([self.mu_bx, 0.0, self.mu_by, 0.0]))

    @property
    def Sigma_b(self) -> np.ndarray:
        return self._derived(
            "Sigma_b", lambda: np.diag([self.sigma_bpx2, self.sigma_bvx2,
                                        self.sigma_bpy2, self.sigma_bvy2]))


@dataclass
class ModelParams:
    """Full model parameter vector plus the observation window.

    ``obs_window`` is an axis-aligned rectangle [[lo1, hi1], [lo2, hi2]] in
    measurement coordinates ((range, bearing) for the bearing-range sensor,
    (x, y) for the linear one); clutter is uniform over it.
    """

    hmm: HmmParams
    p_s: float
    p_d: float
    lambda_b: float
    lambda_f: float
    obs_window: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, 100.0], [0.0, 100.0]]))

    def __post_init__(self):
        self.obs_window = np.asarray(self.obs_window, dtype=float)

    def validate(self) -> None:
        self.hmm.validate()
        if not (0.0 <= self.p_s <= 1.0):
            raise ValidationError("p_s must lie in [0, 1]")
        if not (0.0 <= self.p_d <= 1.0):
            raise ValidationError("p_d must lie in [0, 1]")
        if self.lambda_b < 0 or self.lambda_f < 0:
            raise ValidationError("birth/clutter rates must be >= 0")
        if self.obs_window.shape != (2, 2) or np.any(
                self.obs_window[:, 1] <= self.obs_window[:, 0]):
            raise ValidationError("obs_window must be a nondegenerate rectangle")

    @property
    def obs_volume(self) -> float:
        w = self.obs_window
        return float((w[0, 1] - w[0, 0]) * (w[1, 1] - w[1, 0]))


# ---------------------------------------------------------------------------
# single-target densities


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2.0 * np.pi) - np.pi


def obs_mean(hmm: HmmParams, x: np.ndarray) -> np.ndarray:
    """Noise-free measurement of state(s) x (last axis = 4)."""
    x = np.asarray(x, dtype=float)
    sx, sy = x[..., 0], x[..., 2]
    if hmm.obs_model == "linear":
        return np.stack([sx, sy], axis=-1)
    rng_ = np.hypot(sx, sy)
    brg = np.arctan2(sy, sx)
    return np.stack([rng_, brg], axis=-1)


def obs_residual(hmm: HmmParams, y: np.ndarray, mean: np.ndarray) -> np.ndarray:
    r = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    if hmm.obs_model == "bearing_range":
        r = r.copy()
        r[..., 1] = wrap_angle(r[..., 1])
    return r


def log_obs_density(hmm: HmmParams, y: np.ndarray, x: np.ndarray):
    """log g(y | x); broadcasts over leading axes of x or y."""
    r = obs_residual(hmm, y, obs_mean(hmm, x))
    v1, v2 = hmm.sigma_r2, hmm.sigma_b2
    return (-0.5 * (r[..., 0] ** 2 / v1 + r[..., 1] ** 2 / v2)
            - 0.5 * (math.log(v1) + math.log(v2)) - LOG_2PI)


def _log_mvn(diff: np.ndarray, cov: np.ndarray) -> float:
    sign, logdet = np.linalg.slogdet(cov)
    sol = np.linalg.solve(cov, diff)
    return float(-0.5 * (diff @ sol) - 0.5 * logdet - 0.5 * len(diff) * LOG_2PI)


def log_trans_density(hmm: HmmParams, x_next: np.ndarray, x_prev: np.ndarray) -> float:
    d = np.asarray(x_next) - hmm.F @ np.asarray(x_prev)
    return float(-0.5 * (d @ hmm.Sigma_u_inv @ d)
                 - 0.5 * hmm.Sigma_u_logdet - 2.0 * LOG_2PI)


def log_init_density(hmm: HmmParams, x: np.ndarray) -> float:
    d = np.asarray(x) - hmm.mu_b
    var = np.array([hmm.sigma_bpx2, hmm.sigma_bvx2, hmm.sigma_bpy2, hmm.sigma_bvy2])
    return float(-0.5 * np.sum(d * d / var) - 0.5 * np.sum(np.log(var)) - 2.0 * LOG_2PI)


def log_poisson(k: int, lam: float) -> float:
    if lam == 0.0:
        return 0.0 if k == 0 else -np.inf
    return k * math.log(lam) - lam - math.lgamma(k + 1)


# ---------------------------------------------------------------------------
# flat association record


@dataclass
class Association:
    """Per-scan data association, times 1..n (stored in lists at index t-1).

    c_s[t]: 0/1 survival indicators for the targets of scan t-1 (c_s[1] empty).
    k_b[t], k_f[t]: birth and clutter counts.
    i_d[t]: observation index (1-based) per target at t, 0 = undetected.
    """

    c_s: list
    k_b: list
    k_f: list
    i_d: list

    @property
    def n(self) -> int:
        return len(self.k_b)

    def k_s(self, t: int) -> int:
        return int(np.sum(self.c_s[t - 1]))

    def k_x(self, t: int) -> int:
        if t == 0:
            return 0
        return self.k_s(t) + int(self.k_b[t - 1])

    def k_d(self, t: int) -> int:
        return int(np.sum(np.asarray(self.i_d[t - 1]) > 0))

    def k_y(self, t: int) -> int:
        return self.k_d(t) + int(self.k_f[t - 1])

    def i_s(self, t: int) -> np.ndarray:
        """1-based ancestor indices of the survivors at scan t."""
        return np.flatnonzero(np.asarray(self.c_s[t - 1]) == 1) + 1


def empty_association(scene: "Scene") -> Association:
    """All-clutter association (the convenient chain initialisation)."""
    n = scene.n
    return Association(
        c_s=[np.zeros(0, dtype=int) for _ in range(n)],
        k_b=[0] * n,
        k_f=[len(scene.obs[t]) for t in range(n)],
        i_d=[np.zeros(0, dtype=int) for _ in range(n)],
    )


@dataclass
class Scene:
    """Observed data: per-scan 2-D observation arrays, optional truth."""

    obs: list  # obs[t-1]: (k_y[t], 2) float array
    truth_states: list | None = None  # truth_states[t-1]: (k_x[t], 4)
    truth_assoc: Association | None = None

    @property
    def n(self) -> int:
        return len(self.obs)

    def k_y(self, t: int) -> int:
        return len(self.obs[t - 1])


def validate_association(assoc: Association, scene: Scene,
                         states: list | None = None) -> None:
    """Raise ValidationError naming the first violated invariant."""
    n = scene.n
    if assoc.n != n:
        raise ValidationError("association length differs from scene length")
    if len(assoc.c_s[0]) != 0:
        raise ValidationError("c_s[1] must be empty (no survivors at scan 1)")
    for t in range(1, n + 1):
        cs = np.asarray(assoc.c_s[t - 1])
        if len(cs) != assoc.k_x(t - 1):
            raise ValidationError(f"len(c_s[{t}]) != k_x[{t - 1}]")
        if np.any((cs != 0) & (cs != 1)):
            raise ValidationError(f"c_s[{t}] entries must be 0/1")
        if assoc.k_b[t - 1] < 0 or assoc.k_f[t - 1] < 0:
            raise ValidationError(f"negative birth/clutter count at scan {t}")
        idv = np.asarray(assoc.i_d[t - 1])
        if len(idv) != assoc.k_x(t):
            raise ValidationError(f"len(i_d[{t}]) != k_x[{t}]")
        ky = assoc.k_y(t)
        if ky != scene.k_y(t):
            raise ValidationError(
                f"k_y[{t}] = {ky} inconsistent with scene ({scene.k_y(t)} observations)")
        pos = idv[idv > 0]
        if len(np.unique(pos)) != len(pos):
            raise ValidationError(f"duplicate observation index in i_d[{t}]")
        if np.any(idv < 0) or np.any(pos > ky):
            raise ValidationError(f"i_d[{t}] entries must lie in 0..k_y[{t}]")
        if states is not None and len(states[t - 1]) != assoc.k_x(t):
            raise ValidationError(f"states[{t}] count differs from k_x[{t}]")


# ---------------------------------------------------------------------------
# ordering rule for new-born targets


def ordering_key(state: np.ndarray) -> tuple:
    """Canonical total order on states: ascending first component, ties
    broken by the remaining components lexicographically."""
    return tuple(float(v) for v in state)


def is_canonically_ordered(states: np.ndarray) -> bool:
    keys = [ordering_key(s) for s in states]
    return all(keys[i] <= keys[i + 1] for i in range(len(keys) - 1))


# ---------------------------------------------------------------------------
# simulator


def simulate(params: ModelParams, n: int, rng: np.random.Generator):
    """Draw (association, scene-with-truth) from the joint generative law."""
    params.validate()
    if n < 1:
        raise ValidationError("n must be >= 1")
    hmm = params.hmm
    F, Su = hmm.F, hmm.Sigma_u
    Lu = np.linalg.cholesky(Su)
    Lb = np.sqrt(np.diag(hmm.Sigma_b))
    w = params.obs_window
    sv = np.sqrt([hmm.sigma_r2, hmm.sigma_b2])

    c_s, k_bs, k_fs, i_ds = [], [], [], []
    all_states, all_obs = [], []
    prev_states = np.zeros((0, 4))
    for t in range(1, n + 1):
        surv = (rng.random(len(prev_states)) < params.p_s).astype(int)
        c_s.append(surv)
        kept = prev_states[surv == 1]
        survivors = (kept @ F.T
                     + rng.standard_normal((len(kept), 4)) @ Lu.T).reshape(-1, 4)
        k_b = rng.poisson(params.lambda_b)
        births = hmm.mu_b + Lb * rng.standard_normal((k_b, 4))
        births = births[sorted(range(k_b), key=lambda i: ordering_key(births[i]))]
        states = np.concatenate([survivors, births.reshape(-1, 4)], axis=0)
        k_x = len(states)

        det = rng.random(k_x) < params.p_d
        k_d = int(det.sum())
        k_f = rng.poisson(params.lambda_f)
        k_y = k_d + k_f
        slots = rng.permutation(k_y)[:k_d] + 1 if k_y else np.zeros(0, dtype=int)
        i_d = np.zeros(k_x, dtype=int)
        i_d[det] = slots
        obs = np.empty((k_y, 2))
        clutter_slots = np.setdiff1d(np.arange(1, k_y + 1), slots)
        obs[clutter_slots - 1] = w[:, 0] + rng.random(
            (len(clutter_slots), 2)) * (w[:, 1] - w[:, 0])
        if k_d:
            ys = obs_mean(hmm, states[det]) \
                + sv * rng.standard_normal((k_d, 2))
            if hmm.obs_model == "bearing_range":
                ys[:, 1] = wrap_angle(ys[:, 1])
            obs[slots - 1] = ys

        k_bs.append(int(k_b))
        k_fs.append(int(k_f))
        i_ds.append(i_d)
        all_states.append(states)
        all_obs.append(obs)
        prev_states = states

    assoc = Association(c_s=c_s, k_b=k_bs, k_f=k_fs, i_d=i_ds)
    scene = Scene(obs=all_obs, truth_states=all_states, truth_assoc=assoc)
    return assoc, scene


# ---------------------------------------------------------------------------
# joint density


def log_joint_density(params: ModelParams, assoc: Association, scene: Scene,
                      states: list | None = None):
    """Return (log p(z), log p(x|z), log p(y|x,z)); sum = joint log density.

    ``states`` defaults to the scene truth states.
    """
    params.validate()
    if states is None:
        states = scene.truth_states
    if states is None:
        raise ValidationError("states are required to evaluate the joint density")
    validate_association(assoc, scene, states)
    hmm = params.hmm
    n = scene.n
    logv = math.log(params.obs_volume)

    def xlogy(k, p):
        if k == 0:
            return 0.0
        return -np.inf if p <= 0.0 else k * math.log(p)

    log_pz = 0.0
    log_px = 0.0
    log_py = 0.0
    for t in range(1, n + 1):
        k_s, k_b, k_f = assoc.k_s(t), assoc.k_b[t - 1], assoc.k_f[t - 1]
        k_xm = assoc.k_x(t - 1)
        k_x, k_d, k_y = assoc.k_x(t), assoc.k_d(t), assoc.k_y(t)
        log_pz += (xlogy(k_s, params.p_s) + xlogy(k_xm - k_s, 1.0 - params.p_s)
                   + log_poisson(k_b, params.lambda_b)
                   + log_poisson(k_f, params.lambda_f)
                   + xlogy(k_d, params.p_d) + xlogy(k_x - k_d, 1.0 - params.p_d)
                   + math.lgamma(k_f + 1) - math.lgamma(k_y + 1))

        xs = np.asarray(states[t - 1], dtype=float).reshape(k_x, 4)
        anc = assoc.i_s(t)
        prev = np.asarray(states[t - 2], dtype=float) if t > 1 else np.zeros((0, 4))
        for j in range(k_s):
            log_px += log_trans_density(hmm, xs[j], prev[anc[j] - 1])
        log_px += math.lgamma(k_b + 1)
        if not is_canonically_ordered(xs[k_s:]):
            log_px = -np.inf
        for j in range(k_s, k_x):
            log_px += log_init_density(hmm, xs[j])

        log_py += -k_f * logv
        idv = np.asarray(assoc.i_d[t - 1])
        for j in np.flatnonzero(idv > 0):
            log_py += float(log_obs_density(hmm, scene.obs[t - 1][idv[j] - 1], xs[j]))
    return log_pz, log_px, log_py


# ---------------------------------------------------------------------------
# per-track view and the bijection


@dataclass
class Track:
    """One target: alive on scans t_b..t_d-1 (1-based; t_d <= n+1)."""

    t_b: int
    t_d: int
    states: np.ndarray  # (l, 4)
    y_idx: np.ndarray   # (l,), 1-based obs index per alive scan, MISS = 0

    @property
    def length(self) -> int:
        return self.t_d - self.t_b

    def copy(self) -> "Track":
        return Track(self.t_b, self.t_d, self.states.copy(), self.y_idx.copy())


@dataclass
class TrackSet:
    tracks: list          # list[Track]
    clutter: list         # list[(t, j)] with j 1-based

    @property
    def K(self) -> int:
        return len(self.tracks)


def decompose(assoc: Association, scene: Scene,
              states: list | None = None) -> TrackSet:
    """Flat association -> per-target tracks + clutter list."""
    if states is None:
        states = scene.truth_states
    validate_association(assoc, scene, states)
    n = scene.n
    tracks: list[Track] = []
    slot_track: list[int] = []  # track index per current-scan slot
    for t in range(1, n + 1):
        cs = np.asarray(assoc.c_s[t - 1])
        new_slot_track = [slot_track[a - 1] for a in assoc.i_s(t)]
        for j in np.flatnonzero(cs == 0):
            tracks[slot_track[j]].t_d = t
        for _ in range(assoc.k_b[t - 1]):
            new_slot_track.append(len(tracks))
            tracks.append(Track(t, n + 1, None, None))
        slot_track = new_slot_track
        idv = np.asarray(assoc.i_d[t - 1])
        xs = np.asarray(states[t - 1], dtype=float).reshape(len(idv), 4) \
            if states is not None else None
        for j, ti in enumerate(slot_track):
            tr = tracks[ti]
            if tr.states is None:
                tr.states, tr.y_idx = [], []
            tr.states.append(xs[j] if xs is not None else np.full(4, np.nan))
            tr.y_idx.append(int(idv[j]))
    for tr in tracks:
        tr.states = np.asarray(tr.states, dtype=float).reshape(-1, 4)
        tr.y_idx = np.asarray(tr.y_idx, dtype=int)
    clutter = []
    for t in range(1, n + 1):
        used = set(int(v) for v in assoc.i_d[t - 1] if v > 0)
        clutter.extend((t, j) for j in range(1, scene.k_y(t) + 1) if j not in used)
    return TrackSet(tracks=tracks, clutter=clutter)


def canonical_track_order(tracks: list) -> list:
    """Labels sorted by birth time, then by the ordering rule at birth."""
    return sorted(range(len(tracks)),
                  key=lambda k: (tracks[k].t_b, ordering_key(tracks[k].states[0])))


def recompose(trackset: TrackSet, scene: Scene):
    """Per-target tracks -> canonical flat (association, states).

    Tracks may be given in any order; new-born labels are canonicalised
    under the ordering rule, survivor relabeling is order-preserving.
    """
    n = scene.n
    tracks = trackset.tracks
    seen = {}
    for k, tr in enumerate(tracks):
        if not (1 <= tr.t_b < tr.t_d <= n + 1):
            raise ValidationError(f"track {k}: illegal life span ({tr.t_b}, {tr.t_d})")
        if len(tr.states) != tr.length or len(tr.y_idx) != tr.length:
            raise ValidationError(f"track {k}: state/obs-index length mismatch")
        for i, j in enumerate(tr.y_idx):
            if j == MISS:
                continue
            t = tr.t_b + i
            if not (1 <= j <= scene.k_y(t)):
                raise ValidationError(f"track {k}: observation index {j} out of range at scan {t}")
            if (t, int(j)) in seen:
                raise ValidationError(f"observation ({t}, {j}) assigned more than once")
            seen[(t, int(j))] = k
    for (t, j) in trackset.clutter:
        if (t, int(j)) in seen:
            raise ValidationError(f"observation ({t}, {j}) assigned and marked clutter")
        seen[(t, int(j))] = -1
    for t in range(1, n + 1):
        for j in range(1, scene.k_y(t) + 1):
            if (t, j) not in seen:
                raise ValidationError(f"observation ({t}, {j}) is unassigned")

    order = canonical_track_order(tracks)
    c_s, k_bs, k_fs, i_ds, states = [], [], [], [], []
    prev_labels: list[int] = []
    for t in range(1, n + 1):
        cs = np.array([1 if tracks[k].t_d > t else 0 for k in prev_labels], dtype=int)
        labels = [k for k in prev_labels if tracks[k].t_d > t]
        born = [k for k in order if tracks[k].t_b == t]
        labels.extend(born)
        c_s.append(cs)
        k_bs.append(len(born))
        idv = np.array([int(tracks[k].y_idx[t - tracks[k].t_b]) for k in labels],
                       dtype=int)
        i_ds.append(idv)
        k_fs.append(scene.k_y(t) - int(np.sum(idv > 0)))
        states.append(np.array([tracks[k].states[t - tracks[k].t_b]
                                for k in labels]).reshape(-1, 4))
        prev_labels = labels
    assoc = Association(c_s=c_s, k_b=k_bs, k_f=k_fs, i_d=i_ds)
    validate_association(assoc, scene, states)
    return assoc, states


# ---------------------------------------------------------------------------
# factorised density pieces used by the MCMC moves


def scan_count_log_term(params: ModelParams, k_b: int, k_f: int, k_y: int) -> float:
    """Scan-level part of the joint log density that depends on counts only."""
    return (log_poisson(k_b, params.lambda_b) + log_poisson(k_f, params.lambda_f)
            + math.lgamma(k_f + 1) - math.lgamma(k_y + 1)
            + math.lgamma(k_b + 1) - k_f * math.log(params.obs_volume))


def track_log_term(params: ModelParams, track: Track, scene: Scene) -> float:
    """Per-target part: survival run, death, detections, dynamics, sensor."""
    hmm = params.hmm
    l = track.length
    out = 0.0
    if l > 1:
        out += (l - 1) * (math.log(params.p_s) if params.p_s > 0 else -np.inf)
    if track.t_d <= scene.n:
        out += math.log(1.0 - params.p_s) if params.p_s < 1 else -np.inf
    n_det = int(np.sum(track.y_idx > 0))
    if n_det:
        out += n_det * (math.log(params.p_d) if params.p_d > 0 else -np.inf)
    if l - n_det:
        out += (l - n_det) * (math.log(1.0 - params.p_d) if params.p_d < 1 else -np.inf)
    out += log_init_density(hmm, track.states[0])
    if l > 1:
        d = track.states[1:] - track.states[:-1] @ hmm.F.T
        out += float(-0.5 * np.einsum("ij,jk,ik->", d, hmm.Sigma_u_inv, d)
                     - (l - 1) * (0.5 * hmm.Sigma_u_logdet + 2.0 * LOG_2PI))
    det_rows = np.nonzero(track.y_idx > 0)[0]
    if len(det_rows):
        ys = np.array([scene.obs[track.t_b + i - 1][track.y_idx[i] - 1]
                       for i in det_rows])
        out += float(np.sum(log_obs_density(hmm, ys, track.states[det_rows])))
    return out
