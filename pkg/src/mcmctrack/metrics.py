"""Tracking performance metrics and chain summaries.

The set metric is OSPA: an optimal-assignment distance between two point
sets with a cutoff c and order p, decomposed into localisation and
cardinality components.  The assignment is solved exactly with the
Hungarian algorithm.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def ospa(X, Y, c: float = 10.0, p: float = 1.0):
    """OSPA distance between point sets X and Y (arrays of shape (m, d)).

    Returns (total, localisation, cardinality).  Symmetric in X and Y;
    empty-vs-empty is (0, 0, 0).
    """
    X = np.asarray(X, dtype=float).reshape(-1, 1) if np.ndim(X) == 1 \
        else np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1, 1) if np.ndim(Y) == 1 \
        else np.asarray(Y, dtype=float)
    if c <= 0:
        raise ValueError("cutoff c must be > 0")
    if p < 1:
        raise ValueError("order p must be >= 1")
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0, 0.0, 0.0
    if m > n:
        X, Y = Y, X
        m, n = n, m
    if m == 0:
        card = c * ((n - m) / n) ** (1.0 / p)
        return float(card), 0.0, float(card)
    d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    d = np.minimum(d, c)
    rows, cols = linear_sum_assignment(d ** p)
    loc_p = float((d[rows, cols] ** p).sum())
    total = ((loc_p + (c ** p) * (n - m)) / n) ** (1.0 / p)
    loc = (loc_p / n) ** (1.0 / p)
    card = ((c ** p) * (n - m) / n) ** (1.0 / p)
    return float(total), float(loc), float(card)


def track_positions_at(tracks, t: int) -> np.ndarray:
    """(k, 2) positions of the given tracks alive at scan t."""
    pos = [tr.states[t - tr.t_b][[0, 2]] for tr in tracks
           if tr.t_b <= t < tr.t_d]
    return np.asarray(pos, dtype=float).reshape(-1, 2)


def ospa_series(tracks_a, tracks_b, n: int, c: float = 10.0, p: float = 1.0):
    """Per-scan OSPA between two track collections; (n, 3) array."""
    out = np.empty((n, 3))
    for t in range(1, n + 1):
        out[t - 1] = ospa(track_positions_at(tracks_a, t),
                          track_positions_at(tracks_b, t), c, p)
    return out


def chain_summary(trace, burn_in: int = 0, stats=None, bins=20) -> dict:
    """Aggregate a sampler trace into plot-ready summaries.

    trace is a sequence of records (dicts) each carrying a "log_joint" value
    plus any number of numeric scalar fields.  Returns the full log-density
    trace, the MAP record over the post-burn-in portion, per-field histograms
    (bins as in numpy.histogram, so explicit edges are accepted) and, when a
    MoveStats is supplied, per-move acceptance rates.
    """
    trace = list(trace)
    if not trace:
        raise ValueError("trace must be non-empty")
    if burn_in >= len(trace):
        raise ValueError(f"burn_in {burn_in} >= trace length {len(trace)}")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    log_joint = np.array([float(r["log_joint"]) for r in trace])
    kept = trace[burn_in:]
    rel = int(np.argmax(log_joint[burn_in:]))
    hists = {}
    for key in kept[0]:
        if key == "log_joint":
            continue
        vals = np.array([float(r[key]) for r in kept])
        hists[key] = np.histogram(vals, bins=bins)
    out = {"log_joint": log_joint,
           "map_index": burn_in + rel,
           "map": kept[rel],
           "histograms": hists}
    if stats is not None:
        out["accept_rates"] = {m: stats.rate(m) for m in stats.proposed}
    return out


def summarize_trace(samples, alpha: float = 0.05) -> dict:
    """Mean and equal-tailed credible interval per column of a trace."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    lo = np.quantile(samples, alpha / 2.0, axis=0)
    hi = np.quantile(samples, 1.0 - alpha / 2.0, axis=0)
    return {"mean": samples.mean(axis=0), "lo": lo, "hi": hi}
