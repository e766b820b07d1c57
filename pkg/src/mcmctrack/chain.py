"""Mutable chain state for the association sampler: the per-target track
list plus the per-scan pool of unassigned (clutter) observations.

The formal state of the Markov chain is the canonical flat
(association, states) pair; this container is the working representation
the moves operate on.  Copies are copy-on-write at track granularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import (Association, ModelParams, Scene, Track, TrackSet,
                    decompose, recompose, scan_count_log_term, track_log_term)


@dataclass
class ChainState:
    tracks: list            # list[Track]
    free: list              # free[t-1]: set of 1-based unassigned obs indices

    @property
    def K(self) -> int:
        return len(self.tracks)

    def copy(self) -> "ChainState":
        return ChainState(tracks=list(self.tracks),
                          free=[set(s) for s in self.free])

    def clutter_list(self) -> list:
        return [(t + 1, j) for t in range(len(self.free))
                for j in sorted(self.free[t])]

    def to_canonical(self, scene: Scene):
        """Canonical flat (association, states)."""
        ts = TrackSet(tracks=self.tracks, clutter=self.clutter_list())
        return recompose(ts, scene)

    def alive_at(self, t: int) -> list:
        """Indices of tracks alive at scan t."""
        return [k for k, tr in enumerate(self.tracks) if tr.t_b <= t < tr.t_d]

    def k_b_at(self, t: int) -> int:
        return sum(1 for tr in self.tracks if tr.t_b == t)

    def k_f_at(self, t: int) -> int:
        return len(self.free[t - 1])


def initial_state(scene: Scene) -> ChainState:
    """All observations as clutter, no targets."""
    return ChainState(tracks=[],
                      free=[set(range(1, scene.k_y(t) + 1))
                            for t in range(1, scene.n + 1)])


def state_from_association(assoc: Association, scene: Scene,
                           states: list | None = None) -> ChainState:
    ts = decompose(assoc, scene, states)
    st = initial_state(scene)
    st.tracks = [tr.copy() for tr in ts.tracks]
    for tr in st.tracks:
        for i, j in enumerate(tr.y_idx):
            if j > 0:
                st.free[tr.t_b + i - 1].discard(int(j))
    return st


def chain_log_joint(params: ModelParams, state: ChainState, scene: Scene) -> float:
    """Joint log density of the canonicalised state (factorised form)."""
    out = 0.0
    for tr in state.tracks:
        out += track_log_term(params, tr, scene)
    for t in range(1, scene.n + 1):
        out += scan_count_log_term(params, state.k_b_at(t), state.k_f_at(t),
                                   scene.k_y(t))
    return out
