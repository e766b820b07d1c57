"""Particle-Gibbs refreshment of the target states.

Given the current association, each track's state sequence is redrawn with
a conditional particle filter (the current path retained in slot 0) followed
by backward simulation.  The association is untouched, so this is a Gibbs
step on the states given the tracks and is always accepted.
"""

from __future__ import annotations

import numpy as np

from .chain import ChainState
from .model import ModelParams, Scene
from .moves import _track_obs_seq
from .smc import backward_simulate, conditional_particle_filter


def refresh_track_states(params: ModelParams, track, scene: Scene,
                         n_particles: int, rng: np.random.Generator):
    """One conditional-particle-filter + backward-simulation pass; returns a
    new (l, 4) state array for the track."""
    obs_seq = _track_obs_seq(track, scene)
    ps = conditional_particle_filter(params.hmm, obs_seq, n_particles,
                                     track.states, rng)
    _, path = backward_simulate(ps, params.hmm, rng)
    return path


def refresh_states(params: ModelParams, state: ChainState, scene: Scene,
                   n_particles: int, rng: np.random.Generator) -> ChainState:
    """Refresh every track's states; returns a new chain state."""
    new = state.copy()
    for k, tr in enumerate(new.tracks):
        tr = tr.copy()
        tr.states = refresh_track_states(params, tr, scene, n_particles, rng)
        new.tracks[k] = tr
    return new
