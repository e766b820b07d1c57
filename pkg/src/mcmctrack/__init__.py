"""Batch Bayesian multi-target tracking by reversible-jump MCMC over data
associations, particle-Gibbs state refreshment and conjugate parameter
learning, with a nearly-constant-velocity target model observed through a
linear or bearing-range sensor."""

__version__ = "0.1.0"

from .chain import (ChainState, chain_log_joint, initial_state,
                    state_from_association)
from .gaussian import (GaussianBelief, LinearObsModel, NumericalError,
                       gaussian_backward_sample, kalman_filter,
                       kalman_log_marginal, kalman_smoother, linear_obs_of,
                       sigma_points, ukf_track_filter, unscented_transform)
from .learning import (MttSampler, PARAM_NAMES, PriorHyperparams,
                       association_counts, mle_given_truth, param_vector,
                       sample_assoc_params, sample_hmm_params)
from .metrics import (chain_summary, ospa, ospa_series, summarize_trace,
                      track_positions_at)
from .model import (Association, HmmParams, MISS, ModelParams, Scene, Track,
                    TrackSet, ValidationError, decompose, empty_association,
                    log_joint_density, recompose, simulate,
                    validate_association)
from .moves import (MOVE_NAMES, MoveConfig, MoveStats, ProposalResult,
                    compute_tm, group_log_prob, mcmc_step, propose,
                    sample_group)
from .pgibbs import refresh_states, refresh_track_states
from .smc import (DegeneracyError, ParticleSystem, backward_simulate,
                  conditional_particle_filter, multinomial_resample,
                  particle_filter)
