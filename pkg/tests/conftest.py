"""Shared fixtures: small parameter sets used across the test modules."""

import numpy as np
import pytest

from mcmctrack import HmmParams, ModelParams


def make_linear_hmm(**over) -> HmmParams:
    base = dict(sigma_x2=0.49, sigma_y2=0.49, sigma_r2=1.0, sigma_b2=1.0,
                mu_bx=10.0, mu_by=10.0, sigma_bpx2=25.0, sigma_bpy2=25.0,
                sigma_bvx2=4.0, sigma_bvy2=4.0, obs_model="linear")
    base.update(over)
    return HmmParams(**base)


def make_br_hmm(**over) -> HmmParams:
    base = dict(sigma_x2=0.09, sigma_y2=0.49, sigma_r2=2.0, sigma_b2=2.5e-3,
                mu_bx=80.0, mu_by=100.0, sigma_bpx2=64.0, sigma_bpy2=64.0,
                sigma_bvx2=9.0, sigma_bvy2=9.0, obs_model="bearing_range")
    base.update(over)
    return HmmParams(**base)


def make_linear_params(**over) -> ModelParams:
    hmm = over.pop("hmm", make_linear_hmm())
    base = dict(p_s=0.95, p_d=0.9, lambda_b=0.5, lambda_f=3.0,
                obs_window=np.array([[0.0, 200.0], [0.0, 200.0]]))
    base.update(over)
    return ModelParams(hmm=hmm, **base)


def make_br_params(**over) -> ModelParams:
    hmm = over.pop("hmm", make_br_hmm())
    base = dict(p_s=0.95, p_d=0.9, lambda_b=0.4, lambda_f=3.0,
                obs_window=np.array([[0.0, 400.0], [-np.pi, np.pi]]))
    base.update(over)
    return ModelParams(hmm=hmm, **base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
