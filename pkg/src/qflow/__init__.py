"""Deterministic probability-flow solver for time-local non-Markovian
master equations, with stochastic baselines and dense oracles."""

__version__ = "0.1.0"

from . import detsolver, ensemble, models, oracle, qcore, stochastic
from .detsolver import SolverConfig, Trajectory, run
from .ensemble import EnsembleRegistry, build_closure
from .models import (GeneralizedModel, JCParams, TimeLocalModel,
                     TwoBandParams, make_jc_model, make_two_band_model)
from .oracle import dense_integrate, jc_closed_form, two_band_closed_form
from .stochastic import StochasticConfig, mc_unravel_run, nmqj_run

__all__ = [
    "SolverConfig", "Trajectory", "run",
    "EnsembleRegistry", "build_closure",
    "GeneralizedModel", "JCParams", "TimeLocalModel", "TwoBandParams",
    "make_jc_model", "make_two_band_model",
    "dense_integrate", "jc_closed_form", "two_band_closed_form",
    "StochasticConfig", "mc_unravel_run", "nmqj_run",
    "detsolver", "ensemble", "models", "oracle", "qcore", "stochastic",
]
