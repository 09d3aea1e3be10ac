"""Abundance estimation from one-inflated capture-recapture data.

Semiparametric empirical-likelihood fitting (EM algorithm), asymptotic and
likelihood-ratio confidence intervals, score tests for one-inflation,
conditional-likelihood baselines, and a Monte Carlo study harness.
"""

from .elcore import Dataset, ElParams, InflationForm, h_mass, log_el, profile_log_el, solve_xi
from .em import ElFit, EmConfig, LatentWeights, e_step, fit, m_step, update_N
from .families import Binomial, Family, Geometric, Poisson, cond_mean_var, make_family, pmf, weighted_ml_step

__version__ = "0.1.0"

__all__ = [
    "Binomial",
    "Dataset",
    "ElFit",
    "ElParams",
    "EmConfig",
    "Family",
    "Geometric",
    "InflationForm",
    "LatentWeights",
    "Poisson",
    "cond_mean_var",
    "e_step",
    "fit",
    "h_mass",
    "log_el",
    "m_step",
    "make_family",
    "pmf",
    "profile_log_el",
    "solve_xi",
    "update_N",
    "weighted_ml_step",
    "__version__",
]
