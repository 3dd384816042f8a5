"""Fractional reaction-diffusion ``u_t + A u = g(u)`` with a stable-law generator.

Modules: :mod:`~fracspread.stable_law` (densities, distribution functions,
quantiles), :mod:`~fracspread.wave_family` (exact travelling waves and the
reactions they solve), :mod:`~fracspread.evolution` (the solver),
:mod:`~fracspread.spread_analysis` (front tracking and spreading
experiments) and :mod:`~fracspread.cli`.
"""

from .evolution import EvolutionConfig, Field, Grid, apply_semigroup, evolve, picard_solve
from .spread_analysis import ExperimentConfig, fit_spread, theorem31_experiment, theorem32_experiment, track_level
from .stable_law import DomainError, StableParams, build_table, cdf, default_table, density, make_params, quantile
from .wave_family import ReactionPair, ReactionSpec, WaveParams, combination, reaction_pair, tau_search

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "EvolutionConfig",
    "ExperimentConfig",
    "Field",
    "Grid",
    "ReactionPair",
    "ReactionSpec",
    "StableParams",
    "WaveParams",
    "apply_semigroup",
    "build_table",
    "cdf",
    "combination",
    "default_table",
    "density",
    "evolve",
    "fit_spread",
    "make_params",
    "picard_solve",
    "quantile",
    "reaction_pair",
    "tau_search",
    "theorem31_experiment",
    "theorem32_experiment",
    "track_level",
]
