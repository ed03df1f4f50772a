"""Robustified posterior means for many parallel effects."""

from .chain import ChainOutput, posterior_means
from .dp_mixture import DpConfig, dp_fit
from .estimators import DirichletProcessShrinkage, ShrinkageEstimator
from .hier_gibbs import GibbsConfig, WorkingPrior, robustified_gibbs, standard_gibbs
from .permutation_mh import CoordinatePrior, MhConfig, run_chain
from .quantile_map import ErrorModel, ParallelDataset, reorder_by_q
from .simulation import SimulationConfig, generate_dataset, run_experiment

__version__ = "0.1.0"

__all__ = [
    "ChainOutput",
    "CoordinatePrior",
    "DirichletProcessShrinkage",
    "DpConfig",
    "ErrorModel",
    "GibbsConfig",
    "MhConfig",
    "ParallelDataset",
    "ShrinkageEstimator",
    "SimulationConfig",
    "WorkingPrior",
    "dp_fit",
    "generate_dataset",
    "posterior_means",
    "reorder_by_q",
    "robustified_gibbs",
    "run_chain",
    "run_experiment",
    "standard_gibbs",
]
