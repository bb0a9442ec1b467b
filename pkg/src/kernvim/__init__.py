"""Kernel-embedded variable importance for heterogeneous treatment effects."""

from .errors import DegenerateDataError, InputError, KernvimError, NumericalError
from .kernel import KernelConfig, gaussian_kernel, gram, median_heuristic, ridge_inverse
from .measures import (WeightVector, koi_weights, loco_weights, loo_weights,
                       shapley_exact_weights, shapley_mc_weights)
from .nuisance import Dataset, LearnerConfig, crossfit_pseudo
from .pipeline import ImportanceAnalysis, PipelineConfig, analyze

__all__ = [
    "DegenerateDataError", "InputError", "KernvimError", "NumericalError",
    "KernelConfig", "gaussian_kernel", "gram", "median_heuristic", "ridge_inverse",
    "WeightVector", "koi_weights", "loco_weights", "loo_weights", "shapley_exact_weights",
    "shapley_mc_weights", "Dataset", "LearnerConfig", "crossfit_pseudo",
    "ImportanceAnalysis", "PipelineConfig", "analyze",
]
__version__ = "0.1.0"
