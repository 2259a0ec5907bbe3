"""Random-effects meta-analysis of odds ratios with uncertain KM readings and
estimated events (UR-EE)."""

from .classical import dsl_fit, effects_from_events, ml_fit
from .reporting import MetaResult, effective_sample_size, forest_plot, l1_distance
from .sampler import ChainConfig, PosteriorDraws, Priors, gelman_rubin, run_naive, run_uree, summarize
from .study import MetaDataset, load_dataset, load_ulmca, validate

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "MetaDataset", "MetaResult", "PosteriorDraws", "Priors",
    "dsl_fit", "effective_sample_size", "effects_from_events", "forest_plot", "gelman_rubin",
    "l1_distance", "load_dataset", "load_ulmca", "ml_fit", "run_naive", "run_uree",
    "summarize", "validate", "__version__",
]
