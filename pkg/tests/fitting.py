"""Full-schedule fits shared between the sampler and acceptance tests."""

import numpy as np

from uree.sampler import ChainConfig, Priors, run_naive, run_uree
from uree.simulation import true_deaths

from .conftest import FULL_SCHEDULE, cached_fit

CONFIG = ChainConfig(**FULL_SCHEDULE)


def ulmca_naive(ds, priors=Priors()):
    return cached_fit(("ulmca", "naive", priors), lambda: run_naive(ds, priors=priors, config=CONFIG))


def ulmca_uree(ds):
    return cached_fit(("ulmca", "uree"), lambda: run_uree(ds, config=CONFIG))


def sim_fits(appendix_b):
    """Naive and UR-EE fits on the simulated fixture under every input mode."""
    ds, truths = appendix_b
    e_only = ds.without("kappa_star")
    e_counts = np.array([[st.treatment.e, st.control.e] for st in ds.studies], dtype=float)
    return {
        "true": cached_fit(("sim", "true"), lambda: run_naive(ds, s_star=true_deaths(truths), config=CONFIG)),
        "naive_e": cached_fit(("sim", "naive_e"), lambda: run_naive(e_only, s_star=e_counts, config=CONFIG)),
        "uree_e": cached_fit(("sim", "uree_e"), lambda: run_uree(e_only, config=CONFIG)),
        "naive_km": cached_fit(("sim", "naive_km"), lambda: run_naive(ds, config=CONFIG)),
        "uree_km": cached_fit(("sim", "uree_km"), lambda: run_uree(ds, config=CONFIG)),
    }
