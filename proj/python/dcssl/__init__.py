"""Semi-supervised estimation for doubly censored survival data."""

import json as _json

from ._dcssl import (
    DataError,
    DomainError,
    FitError,
    __version__,
    fit_composite,
    fit_em,
    frailty_moments,
    g,
    g_inv,
)
from . import _dcssl


def simulate(path, rep=0, **config):
    """Write one simulated cohort CSV. Keyword args are simulation fields (n, r, r_star, seed, ...)."""
    return _dcssl.simulate_csv(str(path), _json.dumps(config), rep)


def fit(path, **config):
    """Fit SL and SSL estimators to a cohort CSV and return the result as a dict."""
    return _json.loads(_dcssl.fit_csv(str(path), _json.dumps(config)))


def run_mc(threads=1, **config):
    """Monte Carlo summary for one simulation cell."""
    return _json.loads(_dcssl.run_mc(_json.dumps(config), threads))


__all__ = [
    "DataError",
    "DomainError",
    "FitError",
    "__version__",
    "fit",
    "fit_composite",
    "fit_em",
    "frailty_moments",
    "g",
    "g_inv",
    "run_mc",
    "simulate",
]
