"""Chance-constrained DC optimal power flow with Gaussian-mixture uncertainty."""

import json
import os

import numpy as np

from ._core import NumericalError, ParseError, ValidationError, normal_cdf
from . import _core

__all__ = ["NumericalError", "ParseError", "ValidationError", "normal_cdf", "build_pwl", "ptdf", "fit_gmm",
           "evaluate", "experiment"]


def _config_text(config):
    if isinstance(config, (str, os.PathLike)):
        with open(config) as f:
            return f.read()
    return json.dumps(config)


def build_pwl(delta=0.002):
    return json.loads(_core.build_pwl(delta))


def ptdf(case_path):
    return _core.ptdf(os.fspath(case_path))


def fit_gmm(data, components=1, structure="full", restarts=10, zero_mean=False, seed=0):
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    out = json.loads(_core.fit_gmm(data, components, structure, restarts, zero_mean, seed))
    return out["model"], out["report"]


def evaluate(config, seed=1):
    """Fit, solve and score every configured approach for one split seed."""
    return {o["approach"]: o for o in map(json.loads, _core.evaluate(_config_text(config), seed))}


def experiment(config, output_dir=None):
    return json.loads(_core.experiment(_config_text(config), os.fspath(output_dir) if output_dir else ""))
