"""Bias-corrected training under label-based sampling bias."""

import json

from . import _biascorr
from ._biascorr import ConfigError, Error, oracle_check, roc_auc, scenarios, synthesize

__all__ = [
    "ConfigError",
    "Error",
    "binary_report",
    "oracle_check",
    "predict",
    "roc_auc",
    "run",
    "scenarios",
    "synthesize",
]


def run(config=None, prevalence=None, data_stream=0):
    """Train on the configured data and evaluate.

    Returns a dict with params, report, calibration_mae, tracked_marginal,
    trace and the resolved config.
    """
    return json.loads(_biascorr.run(json.dumps(config or {}), prevalence, data_stream))


def predict(config, params, features, prevalence=None):
    """Class probabilities of `features` (n x d) under trained `params`."""
    return _biascorr.predict(json.dumps(config or {}), prevalence, list(params), features)


def binary_report(tp, fp, tn, fn, prevalence):
    return json.loads(_biascorr.binary_report(tp, fp, tn, fn, prevalence))
