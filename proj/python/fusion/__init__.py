"""Python bindings for the fusion batched verifiable-inference library."""

import json

from ._fusion import (
    FormatError,
    InfeasibleError,
    Model,
    ProtocolError,
    amortized_cost,
    claim1_bound,
    enumerate_win_prob,
    estimate_T_variance,
    estimate_win_prob,
    parameter_table,
    prob_success,
    reverse_sigmoid_defense,
    search_params,
)
from ._fusion import run_json as _run_json


def run(model, queries, publics, **kwargs):
    """Runs a full batch and returns the report as a dict (same shape as `fusion run`)."""
    return json.loads(_run_json(str(model), str(queries), str(publics), **kwargs))


__all__ = [
    "FormatError",
    "InfeasibleError",
    "Model",
    "ProtocolError",
    "amortized_cost",
    "claim1_bound",
    "enumerate_win_prob",
    "estimate_T_variance",
    "estimate_win_prob",
    "parameter_table",
    "prob_success",
    "reverse_sigmoid_defense",
    "run",
    "search_params",
]
