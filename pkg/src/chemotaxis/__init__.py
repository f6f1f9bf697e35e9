"""Finite-volume simulator for chemotaxis with weak singular sensitivity and logistic damping."""

from .model import (
    FunctionalSpec,
    Grid,
    Params,
    State,
    ValidationError,
    make_initial_condition,
    steady_state,
    validate_functional_spec,
    validate_params,
)

__version__ = "0.1.0"
