"""Learning and ordering random-medium Green's functions from sparse-source array data."""
from .errors import (
    DegenerateInputError,
    DisconnectedGraphError,
    DivergenceError,
    NumericError,
    ParameterError,
    SingularityError,
)

__version__ = "0.1.0"

__all__ = [
    "DegenerateInputError",
    "DisconnectedGraphError",
    "DivergenceError",
    "NumericError",
    "ParameterError",
    "SingularityError",
]
