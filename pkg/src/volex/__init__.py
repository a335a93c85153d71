"""Numerical calculus of volumetric expansion for flows on coordinate charts."""

__version__ = "0.1.0"

from .errors import (DomainError, InputError, NumericalError, ParseError, SchemaError,  # noqa: E402
                     SignatureMismatch, VolexError)
from .exprdsl import Jet2, eval_jet2, parse  # noqa: E402
from .geometry import Chart, MetricSpec, VectorFieldSpec  # noqa: E402
from .scenario import catalog, load_scenario  # noqa: E402

__all__ = ["__version__", "Chart", "MetricSpec", "VectorFieldSpec", "Jet2", "parse", "eval_jet2",
           "VolexError", "InputError", "NumericalError", "ParseError", "SchemaError",
           "SignatureMismatch", "DomainError", "catalog", "load_scenario"]
