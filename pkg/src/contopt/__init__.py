"""Modeling and solving of optimization problems over continuous domains.

Variables may depend on time, space, or random parameters; measures
(integrals, expectations, tail risk, event probabilities) and
derivatives tie them together. transcribe() instances everything on
finite support grids and the finprog subpackage solves the result or
serializes it to JSON.
"""

from . import finprog
from .domains import (
    Interval,
    MvNormal,
    Normal,
    SupportSet,
    Uniform,
    gauss_legendre,
    gauss_lobatto,
    rng_for,
)
from .errors import ContoptError
from .expressions import (
    Expr,
    abs_,
    esum,
    evaluate,
    exp,
    grad,
    log,
    parameter_deps,
    restrict,
    sqrt,
)
from .measures import (
    And,
    Atom,
    MeasureApprox,
    Or,
    approximate,
    cvar,
    excursion_time,
    expectation,
    integral,
    quantile,
    reformulate_event,
)
from .model import Model
from .modelfile import Diag, parse_model
from .transcription import (
    TranscriptionMap,
    event_fraction,
    solution_values,
    transcribe,
)

__version__ = "0.1.0"

__all__ = [
    "And",
    "Atom",
    "ContoptError",
    "Diag",
    "Expr",
    "Interval",
    "MeasureApprox",
    "Model",
    "MvNormal",
    "Normal",
    "Or",
    "SupportSet",
    "TranscriptionMap",
    "Uniform",
    "abs_",
    "approximate",
    "cvar",
    "esum",
    "evaluate",
    "event_fraction",
    "excursion_time",
    "exp",
    "expectation",
    "finprog",
    "gauss_legendre",
    "gauss_lobatto",
    "grad",
    "integral",
    "log",
    "parameter_deps",
    "parse_model",
    "quantile",
    "reformulate_event",
    "restrict",
    "rng_for",
    "solution_values",
    "sqrt",
    "transcribe",
    "__version__",
]
