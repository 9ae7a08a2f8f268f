"""Exception types raised across the package."""


class ContoptError(Exception):
    """Base class for all errors raised by this package."""


# domain / support errors

class DegenerateDomain(ContoptError):
    """Domain has zero width or an invalid distribution parameter."""


class NonFinite(ContoptError):
    """A bound, support value, or distribution parameter is nan or inf."""


class UnsupportedScheme(ContoptError):
    """Support generation scheme not valid for this domain kind."""


class MissingSeed(ContoptError):
    """Monte Carlo sampling was requested without a seed."""


class OutOfDomain(ContoptError):
    """A value lies outside the domain it belongs to."""


class EmptySupports(ContoptError):
    """A support set is empty or smaller than the scheme requires."""


# expression errors

class UnboundReference(ContoptError):
    """An expression references a handle unknown to the model."""


class DomainError(ContoptError):
    """Evaluation hit an undefined operation (log of a negative, division by zero)."""


class UnknownParameter(ContoptError):
    """A parameter handle does not resolve in the owning model."""


class NonDifferentiable(ContoptError):
    """Gradient requested at a kink (abs at zero) or a non-smooth program was given to solve_nlp."""


# model errors

class DuplicateLabel(ContoptError):
    """Two model objects share a label."""


class BadBounds(ContoptError):
    """Lower bound above upper bound, or bounds invalid for the variable kind."""


class NotInfinite(ContoptError):
    """Restriction applied to a variable that has no free parameter to fix."""


class IrrelevantRestriction(ContoptError):
    """Restriction mentions a parameter the restricted object does not depend on."""


class ModelBusy(ContoptError):
    """Model mutated while a transcription is reading it."""


class InvalidModel(ContoptError):
    """validate() reported errors; the model cannot be transcribed."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(d.message for d in self.diagnostics)
        super().__init__(f"model validation failed: {lines}")


# measure errors

class MissingDependency(ContoptError):
    """Measure body does not depend on the parameter being integrated."""


class AlphaOutOfRange(ContoptError):
    """Risk level outside the range the operator accepts."""


class BadWeights(ContoptError):
    """Quantile or approximation weights are negative or do not sum to one."""


class UnsupportedLogic(ContoptError):
    """Event tree deeper than two levels or a shape with no big-M reformulation."""


class BadBigM(ContoptError):
    """big-M constant missing, non-positive, or non-finite."""


# derivative errors

class TooFewSupports(ContoptError):
    """Derivative scheme needs more supports than the parameter has."""


class BadNodeCount(ContoptError):
    """Collocation node count below two."""


# transcription errors

class UnexpandedMeasure(ContoptError):
    """A risk or event measure reached transcription without reformulation."""


class NoSupports(ContoptError):
    """A parameter used by the model has no supports."""


class TooLarge(ContoptError):
    """Instance count exceeds the transcription cap."""


class Unsolved(ContoptError):
    """Solution values requested from a solve that did not reach optimality."""


# finite-program errors

class NotLinear(ContoptError):
    """Linear solver given a program with nonlinear terms."""


class TooManyBinaries(ContoptError):
    """Discrete variable count exceeds the branch-and-bound cap."""
