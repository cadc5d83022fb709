"""
Exception hierarchy for the inverse planning toolkit.

Every error knows the CLI exit status it maps to.
"""


class PlannerError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ScenarioInvalidError(PlannerError):
    """A world admits a reachable state with no legal action."""

    exit_code = 3


class IllegalActionError(PlannerError):
    """An action was applied outside the legal action set of a state."""

    exit_code = 3


class ImpossibleObservationError(PlannerError):
    """A belief update removed all probability mass."""

    exit_code = 4


class ScenarioParseError(PlannerError):
    """A scenario or property file could not be parsed or failed its schema."""

    exit_code = 2


class ScenarioValidationError(PlannerError):
    """A parsed scenario violates world or episode invariants.

    Args:
        problems: List of human-readable violations
    """

    exit_code = 3

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NotFoundError(PlannerError):
    """No grid hypothesis reproduces the target trajectory."""

    exit_code = 4


class ZeroEvidenceError(PlannerError):
    """Every hypothesis assigns zero likelihood to the episodes."""

    exit_code = 4


class UnknownDimensionError(PlannerError):
    """A marginal or slice names a field the hypothesis grid does not have."""

    exit_code = 2


class PredicateError(PlannerError):
    """A predicate expression is malformed or references an unknown field."""

    exit_code = 2


class EmptyPropertyError(PlannerError):
    """A property is satisfied by no hypothesis of the grid."""

    exit_code = 4
