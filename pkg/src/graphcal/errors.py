"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2); a fit whose
loss stops being finite raises :class:`FitDiverged` (exit code 3).
"""


class GraphCalError(Exception):
    """Base class for every error raised by graphcal."""


class InputError(GraphCalError, ValueError):
    pass


class InvalidEdge(InputError):
    pass


class EmptySourceSet(InputError):
    pass


class NonFiniteInput(InputError):
    pass


class NonFiniteParameter(InputError):
    pass


class EmptyEvalSet(InputError):
    pass


class NotAProbability(InputError):
    pass


class TooFewSamples(InputError):
    pass


class EmptyCalibrationSet(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class UnknownColumn(InputError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class InvalidConfig(InputError):
    pass


class ManifestError(InputError):
    pass


class FitDiverged(GraphCalError, ArithmeticError):
    pass


class GridExhausted(GraphCalError):
    """Every cell of a hyperparameter grid diverged."""
