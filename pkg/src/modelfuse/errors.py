"""Exception hierarchy.

Input problems (malformed files, violated invariants) and undefined
computations (e.g. AUROC on a single-class label) map to distinct CLI exit
codes, so they stay separate classes.
"""


class ModelFuseError(Exception):
    """Base class for all toolkit errors."""


class InputError(ModelFuseError):
    """Malformed or inconsistent input data: files, shapes, invariants."""


class ComputationError(ModelFuseError):
    """A requested quantity is undefined for the given data."""


class UndefinedAurocError(ComputationError):
    """AUROC requested for a label where only one class is present."""

    def __init__(self, message: str, present_class: int | None = None):
        super().__init__(message)
        self.present_class = present_class
