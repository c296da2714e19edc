"""Exception types shared across the package."""

from __future__ import annotations


class HiddenFlowError(Exception):
    """Base class for all package errors."""


class NonFiniteError(HiddenFlowError, FloatingPointError):
    def __init__(self, node: int, op: str):
        super().__init__(f"non-finite value produced at node #{node} ({op})")
        self.node = node
        self.op = op


class UnsupportedOperation(HiddenFlowError, TypeError):
    pass


class ContractError(HiddenFlowError, ValueError):
    pass


class DimensionError(HiddenFlowError, ValueError):
    pass


class InvalidArchitecture(HiddenFlowError, ValueError):
    pass


class CFLViolation(HiddenFlowError, ValueError):
    pass


class SolverBlowup(HiddenFlowError, FloatingPointError):
    def __init__(self, t: float):
        super().__init__(f"non-finite concentration field at t={t:.6g}")
        self.t = t


class TrainingDiverged(HiddenFlowError, FloatingPointError):
    """Raised when a loss or gradient becomes non-finite.

    ``point`` is the batch-local index of the first offending record when it
    can be attributed to one, ``state`` the last finite training state.
    """

    def __init__(self, message: str, point: int | None = None, state=None):
        super().__init__(message)
        self.point = point
        self.state = state


class FormatError(HiddenFlowError, ValueError):
    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class ConfigError(HiddenFlowError, ValueError):
    pass
