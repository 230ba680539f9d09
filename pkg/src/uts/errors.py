"""Exception hierarchy shared by every module.

Errors split into two families that map onto CLI exit codes: input/schema
problems (exit 2) and numerical/degenerate problems (exit 3).
"""


class UTSError(Exception):
    exit_code = 1


class InputError(UTSError, ValueError):
    exit_code = 2


class ParseError(InputError):
    pass


class SchemaError(InputError):
    pass


class BoundsError(InputError, IndexError):
    pass


class GroupingError(InputError):
    pass


class PairingError(InputError):
    pass


class PreconditionError(InputError):
    pass


class CapabilityError(InputError):
    pass


class NumericalError(UTSError, ArithmeticError):
    exit_code = 3


class DegenerateInputError(NumericalError):
    pass


class UndefinedStatisticError(NumericalError):
    pass


class ConditioningError(NumericalError):
    pass


class EstimationError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, slope=None):
        super().__init__(message)
        self.slope = slope


class DegenerateTargetError(NumericalError):
    pass


class ComponentFailure(UTSError):
    """One or more signature components could not be computed.

    ``failures`` maps component ids to the underlying error. The exit code
    follows the most severe underlying family (numerical beats input).
    """

    def __init__(self, failures: dict):
        self.failures = dict(failures)
        lines = [f"{cid}: {type(err).__name__}: {err}" for cid, err in self.failures.items()]
        super().__init__("signature rejected; failed components:\n  " + "\n  ".join(lines))
        codes = [getattr(err, "exit_code", 1) for err in self.failures.values()]
        self.exit_code = 3 if 3 in codes else max(codes, default=1)
