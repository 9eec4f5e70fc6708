"""Exception hierarchy shared across the package."""


class RulkitError(Exception):
    """Base class for all package errors."""


class UsageError(RulkitError):
    """Bad configuration or command-line input (CLI exit code 2)."""


# --- data I/O ---

class MalformedRow(RulkitError):
    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


class NonContiguousCycles(RulkitError):
    pass


class CountMismatch(RulkitError):
    pass


# --- clustering / normalization ---

class EmptyInput(RulkitError):
    pass


class KExceedsN(RulkitError):
    pass


class DegenerateCluster(RulkitError):
    pass


class SeriesTooShort(RulkitError):
    pass


# --- windowing ---

class EndAfterFailure(RulkitError):
    pass


class OutOfRange(RulkitError):
    pass


# --- numerics / model ---

class ShapeMismatch(RulkitError):
    pass


class NonScalarLoss(RulkitError):
    pass


class AllMasked(RulkitError):
    pass


class EmptyMask(RulkitError):
    pass


# --- training ---

class TooFewUnits(RulkitError):
    pass


class EmptyBatch(RulkitError):
    pass


class NonFiniteGradient(RulkitError):
    pass


class NonFiniteLoss(RulkitError):
    pass


class EmptySpace(RulkitError):
    pass
