"""Exception types shared across the package.

All errors raised by the library derive from StopmechError so callers can
catch everything from one root. The CLI maps these onto exit codes.
"""


class StopmechError(Exception):
    """Base class for all library errors."""


class SchemaError(StopmechError):
    """Scenario file is malformed or fails schema / cross-field validation."""


class SupportError(StopmechError):
    """A state grid cannot cover the reachable support of its kernel."""


class DegenerateError(StopmechError):
    """Structurally degenerate environment (T < 1, discount outside (0, 1], ...)."""


class MissingMemoryError(StopmechError):
    """A two-argument (memory) rule was evaluated without the previous report."""


class NotThresholdError(StopmechError):
    """A stopping region is not a down-closed interval; carries the first gap.

    Attributes
    ----------
    period : int
        1-based period where the gap occurs.
    node_index : int
        Index of the first continue-node that is followed by a stop-node.
    """

    def __init__(self, period, node_index, message=None):
        self.period = period
        self.node_index = node_index
        super().__init__(
            message
            or f"stopping region at period {period} is not down-closed: "
            f"gap after node index {node_index}"
        )


class AssumptionError(StopmechError):
    """A standing-assumption validation failed while strict mode is on."""


class BudgetError(StopmechError):
    """Exhaustive enumeration was requested beyond the enforced size budget."""


class DerivativeError(StopmechError):
    """A kernel state-derivative is unavailable (tabular kernel, FD disabled)."""


class NonFiniteError(StopmechError):
    """An objective or table evaluated to a non-finite value."""
