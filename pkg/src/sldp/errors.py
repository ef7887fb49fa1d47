"""Exception types raised across the package."""


class SldpError(Exception):
    """Base class for all solver errors."""


class MalformedProblem(SldpError, ValueError):
    pass


class NodeLimitExceeded(SldpError):
    pass


class EnumerationCapExceeded(SldpError):
    pass


class ProbabilityMismatch(SldpError, ValueError):
    pass


class NodeCapExceeded(SldpError):
    pass


class CenterOutsideBox(SldpError, ValueError):
    pass


class CenterMismatch(SldpError, ValueError):
    pass


class StageInfeasible(SldpError):
    """A stage problem had no feasible point.

    Under complete continuous recourse this never happens, so it signals a
    modeling error. ``node`` identifies where it happened.
    """

    def __init__(self, node, message="stage problem infeasible"):
        super().__init__(f"{message} (node {node!r})")
        self.node = node


class OracleFailure(SldpError):
    pass


class ProblemFileError(MalformedProblem):
    """Malformed problem document; ``path`` locates the offending entry."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
