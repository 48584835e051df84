"""Exception types shared across the package."""


class TopologyError(ValueError):
    """Invalid network description (duplicate ids, link between non-neighbors, ...)."""


class InfeasibleError(RuntimeError):
    """The requested delay bound is at or below the minimum feasible one."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget without converging."""
