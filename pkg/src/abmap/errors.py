"""Exception hierarchy shared across the package."""


class AbmapError(Exception):
    """Base class for all package-specific errors."""


class ModelError(AbmapError):
    """A value violates the event-calculus domain rules (bad state index,
    unknown event id, probabilities that do not normalize, ...)."""


class EncodingError(AbmapError):
    """The requested program cannot be built (bad multiplicity,
    observation outside the horizon, committed counts that are not
    partially feasible, ...)."""


class SolverError(AbmapError):
    """The solver hit a numerical or structural failure (unbounded
    relaxation, non-integral incumbent, lost feasibility)."""


class SolverBudgetError(SolverError):
    """The node or time budget was exhausted before optimality."""


class InfeasibleError(AbmapError):
    """No trajectory satisfies the observations under the given model,
    boundary conditions, support and multiplicity bound."""


class InconsistentObservationsError(InfeasibleError):
    """Streaming assimilation rolled back every commitment and the
    observations still contradict the model and boundary conditions."""


class FileFormatError(AbmapError):
    """An input file does not match the documented schema."""
