"""Exception types shared across the package."""


class GridsweepError(Exception):
    """Base class for all package errors."""


class ParameterError(GridsweepError, ValueError):
    """Invalid user-supplied parameter (negative sd, bad geometry, ...)."""


class DomainError(GridsweepError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateSampleError(GridsweepError, ValueError):
    """Sample has too little variation for the requested statistic."""


class SimulationStallError(GridsweepError, RuntimeError):
    """Grid simulation cannot make progress (no host ever up with work pending)."""


class BlowUpError(GridsweepError, RuntimeError):
    """MD integration became unstable (atoms overlapping; dt too large)."""


class ScenarioParseError(GridsweepError, ValueError):
    """Malformed scenario or config file; carries a line/section context."""
