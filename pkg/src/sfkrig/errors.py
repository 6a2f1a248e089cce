"""Exception hierarchy shared across the package."""


class SfkrigError(Exception):
    """Base class for all package errors."""


class DataError(SfkrigError):
    """Invalid or inconsistent input data (bad CSV, broken invariants)."""


class IoError(SfkrigError):
    """Filesystem read/write failure."""


class DomainError(SfkrigError):
    """Evaluation point outside the basis time domain."""


class SmoothingError(SfkrigError):
    """Least-squares smoothing failed (rank-deficient design)."""


class VariogramError(SfkrigError):
    """Empirical variogram could not be formed (e.g. no pairs in range)."""


class FitError(SfkrigError):
    """Parametric variogram fit failed on all starts."""


class SolveError(SfkrigError):
    """Kriging linear system numerically singular."""


class CvError(SfkrigError):
    """Cross-validation fold failed."""


class SimError(SfkrigError):
    """Synthetic field generation failed."""
