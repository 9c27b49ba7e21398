"""Exception types shared across the package.

Every error raised by jumpdiff derives from :class:`JumpdiffError`, so callers
can catch one type at the CLI boundary.  ``TruncationWarning`` is a
``Warning`` because a truncated eigenexpansion still returns a usable value.
"""


class JumpdiffError(Exception):
    """Base class for all jumpdiff errors."""


# --- problem specification -------------------------------------------------

class InvalidInterval(JumpdiffError):
    """Interval endpoints are not strictly ordered."""


class NonpositiveSigma(JumpdiffError):
    """Diffusion scale must be strictly positive."""


class AtomOutOfRange(JumpdiffError):
    """A jump-distribution atom lies on or outside the interval."""


class WeightsNotNormalized(JumpdiffError):
    """Jump-distribution weights are nonpositive or do not sum to one."""


# --- closed forms ----------------------------------------------------------

class OutOfDomain(JumpdiffError):
    """Evaluation point outside the open interval."""


class RequiresPositiveDrift(JumpdiffError):
    """Quantity is only defined for strictly positive drift."""


class RequiresCenteredDelta(JumpdiffError):
    """Quantity is only defined for a single atom at the interval midpoint."""


class TruncationWarning(Warning):
    """Eigenexpansion tail bound exceeded the reporting threshold."""


# --- eigensolver -----------------------------------------------------------

class ContourThroughZero(JumpdiffError):
    """Winding contour could not be moved off a determinant zero."""


class BoxTooSmall(JumpdiffError):
    """No nonzero eigenvalue inside the search box; enlarge re_max."""


# --- simulation ------------------------------------------------------------

class NonpositiveDt(JumpdiffError):
    """Time step must be strictly positive."""


class HorizonExceeded(JumpdiffError):
    """Exit sampling ran past the diagnostic step budget."""


class WindowTooSparse(JumpdiffError):
    """Fewer than three curve points inside the fit window."""


class BelowNoiseFloor(JumpdiffError):
    """Curve values carry no resolvable decay inside the fit window."""


class RejectionBudgetExceeded(JumpdiffError):
    """Conditioned-path rejection sampling acceptance fell below budget."""


class StageBudgetExceeded(JumpdiffError):
    """Coupling construction exceeded its step budget."""


# --- experiments -----------------------------------------------------------

class ConfigError(JumpdiffError):
    """Experiment configuration failed validation."""


class NoPlateauFound(JumpdiffError):
    """Gap never reaches the drift-independent plateau inside the bracket."""
