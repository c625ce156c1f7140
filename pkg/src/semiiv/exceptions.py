"""Exception hierarchy.

The CLI maps each family onto an exit code, so new errors should subclass
one of the four category bases rather than ``SemiIVError`` directly.
"""


class SemiIVError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class SpecificationError(SemiIVError, ValueError):
    """Malformed exclusion spec, DGP or run configuration."""

    exit_code = 2


class DataError(SemiIVError, ValueError):
    """Dataset unusable for the requested operation."""

    exit_code = 3


class DataInsufficiencyError(DataError):
    """Some (d, z) cell has no observations."""

    def __init__(self, missing):
        self.missing = sorted(missing)
        cells = ", ".join(f"(d={d}, z={z})" for d, z in self.missing)
        super().__init__(f"empty (d, z) cells: {cells}")


class DomainError(SemiIVError, ValueError):
    """Argument outside the support of the outcome it refers to."""

    exit_code = 3


class IdentificationError(SemiIVError):
    """The model is not point identified from the supplied inputs."""

    exit_code = 4


class SetIdentificationError(IdentificationError):
    """Relevance fails on an interval; only a gapped path is available.

    Attributes
    ----------
    path : MonotonePath or None
        Partial path with NaN rows on the unidentified interval.
    interval : tuple of float
        ``(eta_lo, eta_hi)`` bracket of the unidentified ranks.
    """

    def __init__(self, message, path=None, interval=None):
        super().__init__(message)
        self.path = path
        self.interval = interval


class RankDeficiencyError(IdentificationError):
    """Rank drops by two or more at a singular point."""

    def __init__(self, message, eta=None, singular_values=None):
        super().__init__(message)
        self.eta = eta
        self.singular_values = singular_values


class WeakRelevanceError(IdentificationError):
    """Closed-form ATE system is (nearly) singular."""

    def __init__(self, message, det=None, cond=None, odds_ratio_gap=None):
        super().__init__(message)
        self.det = det
        self.cond = cond
        self.odds_ratio_gap = odds_ratio_gap


class NumericalError(SemiIVError):
    """Integration or root finding broke down."""

    exit_code = 5


class BranchSelectionError(NumericalError):
    """No one-signed eigen-direction at a singular point."""

    def __init__(self, message, eigenvalues=None, eigenvectors=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors
