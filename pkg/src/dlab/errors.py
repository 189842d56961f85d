"""Exception taxonomy shared by every dlab module.

All exceptions derive from DlabError so callers (and the CLI) can map the
whole family onto one exit code while still catching precise conditions.
"""


class DlabError(Exception):
    """Base class for all dlab errors."""


class InvalidInput(DlabError):
    """Malformed argument: wrong shape, non-finite entries, bad options."""


class DegenerateBasis(DlabError):
    """Gram-Schmidt hit a (numerically) rank-deficient column set."""


class NotPositiveDefinite(DlabError):
    """Symmetric square root requested for a matrix with an eigenvalue
    at or below the configured floor."""


class SingularMatrix(DlabError):
    """Logarithm (or inverse) of a singular matrix requested."""


class DefectiveLog(DlabError):
    """Matrix logarithm failed even after the perturbation fallback."""


class ParseError(DlabError):
    """System/expression text could not be parsed.

    Carries 1-based ``line`` and ``column`` of the offending token.
    """

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self):
        base = super().__str__()
        if self.line is not None:
            return f"line {self.line}, column {self.column}: {base}"
        return base


class ShapeError(DlabError):
    """Coefficient/perturbation entry counts disagree with the declared
    dimension."""


class NotInCatalog(DlabError):
    """Unknown builtin system name."""


class DomainError(DlabError):
    """Evaluation time outside the system's declared domain."""


class StiffnessFailure(DlabError):
    """Step size underflowed before reaching the requested time."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class Blowup(DlabError):
    """State left the finite range during integration.

    ``last_valid_time`` is the last time with a finite accepted state.
    """

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class NotPeriodic(DlabError):
    """Floquet machinery asked of a system without a (sampled-valid)
    period."""


class ResonantForcing(DlabError):
    """I - X(omega, 0) is singular: forced periodic solution not unique."""


class CertificateRequired(DlabError):
    """Operation needs a dichotomy certificate with flag 'verified'."""


class GapViolation(DlabError):
    """Contraction condition 2*K*gamma/alpha < 1 fails."""


class HorizonTooShort(DlabError):
    """Averaging window does not fit the available horizon."""


class IndexUndetermined(DlabError):
    """Some trajectory direction had an inconclusive growth slope."""


class UnboundedCoefficients(DlabError):
    """Triangularized coefficient norm grows across the horizon (n >= 2):
    diagonal spectrum reduction would be meaningless."""


class NotReducibleHere(DlabError):
    """Projected fundamental-matrix norm not bounded on the requested grid."""


class GapNotCertified(DlabError):
    """A spectral-gap shift failed to produce a verified dichotomy."""

    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class ProjectorMismatch(DlabError):
    """Half-line linearization requires the identity projector."""


class NoConvergence(DlabError):
    """Fixed-point iteration exceeded its certified iteration bound."""


class NumericalInconsistency(DlabError):
    """A quantity with a guaranteed sign/structure came out wrong
    (e.g. nonpositive Jacobian determinant)."""
