"""Exception hierarchy.

Validation problems derive from ``ValueError``; numerical failures
(unreachable targets, singular or rank-deficient systems) derive from
``NumericalError`` so callers such as the CLI can map them to distinct
exit codes.
"""


class NumericalError(ArithmeticError):
    """Base class for failures of the kinematic or identification math."""


class Unreachable(NumericalError):
    def __init__(self, leg, radicand=None):
        self.leg = leg
        self.radicand = radicand
        msg = f"target unreachable for leg {leg!r}"
        if radicand is not None:
            msg += f" (radicand {radicand:.6g} mm^2 < 0)"
        super().__init__(msg)


class InconsistentJoints(NumericalError):
    """Joint triple has no real Cartesian solution (negative discriminant)."""


class DegenerateJoint(NumericalError):
    """A shifted joint value rho_i + d_rho_i is (numerically) zero."""


class InconsistentPose(NumericalError):
    """A (p, rho) pair violates the leg-length constraints."""


class SingularConfiguration(NumericalError):
    """Jacobian blocks cannot be formed or inverted at this configuration."""


class RankDeficient(NumericalError):
    """The (masked) identification matrix has no full column rank."""


class GaugeOffLeg(NumericalError):
    """The fixed gauge station does not intersect the leg segment."""


class ConfigError(ValueError):
    """Invalid input file, configuration block or command-line value."""
