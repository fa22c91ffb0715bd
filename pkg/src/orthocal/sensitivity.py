"""Parameter Jacobians of the TCP position and the posture-specific displacement relations.

Column order of every 3x6 Jacobian is
``(d_rho_x, d_rho_y, d_rho_z, L_x, L_y, L_z)``; the leg-length columns are
identical whether one differentiates with respect to L_i or dL_i.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .errors import SingularConfiguration
from .kinematics import (
    DEFAULT_GEOMETRY,
    MachineGeometry,
    ParameterDeviation,
    direct_kinematics,
    inverse_kinematics,
)

#: Smallest admissible |p_i - (rho_i + d_rho_i)| (mm).
SINGULAR_EPS = 1e-6
#: Default central-difference step (mm).
FD_STEP = 1e-4
#: Condition number above which a Jacobian block is treated as singular.
_COND_LIMIT = 1e12


class PostureId(enum.Enum):
    ZERO = "zero"
    X_MAX = "x_max"
    X_MIN = "x_min"
    Y_MAX = "y_max"
    Y_MIN = "y_min"
    Z_MAX = "z_max"
    Z_MIN = "z_min"

    @property
    def axis(self) -> int | None:
        """Index of the driven axis, None for the zero posture."""
        if self is PostureId.ZERO:
            return None
        return "xyz".index(self.value[0])

    @property
    def is_max(self) -> bool:
        return self.value.endswith("_max")

    def alpha(self, geom: MachineGeometry) -> float:
        if self is PostureId.ZERO:
            return 0.0
        return geom.alpha_max if self.is_max else geom.alpha_min

    @classmethod
    def for_leg(cls, axis: int, posture: str) -> "PostureId":
        """``for_leg(0, "max")`` -> X_MAX; ``posture`` may also be "zero"."""
        if posture == "zero":
            return cls.ZERO
        return cls(f"{'xyz'[axis]}_{posture}")


def posture_configuration(pid: PostureId, geom: MachineGeometry = DEFAULT_GEOMETRY):
    """Nominal (p, rho) of a test posture.

    For a Max/Min posture along axis a: p = L sin(alpha) e_a and
    rho = L cos(alpha) (1, 1, 1) except rho_a = L + L sin(alpha).
    """
    length = geom.leg_length
    if pid is PostureId.ZERO:
        return np.zeros(3), np.full(3, length)
    a = pid.axis
    alpha = pid.alpha(geom)
    p = np.zeros(3)
    p[a] = length * math.sin(alpha)
    rho = np.full(3, length * math.cos(alpha))
    rho[a] = length + length * math.sin(alpha)
    return p, rho


def parameter_jacobian(
    p, rho, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY,
    eps: float = SINGULAR_EPS,
) -> np.ndarray:
    """Analytic 3x6 Jacobian [J_rho | J_L] at a consistent (p, rho) pair.

    Differentiating the leg constraints gives M dp = diag(p_i - q_i) d(d_rho)
    and M dp = diag(L_i) dL, where q_i = rho_i + d_rho_i and M is ``p``
    repeated row-wise with p_i - q_i on the diagonal.
    """
    dev = dev or ParameterDeviation()
    p = np.asarray(p, dtype=float)
    q = np.asarray(rho, dtype=float) + dev.d_rho
    lengths = geom.leg_length + dev.d_length
    axial = p - q
    if np.any(np.abs(axial) < eps):
        raise SingularConfiguration(f"|p_i - rho_i| below {eps:g} mm: {axial}")
    m = np.tile(p, (3, 1))
    m[np.diag_indices(3)] = axial
    if np.linalg.cond(m) > _COND_LIMIT:
        raise SingularConfiguration("leg constraint matrix is singular")
    try:
        j_rho = np.linalg.solve(m, np.diag(axial))
        j_len = np.linalg.solve(m, np.diag(lengths))
    except np.linalg.LinAlgError as exc:
        raise SingularConfiguration(str(exc)) from exc
    return np.hstack([j_rho, j_len])


def finite_difference_jacobian(
    p, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY,
    step: float = FD_STEP,
) -> np.ndarray:
    """Central-difference Jacobian of the direct kinematics w.r.t. the six parameters.

    Joint commands are held at ``inverse_kinematics(p, dev)`` while each
    parameter is perturbed by +-``step``.
    """
    dev = dev or ParameterDeviation()
    rho = inverse_kinematics(p, dev, geom)
    base = dev.vector
    jac = np.empty((3, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = step
        hi = direct_kinematics(rho, ParameterDeviation.from_vector(base + e), geom)
        lo = direct_kinematics(rho, ParameterDeviation.from_vector(base - e), geom)
        jac[:, k] = (hi - lo) / (2.0 * step)
    return jac


def posture_jacobian(pid: PostureId, geom: MachineGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Closed-form Jacobian at a nominal test posture.

    Zero posture: [I | -I].  Max/Min along axis a, with T = tan(alpha) and
    C = cos(alpha): the driven row is that of the zero posture; every other
    row b gets T in column a, 1 in column b, -T in column 3+a and -1/C in
    column 3+b.
    """
    jac = np.hstack([np.eye(3), -np.eye(3)])
    if pid is PostureId.ZERO:
        return jac
    a = pid.axis
    alpha = pid.alpha(geom)
    tan_a, sec_a = math.tan(alpha), 1.0 / math.cos(alpha)
    for b in range(3):
        if b == a:
            continue
        jac[b, a] = tan_a
        jac[b, 3 + a] = -tan_a
        jac[b, 3 + b] = -sec_a
    return jac


def displacement_at_posture(
    pid: PostureId, dev: ParameterDeviation, geom: MachineGeometry = DEFAULT_GEOMETRY
) -> np.ndarray:
    """First-order TCP displacement (mm) caused by ``dev`` at a test posture."""
    return posture_jacobian(pid, geom) @ dev.vector
