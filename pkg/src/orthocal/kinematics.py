"""Closed-form kinematics of the simplified PSS-leg model.

Frame conventions: the origin sits at the intersection of the three
prismatic axes, x/y/z run along the actuators, and Cartesian coordinates
are already shifted by the tool offset ``(r, r, r)``.  Leg ``i`` joins the
joint centre ``(rho_i + d_rho_i) * e_i`` to the TCP with a rigid bar of
length ``L_i = L + dL_i``, so every leg obeys

    (p_i - (rho_i + d_rho_i))**2 + p_j**2 + p_k**2 = L_i**2.

Units are millimetres and radians throughout.  Positions and joint vectors
are plain ``numpy`` arrays of shape ``(3,)``; inverse and direct kinematics
also broadcast over leading axes ``(..., 3)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateJoint,
    InconsistentJoints,
    InconsistentPose,
    Unreachable,
)

AXES = ("x", "y", "z")

#: Tolerance on Cartesian/joint quantities (mm).
POSE_TOL = 1e-9
#: Tolerance for matrix identities.
MATRIX_TOL = 1e-12
#: Smallest admissible |rho_i + d_rho_i| for the direct kinematics (mm).
DEGENERATE_EPS = 1e-6
#: Deviation entries must stay below this fraction of the nominal leg length.
DEV_BOUND_FRACTION = 0.1

#: Assembly mode of the prototype: s_x = s_y = s_z = +1.
ASSEMBLY_SIGNS = (1, 1, 1)

# (j, k) companions of each leg i, in the cyclic order used by the leg model:
# p_i = q_i + cos(theta) cos(beta) L_i, p_j = sin(theta) cos(beta) L_i,
# p_k = -sin(beta) L_i.
_CYCLIC = ((1, 2), (2, 0), (0, 1))


@dataclass(frozen=True)
class MachineGeometry:
    """Nominal constants of the machine.

    ``joint_min``/``joint_max`` are travel limits measured from the nominal
    joint value ``leg_length``; the admissible joint interval is therefore
    ``[leg_length + joint_min, leg_length + joint_max]``.
    """

    leg_length: float = 310.25
    parallelogram_width: float = 80.0
    tool_offset: float = 31.0
    joint_min: float = -100.0
    joint_max: float = 60.0

    def __post_init__(self):
        vals = asdict(self)
        for name, v in vals.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"geometry.{name} must be a finite number, got {v!r}")
        if self.leg_length <= 0:
            raise ConfigError("geometry.leg_length must be > 0")
        if self.parallelogram_width <= 0:
            raise ConfigError("geometry.parallelogram_width must be > 0")
        if self.tool_offset < 0:
            raise ConfigError("geometry.tool_offset must be >= 0")
        if not self.joint_min < self.joint_max:
            raise ConfigError("geometry.joint_min must be < geometry.joint_max")
        if abs(self.joint_min) >= self.leg_length or abs(self.joint_max) >= self.leg_length:
            raise ConfigError("|joint_min| and |joint_max| must be smaller than leg_length")

    @property
    def joint_bounds(self) -> tuple[float, float]:
        return self.leg_length + self.joint_min, self.leg_length + self.joint_max

    @property
    def alpha_max(self) -> float:
        """Leg inclination at the Max postures, asin(joint_max / L) > 0."""
        return math.asin(self.joint_max / self.leg_length)

    @property
    def alpha_min(self) -> float:
        """Leg inclination at the Min postures, asin(joint_min / L) < 0."""
        return math.asin(self.joint_min / self.leg_length)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "MachineGeometry":
        data = dict(data or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown geometry keys: {sorted(unknown)}")
        try:
            return cls(**{k: float(v) for k, v in data.items()})
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid geometry block: {exc}") from exc


DEFAULT_GEOMETRY = MachineGeometry()


def _triple(values, name) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ConfigError(f"{name} must have exactly 3 entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class ParameterDeviation:
    """Joint encoder offsets and leg length deviations (mm).

    Vector order everywhere is ``(d_rho_x, d_rho_y, d_rho_z, dL_x, dL_y, dL_z)``.
    """

    joint_offsets: tuple[float, float, float] = (0.0, 0.0, 0.0)
    leg_length_deviations: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "joint_offsets", _triple(self.joint_offsets, "joint_offsets"))
        object.__setattr__(
            self,
            "leg_length_deviations",
            _triple(self.leg_length_deviations, "leg_length_deviations"),
        )

    @classmethod
    def zero(cls) -> "ParameterDeviation":
        return cls()

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "ParameterDeviation":
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.shape != (6,):
            raise ConfigError(f"parameter vector must have 6 entries, got {v.size}")
        return cls(tuple(v[:3]), tuple(v[3:]))

    @property
    def d_rho(self) -> np.ndarray:
        return np.array(self.joint_offsets)

    @property
    def d_length(self) -> np.ndarray:
        return np.array(self.leg_length_deviations)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.joint_offsets + self.leg_length_deviations)

    def check(self, geom: MachineGeometry, fraction: float = DEV_BOUND_FRACTION) -> None:
        """Reject deviations of implausible magnitude for ``geom``."""
        bound = fraction * geom.leg_length
        if np.any(np.abs(self.vector) >= bound):
            raise ConfigError(
                f"parameter deviation entries must satisfy |v| < {bound:g} mm, got {self.vector}"
            )

    def to_dict(self) -> dict:
        return {
            "joint_offsets": list(self.joint_offsets),
            "leg_length_deviations": list(self.leg_length_deviations),
        }

    @classmethod
    def from_dict(cls, data: dict | None) -> "ParameterDeviation":
        data = dict(data or {})
        unknown = set(data) - {"joint_offsets", "leg_length_deviations"}
        if unknown:
            raise ConfigError(f"unknown deviation keys: {sorted(unknown)}")
        return cls(
            data.get("joint_offsets", (0.0, 0.0, 0.0)),
            data.get("leg_length_deviations", (0.0, 0.0, 0.0)),
        )

    def __add__(self, other: "ParameterDeviation") -> "ParameterDeviation":
        return ParameterDeviation.from_vector(self.vector + other.vector)

    def __sub__(self, other: "ParameterDeviation") -> "ParameterDeviation":
        return ParameterDeviation.from_vector(self.vector - other.vector)


class LegAngles(NamedTuple):
    """Internal leg angles.  Branch: beta in (-pi/2, pi/2), theta in [0, 2 pi)."""

    theta: np.ndarray
    beta: np.ndarray


def _signs(s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.shape != (3,) or not np.all(np.abs(s) == 1.0):
        raise ValueError(f"configuration indices must be three values in {{+1, -1}}, got {s}")
    return s


def _leg_params(dev: ParameterDeviation | None, geom: MachineGeometry):
    dev = dev or ParameterDeviation()
    dev.check(geom)
    return dev.d_rho, geom.leg_length + dev.d_length


def _transverse_sq(p: np.ndarray) -> np.ndarray:
    """p_j**2 + p_k**2 for every leg i, shape (..., 3)."""
    sq = p * p
    return np.stack(
        [sq[..., 1] + sq[..., 2], sq[..., 0] + sq[..., 2], sq[..., 0] + sq[..., 1]], axis=-1
    )


def joint_centres(rho, dev: ParameterDeviation | None = None) -> np.ndarray:
    """Rows are the prismatic joint centres r_x, r_y, r_z (mm)."""
    dev = dev or ParameterDeviation()
    q = np.asarray(rho, dtype=float) + dev.d_rho
    return np.diag(q)


def constraint_residual(p, rho, dev=None, geom: MachineGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """Left minus right side of each leg constraint (mm^2)."""
    p = np.asarray(p, dtype=float)
    d_rho, lengths = _leg_params(dev, geom)
    q = np.asarray(rho, dtype=float) + d_rho
    return (p - q) ** 2 + _transverse_sq(p) - lengths**2


def inverse_kinematics(
    p, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY,
    signs=ASSEMBLY_SIGNS,
) -> np.ndarray:
    """Joint coordinates that place the TCP at ``p``.

    rho_i = p_i + s_i * sqrt(L_i**2 - p_j**2 - p_k**2) - d_rho_i

    Raises
    ------
    Unreachable
        If the radicand of some leg is negative.
    """
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (3,):
        raise ValueError(f"TCP position must have a trailing axis of length 3, got {p.shape}")
    s = _signs(signs)
    d_rho, lengths = _leg_params(dev, geom)
    radicand = lengths**2 - _transverse_sq(p)
    if np.any(radicand < 0):
        bad = np.argwhere(radicand < 0)[0]
        raise Unreachable(AXES[bad[-1]], float(radicand[tuple(bad)]))
    return p + s * np.sqrt(radicand) - d_rho


def quadratic_coefficients(
    rho, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY
) -> tuple[float, float, float]:
    """Coefficients (A, B, C) of A t**2 + B t + C = 0 for the direct kinematics.

    C is evaluated through the equivalent form
    sum_i (q_i**2 - L_i**2)**2 q_j**2 q_k**2 / 4, which avoids the heavy
    cancellation of the expanded expression near the zero posture.
    """
    d_rho, lengths = _leg_params(dev, geom)
    q = np.asarray(rho, dtype=float) + d_rho
    q2 = q * q
    u = (q - lengths) * (q + lengths)
    others = np.array([q2[1] * q2[2], q2[0] * q2[2], q2[0] * q2[1]])
    prod = q2[0] * q2[1] * q2[2]
    a = float(others.sum())
    b = float(prod - (lengths**2 * others).sum())
    c = float((u * u * others).sum() / 4.0)
    return a, b, c


def direct_kinematics(
    rho, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY,
    eps: float = DEGENERATE_EPS,
) -> np.ndarray:
    """TCP position reached by joint coordinates ``rho``.

    Works on the quadratic in ``t = |p|**2 / 2`` divided through by
    prod(q_i**2), and keeps the root that contains the zero posture
    (the smaller one).

    Raises
    ------
    DegenerateJoint
        If some |rho_i + d_rho_i| < ``eps``.
    InconsistentJoints
        If the discriminant is negative.
    """
    rho = np.asarray(rho, dtype=float)
    if rho.shape[-1:] != (3,):
        raise ValueError(f"joint vector must have a trailing axis of length 3, got {rho.shape}")
    d_rho, lengths = _leg_params(dev, geom)
    q = rho + d_rho
    if np.any(np.abs(q) < eps):
        raise DegenerateJoint(f"|rho_i + d_rho_i| below {eps:g} mm: {q}")
    q2 = q * q
    u = (q - lengths) * (q + lengths)
    a = np.sum(1.0 / q2, axis=-1)
    b = np.sum(u / q2, axis=-1) - 2.0
    c = np.sum(u * u / q2, axis=-1) / 4.0
    disc = b * b - 4.0 * a * c
    if np.any(disc < 0):
        raise InconsistentJoints(f"joint triple not realizable (discriminant {np.min(disc):.6g})")
    root = np.sqrt(disc)
    # smaller root (-b - root) / 2a, written without cancellation
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(b < 0, 2.0 * c / (root - b), (-b - root) / (2.0 * a))
    t = np.asarray(t)[..., None]
    return (u + 2.0 * t) / (2.0 * q)


def leg_angles(
    p, rho, dev: ParameterDeviation | None = None, geom: MachineGeometry = DEFAULT_GEOMETRY,
    tol: float = POSE_TOL,
) -> LegAngles:
    """Internal angles theta_i, beta_i of each leg for a consistent (p, rho) pair.

    The additive constant that appears in some statements of the leg model
    is taken as zero.

    Raises
    ------
    InconsistentPose
        If some leg length differs from L_i by more than ``tol`` (mm).
    """
    p = np.asarray(p, dtype=float)
    d_rho, lengths = _leg_params(dev, geom)
    q = np.asarray(rho, dtype=float) + d_rho
    axial = p - q
    actual = np.sqrt(axial**2 + _transverse_sq(p))
    err = np.abs(actual - lengths)
    if np.any(err > tol):
        raise InconsistentPose(f"leg length mismatch {err} mm exceeds {tol:g} mm")
    theta = np.empty(3)
    beta = np.empty(3)
    for i, (j, k) in enumerate(_CYCLIC):
        beta[i] = math.asin(min(1.0, max(-1.0, -p[k] / lengths[i])))
        theta[i] = math.atan2(p[j], axial[i]) % (2.0 * math.pi)
    return LegAngles(theta, beta)


def tcp_from_leg_angles(
    rho, angles: LegAngles, dev: ParameterDeviation | None = None,
    geom: MachineGeometry = DEFAULT_GEOMETRY,
) -> np.ndarray:
    """TCP predicted independently by each leg; row i comes from leg i."""
    d_rho, lengths = _leg_params(dev, geom)
    q = np.asarray(rho, dtype=float) + d_rho
    out = np.empty((3, 3))
    for i, (j, k) in enumerate(_CYCLIC):
        th, be, li = angles.theta[i], angles.beta[i], lengths[i]
        out[i, i] = q[i] + math.cos(th) * math.cos(be) * li
        out[i, j] = math.sin(th) * math.cos(be) * li
        out[i, k] = -math.sin(be) * li
    return out


def within_joint_limits(rho, geom: MachineGeometry = DEFAULT_GEOMETRY) -> bool:
    lo, hi = geom.joint_bounds
    rho = np.asarray(rho, dtype=float)
    return bool(np.all((rho >= lo) & (rho <= hi)))
