"""Linear identification of joint offsets and leg lengths from leg-parallelism readings.

Twelve observables are used, in this canonical order (``d<axis>_<leg><sign>``
is the reading change along ``axis`` for the gauge on ``leg`` between the
leg's Max (+) or Min (-) posture and the zero posture)::

    dx_y+ dy_x+ dx_y- dy_x-  dy_z+ dz_y+ dy_z- dz_y-  dx_z+ dz_x+ dx_z- dz_x-
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, RankDeficient
from .kinematics import (
    AXES,
    DEFAULT_GEOMETRY,
    MachineGeometry,
    ParameterDeviation,
    inverse_kinematics,
)

#: (axis, leg, posture) of each observable, canonical order.
MEASUREMENT_LABELS: tuple[tuple[str, str, str], ...] = (
    ("x", "y", "max"), ("y", "x", "max"), ("x", "y", "min"), ("y", "x", "min"),
    ("y", "z", "max"), ("z", "y", "max"), ("y", "z", "min"), ("z", "y", "min"),
    ("x", "z", "max"), ("z", "x", "max"), ("x", "z", "min"), ("z", "x", "min"),
)
PARAMETER_NAMES = ("d_rho_x", "d_rho_y", "d_rho_z", "dL_x", "dL_y", "dL_z")

#: Sanity bound on a single reading difference (mm).
MEASUREMENT_BOUND = 10.0
#: Relative singular-value threshold for the rank test.
RANK_TOL = 1e-10


def label_name(label: tuple[str, str, str]) -> str:
    axis, leg, posture = label
    return f"d{axis}_{leg}{'+' if posture == 'max' else '-'}"


def measurement_index(axis: str, leg: str, posture: str) -> int:
    try:
        return MEASUREMENT_LABELS.index((axis, leg, posture))
    except ValueError:
        raise ConfigError(f"no observable for axis={axis!r}, leg={leg!r}, posture={posture!r}") from None


class MeasurementVector:
    """Twelve reading differences (mm) in canonical order."""

    def __init__(self, values: Sequence[float], bound: float = MEASUREMENT_BOUND):
        arr = np.array(values, dtype=float).reshape(-1)
        if arr.shape != (12,):
            raise ConfigError(f"expected 12 measurements, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("measurements must be finite")
        if np.any(np.abs(arr) >= bound):
            raise ConfigError(f"measurement magnitude exceeds the {bound:g} mm sanity bound")
        arr.setflags(write=False)
        self.values = arr

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return 12

    def __repr__(self):
        return f"MeasurementVector({self.values.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, MeasurementVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def as_dict(self) -> dict[str, float]:
        return {label_name(lab): float(v) for lab, v in zip(MEASUREMENT_LABELS, self.values)}

    def to_records(self) -> list[dict]:
        return [
            {"leg": leg, "axis": axis, "posture": posture, "value_mm": float(v)}
            for (axis, leg, posture), v in zip(MEASUREMENT_LABELS, self.values)
        ]

    @classmethod
    def from_records(cls, records: Iterable[dict], units: str = "mm",
                     bound: float = MEASUREMENT_BOUND) -> "MeasurementVector":
        """Build from labelled records in any order.

        Each record has ``leg``, ``axis``, ``posture`` and either ``value_mm``,
        ``value_um`` or a non-empty ``repeats`` list (averaged; expressed in
        ``units``, "mm" or "um").
        """
        scale = {"mm": 1.0, "um": 1e-3}.get(units)
        if scale is None:
            raise ConfigError(f"units must be 'mm' or 'um', got {units!r}")
        allowed = {"leg", "axis", "posture", "value_mm", "value_um", "repeats"}
        values: list[float | None] = [None] * 12
        for rec in records:
            unknown = set(rec) - allowed
            if unknown:
                raise ConfigError(f"unknown measurement keys: {sorted(unknown)}")
            try:
                leg, axis, posture = rec["leg"], rec["axis"], rec["posture"]
            except KeyError as exc:
                raise ConfigError(f"measurement record lacks {exc.args[0]!r}") from None
            idx = measurement_index(axis, leg, posture)
            if values[idx] is not None:
                raise ConfigError(f"duplicate measurement {label_name(MEASUREMENT_LABELS[idx])}")
            if "value_mm" in rec:
                val = float(rec["value_mm"])
            elif "value_um" in rec:
                val = float(rec["value_um"]) * 1e-3
            elif rec.get("repeats"):
                val = float(np.mean(np.asarray(rec["repeats"], dtype=float))) * scale
            else:
                raise ConfigError(f"record {label_name(MEASUREMENT_LABELS[idx])} has no value")
            values[idx] = val
        missing = [label_name(lab) for lab, v in zip(MEASUREMENT_LABELS, values) if v is None]
        if missing:
            raise ConfigError(f"missing measurements: {missing}")
        return cls(values, bound=bound)


@dataclass(frozen=True)
class ParameterMask:
    """Parameter columns to identify; the others are held at zero."""

    columns: tuple[int, ...]
    name: str = "custom"

    def __post_init__(self):
        cols = tuple(int(c) for c in self.columns)
        if not cols:
            raise ConfigError("parameter mask must select at least one column")
        if len(set(cols)) != len(cols) or any(c < 0 or c > 5 for c in cols):
            raise ConfigError(f"invalid mask columns {cols}")
        object.__setattr__(self, "columns", tuple(sorted(cols)))

    @classmethod
    def parse(cls, spec: "str | ParameterMask | Sequence[int]") -> "ParameterMask":
        if isinstance(spec, ParameterMask):
            return spec
        if isinstance(spec, str):
            try:
                return NAMED_MASKS[spec]
            except KeyError:
                raise ConfigError(f"mask must be one of {sorted(NAMED_MASKS)}, got {spec!r}") from None
        return cls(tuple(spec))


NAMED_MASKS = {
    "full": ParameterMask((0, 1, 2, 3, 4, 5), "full"),
    "rho": ParameterMask((0, 1, 2), "rho"),
    "length": ParameterMask((3, 4, 5), "length"),
}


@dataclass
class CalibrationResult:
    deviation: ParameterDeviation
    residuals: np.ndarray
    residual_rms: float
    condition_number: float
    mask: ParameterMask = field(default_factory=lambda: NAMED_MASKS["full"])

    def to_dict(self) -> dict:
        return {
            "mask": self.mask.name,
            "columns": list(self.mask.columns),
            "parameters": dict(zip(PARAMETER_NAMES, self.deviation.vector.tolist())),
            "residuals": dict(
                zip((label_name(lab) for lab in MEASUREMENT_LABELS), self.residuals.tolist())
            ),
            "residual_rms": self.residual_rms,
            "condition_number": self.condition_number,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationResult":
        params = [data["parameters"][n] for n in PARAMETER_NAMES]
        res = [data["residuals"][label_name(lab)] for lab in MEASUREMENT_LABELS]
        return cls(
            deviation=ParameterDeviation.from_vector(params),
            residuals=np.array(res, dtype=float),
            residual_rms=float(data["residual_rms"]),
            condition_number=float(data["condition_number"]),
            mask=ParameterMask(tuple(data["columns"]), data.get("mask", "custom")),
        )


def coefficient_triple(alpha: float) -> tuple[float, float, float]:
    """a = sin(alpha), b = (0.5 + sin(alpha)) tan(alpha), c = (0.5 + sin(alpha)) / cos(alpha) - 0.5."""
    if not abs(alpha) < math.pi / 2:
        raise ValueError(f"|alpha| must be < pi/2, got {alpha}")
    s = math.sin(alpha)
    return s, (0.5 + s) * math.tan(alpha), (0.5 + s) / math.cos(alpha) - 0.5


def gauge_initial_locations(
    dev: ParameterDeviation, geom: MachineGeometry = DEFAULT_GEOMETRY
) -> np.ndarray:
    """First-order leg midpoints at the zero posture; rows are g_x, g_y, g_z (mm)."""
    g = np.tile((dev.d_rho - dev.d_length) / 2.0, (3, 1))
    idx = np.arange(3)
    g[idx, idx] = (geom.leg_length - dev.d_length) / 2.0 + dev.d_rho
    return g


def build_design_matrix(geom: MachineGeometry = DEFAULT_GEOMETRY) -> np.ndarray:
    """12x6 map from (d_rho, dL) to the canonical observables.

    Row for the gauge on leg ``b`` reading along ``a``: +a_coef on d_rho_a,
    +b_coef on d_rho_b, -c_coef on dL_a, -b_coef on dL_b, with the Max or
    Min coefficient triple.
    """
    triples = {
        "max": coefficient_triple(geom.alpha_max),
        "min": coefficient_triple(geom.alpha_min),
    }
    mat = np.zeros((12, 6))
    for row, (axis, leg, posture) in enumerate(MEASUREMENT_LABELS):
        a, b, c = triples[posture]
        ia, ib = AXES.index(axis), AXES.index(leg)
        mat[row, ia] = a
        mat[row, ib] = b
        mat[row, 3 + ia] = -c
        mat[row, 3 + ib] = -b
    return mat


def solve_identification(
    measurements, mask="full", geom: MachineGeometry = DEFAULT_GEOMETRY,
    weights=None, rank_tol: float = RANK_TOL,
) -> CalibrationResult:
    """Minimum-norm least-squares estimate over the masked parameter columns.

    The masked design matrix is inverted through its SVD (Moore-Penrose).
    ``weights`` optionally scales the squared residual of each equation;
    reported residuals are always unweighted.

    Raises
    ------
    RankDeficient
        If the smallest singular value is below ``rank_tol`` times the largest.
    """
    m = np.asarray(measurements, dtype=float).reshape(-1)
    if m.shape != (12,):
        raise ConfigError(f"expected 12 measurements, got {m.size}")
    mask = ParameterMask.parse(mask)
    design = build_design_matrix(geom)
    sub = design[:, mask.columns]
    rhs = m
    if weights is not None:
        w = np.sqrt(np.asarray(weights, dtype=float).reshape(12))
        sub = sub * w[:, None]
        rhs = m * w
    u, s, vt = np.linalg.svd(sub, full_matrices=False)
    if s[-1] < rank_tol * s[0]:
        raise RankDeficient(
            f"masked design matrix is rank deficient (singular values {s})"
        )
    x = vt.T @ ((u.T @ rhs) / s)
    full = np.zeros(6)
    full[list(mask.columns)] = x
    residuals = m - design @ full
    return CalibrationResult(
        deviation=ParameterDeviation.from_vector(full),
        residuals=residuals,
        residual_rms=float(np.sqrt(np.mean(residuals**2))),
        condition_number=float(s[0] / s[-1]),
        mask=mask,
    )


def compensate_joint_command(
    p_target, result: "CalibrationResult | ParameterDeviation",
    geom: MachineGeometry = DEFAULT_GEOMETRY,
) -> np.ndarray:
    """Joint command reaching ``p_target`` on a machine with the identified parameters."""
    dev = result.deviation if isinstance(result, CalibrationResult) else result
    return inverse_kinematics(p_target, dev, geom)
