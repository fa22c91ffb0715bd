"""JSON/CSV formats: measurement files, calibration reports, run configs, raw logs."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .calibration import (
    MEASUREMENT_LABELS,
    PARAMETER_NAMES,
    CalibrationResult,
    MeasurementVector,
    label_name,
    solve_identification,
)
from .errors import ConfigError
from .kinematics import MachineGeometry, ParameterDeviation
from .simulator import ExperimentPlan, NoiseModel

LOG_COLUMNS = ("trial", "leg", "axis", "posture", "repeat", "value_mm")


def read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _reject_unknown(data: dict, allowed: Iterable[str], where: str) -> None:
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


# -- measurement files -------------------------------------------------------

def measurement_payload(
    measurements: MeasurementVector, geom: MachineGeometry, repeats: dict | None = None,
    metadata: dict | None = None,
) -> dict:
    """``repeats`` maps (leg, axis, posture) to per-repeat differences (mm)."""
    records = measurements.to_records()
    if repeats:
        for rec in records:
            key = (rec["leg"], rec["axis"], rec["posture"])
            if key in repeats:
                rec["repeats"] = [float(v) for v in repeats[key]]
    payload = {"geometry": geom.to_dict(), "units": "mm", "measurements": records}
    if metadata:
        payload["metadata"] = metadata
    return payload


def parse_measurement_payload(data: dict) -> tuple[MeasurementVector, MachineGeometry]:
    _reject_unknown(data, ("geometry", "units", "measurements", "metadata"), "measurement file")
    if "measurements" not in data or not isinstance(data["measurements"], list):
        raise ConfigError("measurement file needs a 'measurements' list")
    geom = MachineGeometry.from_dict(data.get("geometry"))
    mv = MeasurementVector.from_records(data["measurements"], units=data.get("units", "mm"))
    return mv, geom


def load_measurement_file(path) -> tuple[MeasurementVector, MachineGeometry]:
    return parse_measurement_payload(read_json(path))


def write_raw_log(path, log: Iterable[tuple]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in log:
            writer.writerow([*row[:5], repr(float(row[5]))])


def read_raw_log(path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            (int(r["trial"]), r["leg"], r["axis"], r["posture"], int(r["repeat"]), float(r["value_mm"]))
            for r in reader
        ]


# -- calibration reports -----------------------------------------------------

def calibration_report(
    measurements: MeasurementVector, geom: MachineGeometry, masks=("full", "rho", "length")
) -> dict:
    results = [solve_identification(measurements, m, geom) for m in masks]
    return {
        "geometry": geom.to_dict(),
        "measurements": measurements.as_dict(),
        "results": [r.to_dict() for r in results],
    }


def report_results(report: dict) -> list[CalibrationResult]:
    return [CalibrationResult.from_dict(r) for r in report["results"]]


def format_calibration_report(report: dict) -> str:
    names = [label_name(lab) for lab in MEASUREMENT_LABELS]
    lines = ["Identified parameters (mm)"]
    lines.append(f"{'set':<8}" + "".join(f"{n:>12}" for n in PARAMETER_NAMES)
                 + f"{'r.m.s.':>12}{'cond':>12}")
    for row in report["results"]:
        cols = set(row["columns"])
        cells = "".join(
            f"{row['parameters'][n]:>12.6f}" if k in cols else f"{'-':>12}"
            for k, n in enumerate(PARAMETER_NAMES)
        )
        lines.append(f"{row['mask']:<8}{cells}{row['residual_rms']:>12.6f}"
                     f"{row['condition_number']:>12.3f}")
    lines.append("")
    lines.append("Residuals (mm)")
    lines.append(f"{'obs':<8}{'measured':>12}" + "".join(f"{r['mask']:>12}" for r in report["results"]))
    for n in names:
        lines.append(f"{n:<8}{report['measurements'][n]:>12.6f}"
                     + "".join(f"{r['residuals'][n]:>12.6f}" for r in report["results"]))
    return "\n".join(lines)


# -- run configs -------------------------------------------------------------

CONFIG_KEYS = ("geometry", "true_dev", "noise", "plan", "seed", "monte_carlo", "outputs",
               "compensate_mask", "self_test_tolerance")


def parse_run_config(data: dict) -> dict:
    """Validate a simulate/pipeline config and return typed values.

    Unknown keys are rejected at every level.
    """
    _reject_unknown(data, CONFIG_KEYS, "config")
    geom = MachineGeometry.from_dict(data.get("geometry"))
    true_dev = ParameterDeviation.from_dict(data.get("true_dev"))
    true_dev.check(geom)

    noise_block = dict(data.get("noise") or {})
    _reject_unknown(noise_block, ("std_dev", "quantization_step", "seed"), "config.noise")
    seed = data.get("seed", noise_block.pop("seed", 0))
    try:
        noise = NoiseModel(float(noise_block.get("std_dev", 0.01)),
                           float(noise_block.get("quantization_step", 0.01)), int(seed))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid noise block: {exc}") from None

    plan_block = dict(data.get("plan") or {})
    _reject_unknown(plan_block, ("repeats", "sequence", "mode"), "config.plan")
    plan = ExperimentPlan(
        repeats=plan_block.get("repeats", 3),
        sequence=tuple(plan_block.get("sequence", ("zero", "max", "min", "zero"))),
        mode=plan_block.get("mode", "linear"),
    )

    mc = dict(data.get("monte_carlo") or {})
    _reject_unknown(mc, ("trials", "mask", "workers", "repeats_sweep"), "config.monte_carlo")
    outputs = dict(data.get("outputs") or {})
    _reject_unknown(outputs, ("measurements", "log", "summary", "report"), "config.outputs")
    tol = data.get("self_test_tolerance")
    return {
        "geometry": geom,
        "true_dev": true_dev,
        "noise": noise,
        "plan": plan,
        "monte_carlo": mc,
        "outputs": outputs,
        "compensate_mask": data.get("compensate_mask", "full"),
        "self_test_tolerance": None if tol is None else float(tol),
    }


def repeats_by_observable(log: list[tuple], plan: ExperimentPlan) -> dict:
    """Per-repeat reading differences, keyed like measurement records."""
    out: dict = {}
    for axis, leg, posture in MEASUREMENT_LABELS:
        diffs = []
        for rep in range(plan.repeats):
            rows = [r for r in log if r[1] == leg and r[2] == axis and r[4] == rep]
            zero = np.mean([r[5] for r in rows if r[3] == "zero"])
            target = np.mean([r[5] for r in rows if r[3] == posture])
            diffs.append(float(target - zero))
        out[(leg, axis, posture)] = diffs
    return out
