"""Synthetic leg-parallelism measurements for a machine with known parameter errors.

The controller commands joints from its *model* of the machine (nominal
geometry unless a compensation model is supplied) while the simulated
machine moves according to its *true* parameters.  Each dial gauge is set
up at the zero posture on the midpoint of the measured leg; its
measurement plane then stays fixed in space, so later readings are the
transverse coordinates of the leg centreline at that axial station.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calibration import (
    MEASUREMENT_LABELS,
    NAMED_MASKS,
    PARAMETER_NAMES,
    MeasurementVector,
    ParameterMask,
    build_design_matrix,
    gauge_initial_locations,
    solve_identification,
)
from .errors import ConfigError, GaugeOffLeg
from .kinematics import (
    AXES,
    DEFAULT_GEOMETRY,
    MachineGeometry,
    ParameterDeviation,
    direct_kinematics,
    inverse_kinematics,
)
from .sensitivity import PostureId, posture_configuration

__all__ = [
    "NoiseModel", "ExperimentPlan", "ExperimentRun", "MonteCarloSummary",
    "posture_configuration", "gauge_readings", "simulate_measurements_linear",
    "simulate_measurements_nonlinear", "run_experiment", "monte_carlo",
    "repeat_scaling", "three_experiment_protocol", "format_protocol_report",
]

POSTURES = ("zero", "max", "min")
#: Gauge axes for the x, y and z legs.
GAUGE_AXES = ((1, 2), (0, 2), (0, 1))


@dataclass(frozen=True)
class NoiseModel:
    std_dev: float = 0.01
    quantization_step: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.std_dev) and self.std_dev >= 0):
            raise ConfigError("noise.std_dev must be >= 0")
        if not (math.isfinite(self.quantization_step) and self.quantization_step >= 0):
            raise ConfigError("noise.quantization_step must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigError("noise.seed must be a non-negative integer")

    @classmethod
    def noiseless(cls, seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, seed)


@dataclass(frozen=True)
class ExperimentPlan:
    repeats: int = 3
    sequence: tuple[str, ...] = ("zero", "max", "min", "zero")
    mode: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(self.sequence))
        if int(self.repeats) != self.repeats or self.repeats < 1:
            raise ConfigError("plan.repeats must be an integer >= 1")
        if self.mode not in ("linear", "nonlinear"):
            raise ConfigError(f"plan.mode must be 'linear' or 'nonlinear', got {self.mode!r}")
        seq = self.sequence
        if len(seq) < 3 or seq[0] != "zero" or seq[-1] != "zero":
            raise ConfigError("plan.sequence must start and end at 'zero'")
        if any(s not in POSTURES for s in seq) or "max" not in seq or "min" not in seq:
            raise ConfigError("plan.sequence must contain only zero/max/min and both max and min")


@dataclass
class ExperimentRun:
    measurements: MeasurementVector
    #: rows (trial, leg, axis, posture, repeat, value_mm)
    log: list[tuple] = field(default_factory=list)


def _point_at_station(tcp: np.ndarray, centre: np.ndarray, leg: int, station: float) -> np.ndarray:
    """Point of the segment centre->tcp whose coordinate ``leg`` equals ``station``."""
    span = tcp[leg] - centre[leg]
    mu = (station - centre[leg]) / span
    if not 0.0 <= mu <= 1.0:
        raise GaugeOffLeg(f"gauge station {station:.6g} mm misses leg {AXES[leg]} (mu={mu:.6g})")
    return mu * tcp + (1.0 - mu) * centre


def _true_pose(pid: PostureId, true_dev, model_dev, geom):
    p_nominal, _ = posture_configuration(pid, geom)
    rho = inverse_kinematics(p_nominal, model_dev, geom)
    return direct_kinematics(rho, true_dev, geom), rho + true_dev.d_rho


def gauge_readings(
    true_dev: ParameterDeviation, geom: MachineGeometry = DEFAULT_GEOMETRY,
    model_dev: ParameterDeviation | None = None,
) -> np.ndarray:
    """Exact gauge readings, shape (leg, gauge, posture) with postures (zero, max, min).

    ``gauge`` indexes the two transverse axes of each leg (``GAUGE_AXES``).
    """
    model_dev = model_dev or ParameterDeviation()
    tcp0, q0 = _true_pose(PostureId.ZERO, true_dev, model_dev, geom)
    out = np.empty((3, 2, 3))
    for leg in range(3):
        centre = np.zeros(3)
        centre[leg] = q0[leg]
        mid = (tcp0 + centre) / 2.0
        station = mid[leg]
        for k, posture in enumerate(POSTURES):
            if posture == "zero":
                point = mid
            else:
                tcp, q = _true_pose(PostureId.for_leg(leg, posture), true_dev, model_dev, geom)
                centre = np.zeros(3)
                centre[leg] = q[leg]
                point = _point_at_station(tcp, centre, leg, station)
            out[leg, :, k] = point[list(GAUGE_AXES[leg])]
    return out


def _linear_readings(true_dev, geom, model_dev) -> np.ndarray:
    diff = true_dev - (model_dev or ParameterDeviation())
    g0 = gauge_initial_locations(diff, geom)
    deltas = build_design_matrix(geom) @ diff.vector
    out = np.empty((3, 2, 3))
    for leg in range(3):
        for slot, axis in enumerate(GAUGE_AXES[leg]):
            out[leg, slot, 0] = g0[leg, axis]
    for (axis, leg, posture), d in zip(MEASUREMENT_LABELS, deltas):
        il, ia = AXES.index(leg), AXES.index(axis)
        slot = GAUGE_AXES[il].index(ia)
        out[il, slot, POSTURES.index(posture)] = out[il, slot, 0] + d
    return out


def _readings_to_vector(readings: np.ndarray) -> np.ndarray:
    out = np.empty(12)
    for row, (axis, leg, posture) in enumerate(MEASUREMENT_LABELS):
        il, ia = AXES.index(leg), AXES.index(axis)
        slot = GAUGE_AXES[il].index(ia)
        out[row] = readings[il, slot, POSTURES.index(posture)] - readings[il, slot, 0]
    return out


def simulate_measurements_linear(
    true_dev: ParameterDeviation, geom: MachineGeometry = DEFAULT_GEOMETRY,
    model_dev: ParameterDeviation | None = None,
) -> MeasurementVector:
    """First-order observables: design matrix times (true_dev - model_dev)."""
    diff = true_dev - (model_dev or ParameterDeviation())
    return MeasurementVector(build_design_matrix(geom) @ diff.vector)


def simulate_measurements_nonlinear(
    true_dev: ParameterDeviation, geom: MachineGeometry = DEFAULT_GEOMETRY,
    model_dev: ParameterDeviation | None = None,
) -> MeasurementVector:
    """Exact observables from the full kinematics and the fixed-plane gauge model."""
    return MeasurementVector(_readings_to_vector(gauge_readings(true_dev, geom, model_dev)))


def clean_readings(plan: ExperimentPlan, true_dev, geom, model_dev=None) -> np.ndarray:
    if plan.mode == "linear":
        return _linear_readings(true_dev, geom, model_dev)
    return gauge_readings(true_dev, geom, model_dev)


def _noisy_run(clean: np.ndarray, plan: ExperimentPlan, noise: NoiseModel, rng, trial: int = 0,
               with_log: bool = True):
    steps = [POSTURES.index(s) for s in plan.sequence]
    raw = np.broadcast_to(clean[:, :, steps], (plan.repeats, 3, 2, len(steps))).copy()
    if noise.std_dev > 0:
        raw += rng.normal(0.0, noise.std_dev, size=raw.shape)
    if noise.quantization_step > 0:
        raw = np.round(raw / noise.quantization_step) * noise.quantization_step
    seq = np.array(steps)
    per_posture = np.stack([raw[..., seq == k].mean(axis=-1) for k in range(3)], axis=-1)
    averaged = (per_posture - per_posture[..., :1]).mean(axis=0)
    vec = np.empty(12)
    for row, (axis, leg, posture) in enumerate(MEASUREMENT_LABELS):
        il, ia = AXES.index(leg), AXES.index(axis)
        vec[row] = averaged[il, GAUGE_AXES[il].index(ia), POSTURES.index(posture)]
    log = []
    if with_log:
        for rep in range(plan.repeats):
            for il in range(3):
                for n, k in enumerate(steps):
                    for slot, ia in enumerate(GAUGE_AXES[il]):
                        log.append((trial, AXES[il], AXES[ia], POSTURES[k], rep,
                                    float(raw[rep, il, slot, n])))
    return vec, log


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *map(int, keys)])


def run_experiment(
    plan: ExperimentPlan, true_dev: ParameterDeviation, noise: NoiseModel,
    geom: MachineGeometry = DEFAULT_GEOMETRY, model_dev: ParameterDeviation | None = None,
    trial: int = 0, stream: int = 0,
) -> ExperimentRun:
    """Repeat the per-leg motion sequence, add reading noise and average.

    Each repeat's Max/Min readings are referenced to the mean of that
    repeat's zero readings; the differences are averaged over repeats.
    The random stream depends only on (noise.seed, stream, trial).
    """
    clean = clean_readings(plan, true_dev, geom, model_dev)
    vec, log = _noisy_run(clean, plan, noise, _rng(noise.seed, stream, trial), trial)
    return ExperimentRun(MeasurementVector(vec), log)


@dataclass
class MonteCarloSummary:
    trials: int
    repeats: int
    mask: str
    mean_abs_error: np.ndarray
    p95_abs_error: np.ndarray
    errors: np.ndarray = field(repr=False)

    @property
    def overall_mean_abs_error(self) -> float:
        return float(self.mean_abs_error.mean())

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "repeats": self.repeats,
            "mask": self.mask,
            "mean_abs_error": dict(zip(PARAMETER_NAMES, self.mean_abs_error.tolist())),
            "p95_abs_error": dict(zip(PARAMETER_NAMES, self.p95_abs_error.tolist())),
            "overall_mean_abs_error": self.overall_mean_abs_error,
        }


def _trial_errors(args):
    clean, plan, noise, geom, mask, truth, first, last = args
    out = np.empty((last - first, 6))
    for n, trial in enumerate(range(first, last)):
        vec, _ = _noisy_run(clean, plan, noise, _rng(noise.seed, 0, trial), trial, with_log=False)
        est = solve_identification(vec, mask, geom).deviation.vector
        out[n] = est - truth
    return out


def monte_carlo(
    plan: ExperimentPlan, true_dev: ParameterDeviation, noise: NoiseModel,
    geom: MachineGeometry = DEFAULT_GEOMETRY, trials: int = 500, mask="full",
    workers: int | None = None,
) -> MonteCarloSummary:
    """Identification error statistics over independent noisy experiments.

    Trial ``t`` uses the random stream (noise.seed, 0, t), so the result is
    the same for any ``workers`` count.  Errors of parameters outside the
    mask are measured against zero estimates.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    mask = ParameterMask.parse(mask)
    clean = clean_readings(plan, true_dev, geom)
    truth = true_dev.vector
    if workers and workers > 1:
        bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
        chunks = [(clean, plan, noise, geom, mask, truth, int(a), int(b))
                  for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            errors = np.vstack(list(pool.map(_trial_errors, chunks)))
    else:
        errors = _trial_errors((clean, plan, noise, geom, mask, truth, 0, trials))
    abs_err = np.abs(errors)
    return MonteCarloSummary(
        trials=trials,
        repeats=plan.repeats,
        mask=mask.name,
        mean_abs_error=abs_err.mean(axis=0),
        p95_abs_error=np.percentile(abs_err, 95, axis=0),
        errors=errors,
    )


def repeat_scaling(
    true_dev: ParameterDeviation, noise: NoiseModel, geom: MachineGeometry = DEFAULT_GEOMETRY,
    repeats=(1, 3, 9), trials: int = 500, mode: str = "linear", mask="full",
    workers: int | None = None,
) -> dict[int, MonteCarloSummary]:
    return {
        n: monte_carlo(ExperimentPlan(repeats=n, mode=mode), true_dev, noise, geom,
                       trials, mask, workers)
        for n in repeats
    }


def _rms(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(np.mean(v**2)))


def three_experiment_protocol(
    true_dev: ParameterDeviation, noise: NoiseModel, geom: MachineGeometry = DEFAULT_GEOMETRY,
    plan: ExperimentPlan | None = None, compensate_mask: str = "full",
) -> dict:
    """Measurement pass, identification with three masks, verification after compensation.

    Experiments use independent random streams 1, 2 and 3 of ``noise.seed``.
    The parameters identified with ``compensate_mask`` are loaded into the
    controller model for the third experiment.
    """
    plan = plan or ExperimentPlan()
    if compensate_mask not in NAMED_MASKS:
        raise ConfigError(f"compensate_mask must be one of {sorted(NAMED_MASKS)}")

    exp1 = run_experiment(plan, true_dev, noise, geom, stream=1)
    exp2 = run_experiment(plan, true_dev, noise, geom, stream=2)
    fits = {name: solve_identification(exp2.measurements, name, geom)
            for name in ("full", "rho", "length")}
    model = fits[compensate_mask].deviation
    exp3 = run_experiment(plan, true_dev, noise, geom, model_dev=model, stream=3)
    refit = solve_identification(exp3.measurements, "full", geom)

    return {
        "geometry": geom.to_dict(),
        "true_dev": true_dev.to_dict(),
        "noise": {"std_dev": noise.std_dev, "quantization_step": noise.quantization_step,
                  "seed": noise.seed},
        "plan": {"repeats": plan.repeats, "sequence": list(plan.sequence), "mode": plan.mode},
        "experiment_1": {
            "measurements": exp1.measurements.as_dict(),
            "deviation_rms": _rms(exp1.measurements),
        },
        "experiment_2": {
            "measurements": exp2.measurements.as_dict(),
            "deviation_rms": _rms(exp2.measurements),
            "identification": [fits[k].to_dict() for k in ("full", "rho", "length")],
        },
        "experiment_3": {
            "compensated_with": compensate_mask,
            "model_dev": model.to_dict(),
            "measurements": exp3.measurements.as_dict(),
            "deviation_rms": _rms(exp3.measurements),
            "refit_residual_rms": refit.residual_rms,
        },
        "recovery_error": dict(zip(PARAMETER_NAMES,
                                   (fits["full"].deviation.vector - true_dev.vector).tolist())),
    }


def format_protocol_report(report: dict) -> str:
    lines = ["Calibration results (synthetic data)", ""]
    header = "".join(f"{n:>12}" for n in PARAMETER_NAMES) + f"{'r.m.s.':>12}"
    lines.append(f"{'set':<8}" + header)
    for row in report["experiment_2"]["identification"]:
        cols = set(row["columns"])
        cells = "".join(
            f"{row['parameters'][n]:>12.6f}" if k in cols else f"{'-':>12}"
            for k, n in enumerate(PARAMETER_NAMES)
        )
        lines.append(f"{row['mask']:<8}" + cells + f"{row['residual_rms']:>12.6f}")
    lines.append("")
    lines.append(f"experiment 1 deviation r.m.s.: {report['experiment_1']['deviation_rms']:.6f} mm")
    lines.append(f"experiment 2 deviation r.m.s.: {report['experiment_2']['deviation_rms']:.6f} mm")
    lines.append(
        f"experiment 3 deviation r.m.s.: {report['experiment_3']['deviation_rms']:.6f} mm "
        f"(compensated with '{report['experiment_3']['compensated_with']}' parameters)"
    )
    lines.append(
        f"experiment 3 refit residual r.m.s.: {report['experiment_3']['refit_residual_rms']:.6f} mm"
    )
    return "\n".join(lines)
