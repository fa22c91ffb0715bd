"""Command-line interface.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical
failure (unreachable target, inconsistent joints, rank deficiency, failed
self-test).  Relative ``--geometry``/``--config`` paths that do not exist
are looked up in ``$ORTHOCAL_CONFIG_DIR``; if ``--geometry`` is omitted and
that directory holds ``geometry.json``, it is used.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .calibration import PARAMETER_NAMES
from .errors import ConfigError, NumericalError
from .files import (
    calibration_report,
    format_calibration_report,
    load_measurement_file,
    measurement_payload,
    parse_run_config,
    read_json,
    repeats_by_observable,
    write_json,
    write_raw_log,
)
from .kinematics import (
    MachineGeometry,
    ParameterDeviation,
    constraint_residual,
    direct_kinematics,
    inverse_kinematics,
    within_joint_limits,
)
from .sensitivity import (
    PostureId,
    finite_difference_jacobian,
    parameter_jacobian,
    posture_configuration,
    posture_jacobian,
)
from .simulator import (
    ExperimentPlan,
    format_protocol_report,
    monte_carlo,
    repeat_scaling,
    run_experiment,
    three_experiment_protocol,
)

CONFIG_DIR_ENV = "ORTHOCAL_CONFIG_DIR"


def _fmt(v) -> str:
    return "(" + ", ".join(f"{x:.6f}" for x in np.ravel(v)) + ")"


def _resolve(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists() and not p.is_absolute() and os.environ.get(CONFIG_DIR_ENV):
        candidate = Path(os.environ[CONFIG_DIR_ENV]) / p
        if candidate.exists():
            return candidate
    return p


def _geometry_from_args(args, fallback: dict | None = None) -> MachineGeometry:
    path = _resolve(args.geometry)
    if path is None and os.environ.get(CONFIG_DIR_ENV):
        default = Path(os.environ[CONFIG_DIR_ENV]) / "geometry.json"
        if default.exists():
            path = default
    if path is not None:
        data = read_json(path)
        return MachineGeometry.from_dict(data.get("geometry", data))
    return MachineGeometry.from_dict(fallback)


def _dev_from_args(args) -> ParameterDeviation:
    return ParameterDeviation(args.dev_rho, args.dev_length)


def cmd_ik(args) -> int:
    geom = _geometry_from_args(args)
    dev = _dev_from_args(args)
    p = np.array(args.position, dtype=float)
    rho = inverse_kinematics(p, dev, geom, args.signs)
    print(f"rho = {_fmt(rho)} mm")
    print(f"constraint residual = {_fmt(constraint_residual(p, rho, dev, geom))} mm^2")
    if not within_joint_limits(rho, geom):
        lo, hi = geom.joint_bounds
        print(f"warning: joints outside limits [{lo:.6f}, {hi:.6f}] mm", file=sys.stderr)
    return 0


def cmd_fk(args) -> int:
    geom = _geometry_from_args(args)
    dev = _dev_from_args(args)
    rho = np.array(args.joints, dtype=float)
    p = direct_kinematics(rho, dev, geom)
    print(f"p = {_fmt(p)} mm")
    print(f"constraint residual = {_fmt(constraint_residual(p, rho, dev, geom))} mm^2")
    if not within_joint_limits(rho, geom):
        lo, hi = geom.joint_bounds
        print(f"warning: joints outside limits [{lo:.6f}, {hi:.6f}] mm", file=sys.stderr)
    return 0


def cmd_jacobian(args) -> int:
    geom = _geometry_from_args(args)
    dev = _dev_from_args(args)
    if args.pose is not None:
        p = np.array(args.pose, dtype=float)
        rho = inverse_kinematics(p, dev, geom)
        jac = parameter_jacobian(p, rho, dev, geom)
        label = f"pose {_fmt(p)}"
    else:
        pid = PostureId(args.posture)
        jac = posture_jacobian(pid, geom)
        p, _ = posture_configuration(pid, geom)
        label = f"posture {pid.value}"
    print(f"parameter Jacobian at {label}, columns {', '.join(PARAMETER_NAMES)}")
    for row in jac:
        print("  " + " ".join(f"{v:>12.6f}" for v in row))
    payload = {"label": label, "columns": list(PARAMETER_NAMES), "jacobian": jac.tolist()}
    if args.check_fd:
        num = finite_difference_jacobian(p, dev, geom, args.step)
        gap = float(np.max(np.abs(num - jac)))
        print(f"max |analytic - finite difference| = {gap:.3e}")
        payload["max_fd_discrepancy"] = gap
    if args.out:
        write_json(args.out, payload)
    return 0


def _load_config(args) -> tuple[dict, dict]:
    raw = read_json(_resolve(args.config)) if args.config else {}
    cfg = parse_run_config(raw)
    if args.geometry is not None or (not raw.get("geometry") and os.environ.get(CONFIG_DIR_ENV)):
        cfg["geometry"] = _geometry_from_args(args, raw.get("geometry"))
        cfg["true_dev"].check(cfg["geometry"])
    if args.seed is not None:
        raw["seed"] = args.seed
        noise = cfg["noise"]
        cfg["noise"] = type(noise)(noise.std_dev, noise.quantization_step, args.seed)
    if args.mode is not None:
        plan = cfg["plan"]
        cfg["plan"] = ExperimentPlan(plan.repeats, plan.sequence, args.mode)
    return raw, cfg


def cmd_simulate(args) -> int:
    raw, cfg = _load_config(args)
    geom, plan, noise = cfg["geometry"], cfg["plan"], cfg["noise"]
    run = run_experiment(plan, cfg["true_dev"], noise, geom)
    out = args.out or cfg["outputs"].get("measurements") or "measurements.json"
    meta = {"mode": plan.mode, "repeats": plan.repeats, "seed": noise.seed,
            "true_dev": cfg["true_dev"].to_dict()}
    write_json(out, measurement_payload(run.measurements, geom,
                                        repeats_by_observable(run.log, plan), meta))
    print(f"wrote {out}")
    log_path = args.log or cfg["outputs"].get("log")
    if log_path:
        write_raw_log(log_path, run.log)
        print(f"wrote {log_path}")
    trials = args.monte_carlo or cfg["monte_carlo"].get("trials")
    if trials:
        mc = cfg["monte_carlo"]
        mask = args.mask or mc.get("mask", "full")
        workers = args.workers or mc.get("workers")
        summary = monte_carlo(plan, cfg["true_dev"], noise, geom, int(trials), mask, workers).to_dict()
        sweep = mc.get("repeats_sweep")
        if sweep:
            scaling = repeat_scaling(cfg["true_dev"], noise, geom, tuple(sweep), int(trials),
                                     plan.mode, mask, workers)
            summary["repeats_sweep"] = {str(n): s.to_dict() for n, s in scaling.items()}
        summary_path = args.summary or cfg["outputs"].get("summary")
        print(f"Monte-Carlo ({trials} trials, mask {mask}): mean |error| = "
              f"{summary['overall_mean_abs_error']:.6f} mm")
        if summary_path:
            write_json(summary_path, summary)
            print(f"wrote {summary_path}")
    return 0


def cmd_calibrate(args) -> int:
    measurements, geom = load_measurement_file(args.measurements)
    if args.geometry is not None:
        geom = _geometry_from_args(args)
    masks = args.mask or ["full", "rho", "length"]
    report = calibration_report(measurements, geom, masks)
    text = format_calibration_report(report)
    print(text)
    if args.out:
        out = Path(args.out)
        write_json(out, report)
        out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
        print(f"wrote {out} and {out.with_suffix('.txt')}")
    return 0


def cmd_pipeline(args) -> int:
    raw, cfg = _load_config(args)
    report = three_experiment_protocol(cfg["true_dev"], cfg["noise"], cfg["geometry"],
                                       cfg["plan"], args.compensate or cfg["compensate_mask"])
    text = format_protocol_report(report)
    print(text)
    out = args.out or cfg["outputs"].get("report")
    if out:
        write_json(out, report)
        Path(out).with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    tol = args.self_test if args.self_test is not None else cfg["self_test_tolerance"]
    if tol is not None:
        worst = max(abs(v) for v in report["recovery_error"].values())
        status = "PASS" if worst <= tol else "FAIL"
        print(f"self-test: max |recovery error| = {worst:.6f} mm (tolerance {tol:g}) {status}")
        if worst > tol:
            return 2
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", help="JSON file with geometry values (or a 'geometry' block)")
    p.add_argument("--dev-rho", type=float, nargs=3, default=(0.0, 0.0, 0.0),
                   metavar=("DX", "DY", "DZ"), help="joint offsets (mm)")
    p.add_argument("--dev-length", type=float, nargs=3, default=(0.0, 0.0, 0.0),
                   metavar=("DX", "DY", "DZ"), help="leg length deviations (mm)")


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--geometry", help="geometry JSON, overrides the config block")
    p.add_argument("--seed", type=int)
    p.add_argument("--mode", choices=("linear", "nonlinear"))
    p.add_argument("--out")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orthocal", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ik", help="inverse kinematics")
    p.add_argument("position", type=float, nargs=3, help="TCP position PX PY PZ (mm)")
    p.add_argument("--signs", type=int, nargs=3, default=(1, 1, 1))
    _add_common(p)
    p.set_defaults(func=cmd_ik)

    p = sub.add_parser("fk", help="direct kinematics")
    p.add_argument("joints", type=float, nargs=3, help="joint coordinates RX RY RZ (mm)")
    _add_common(p)
    p.set_defaults(func=cmd_fk)

    p = sub.add_parser("jacobian", help="parameter Jacobian at a posture or pose")
    p.add_argument("--posture", default="zero", choices=[pid.value for pid in PostureId])
    p.add_argument("--pose", type=float, nargs=3, metavar=("PX", "PY", "PZ"))
    p.add_argument("--check-fd", action="store_true", help="compare with finite differences")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_jacobian)

    p = sub.add_parser("simulate", help="synthesize a measurement file")
    _add_run(p)
    p.add_argument("--log", help="raw readings CSV")
    p.add_argument("--monte-carlo", type=int, metavar="TRIALS")
    p.add_argument("--mask", choices=("full", "rho", "length"))
    p.add_argument("--workers", type=int)
    p.add_argument("--summary", help="Monte-Carlo summary JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="identify parameters from a measurement file")
    p.add_argument("measurements")
    p.add_argument("--geometry")
    p.add_argument("--mask", action="append", choices=("full", "rho", "length"))
    p.add_argument("--out", help="report JSON path (a .txt twin is written next to it)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("pipeline", help="run the three-experiment protocol")
    _add_run(p)
    p.add_argument("--compensate", choices=("full", "rho", "length"))
    p.add_argument("--self-test", type=float, metavar="TOL",
                   help="fail (exit 2) if the full-set recovery error exceeds TOL mm")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
