"""Kinematics, leg-parallelism calibration and measurement simulation for
Orthoglide-type translational parallel machines."""

from .calibration import (
    CalibrationResult,
    MeasurementVector,
    ParameterMask,
    build_design_matrix,
    coefficient_triple,
    compensate_joint_command,
    gauge_initial_locations,
    solve_identification,
)
from .errors import (
    ConfigError,
    DegenerateJoint,
    GaugeOffLeg,
    InconsistentJoints,
    InconsistentPose,
    NumericalError,
    RankDeficient,
    SingularConfiguration,
    Unreachable,
)
from .kinematics import (
    DEFAULT_GEOMETRY,
    LegAngles,
    MachineGeometry,
    ParameterDeviation,
    direct_kinematics,
    inverse_kinematics,
    leg_angles,
    within_joint_limits,
)
from .sensitivity import (
    PostureId,
    displacement_at_posture,
    finite_difference_jacobian,
    parameter_jacobian,
    posture_configuration,
    posture_jacobian,
)
from .simulator import (
    ExperimentPlan,
    NoiseModel,
    monte_carlo,
    run_experiment,
    simulate_measurements_linear,
    simulate_measurements_nonlinear,
    three_experiment_protocol,
)

__version__ = "0.1.0"
