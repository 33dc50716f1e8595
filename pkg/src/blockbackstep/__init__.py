"""Backstepping boundary control of hyperbolic PIDE-ODE systems with isotachic blocks.

Typical pipeline::

    sys, om = build_system(two_layer_benchmark())
    Phi0, _ = place_poles(sys.A, sys.B, -6 * np.eye(4))
    bt = build_transform(sys, 200)
    ks = solve_kernels(sys, bar_coefficients(sys, bt), bt, Phi0)
    law = make_control_law(extract_gains(ks, bt))
"""

from .block_transform import (
    BarCoefficients,
    BlockTransform,
    apply_block_transform,
    bar_coefficients,
    build_transform,
)
from .controller import (
    ControlLaw,
    TargetSnapshot,
    control_input,
    from_target_state,
    make_control_law,
    to_target_state,
)
from .hyperbolic_model import (
    BlockStructure,
    HyperbolicSystem,
    ModelError,
    StateSnapshot,
    partition_speeds,
    uniform_grid,
    validate_system,
)
from .kernel_solver import (
    ConvergenceError,
    DivergenceError,
    GainSet,
    KernelError,
    KernelSet,
    MarginError,
    extract_gains,
    kernel_residuals,
    place_poles,
    solve_kernels,
)
from .simulator import SimSettings, Trajectory, simulate
from .timoshenko import BeamConfig, BeamState, build_system, two_layer_benchmark

__all__ = [
    "BarCoefficients",
    "BlockTransform",
    "apply_block_transform",
    "bar_coefficients",
    "build_transform",
    "ControlLaw",
    "TargetSnapshot",
    "control_input",
    "from_target_state",
    "make_control_law",
    "to_target_state",
    "BlockStructure",
    "HyperbolicSystem",
    "ModelError",
    "StateSnapshot",
    "partition_speeds",
    "uniform_grid",
    "validate_system",
    "ConvergenceError",
    "DivergenceError",
    "GainSet",
    "KernelError",
    "KernelSet",
    "MarginError",
    "extract_gains",
    "kernel_residuals",
    "place_poles",
    "solve_kernels",
    "SimSettings",
    "Trajectory",
    "simulate",
    "BeamConfig",
    "BeamState",
    "build_system",
    "two_layer_benchmark",
]

__version__ = "0.1.0"
