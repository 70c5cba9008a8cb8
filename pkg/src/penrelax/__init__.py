"""Penalized convex relaxations for bilinear matrix inequality problems.

The package splits into a generic optimization layer (symmetric-matrix
utilities, BMI containers, penalized cone relaxations, a conic backend and the
sequential outer loop) and a control layer that builds static output-feedback
H2 / H-infinity synthesis problems on top of it, plus a CLI (``penrelax``).
"""

from .symmat import (
    max_eig_sym,
    max_real_eig,
    min_eig_sym,
    packed_length,
    side_of_packed,
    smat,
    solve_lyapunov,
    svec,
    sym_part,
)
from .bmi import BmiProblem, VarMap, bmi_residual, eval_p, lift_residual
from .conic import (
    Block,
    ConeType,
    ConicProgram,
    ConicSolution,
    SolverSettings,
    Status,
    cone_violation,
    export_cbf,
    max_block_violation,
    solve,
    validate,
)
from .relaxation import (
    ConeKind,
    PenaltyConfig,
    build_penalized,
    cone_contains,
    encode_cone,
    penalty_value,
    split_primal,
    tri_index,
)
from .sequential import (
    RoundRecord,
    SequentialConfig,
    SequentialError,
    SolveTrace,
    nesterov_anchor,
    run,
    stopping_improvement,
)
from .synthesis import (
    Certificate,
    ControllerStructure,
    Plant,
    SynthesisKind,
    SynthesisProblem,
    build_h2,
    build_hinf,
    centralized_structure,
    certify_stability,
    closed_loop,
    controller_gain,
    diagonal_structure,
    extract_controller,
    h2_norm,
    hinf_norm,
    open_loop_norm,
    regularize_b1,
    scale_vector,
    structure_from_mask,
)

__version__ = "0.1.0"

__all__ = [
    "BmiProblem",
    "Block",
    "Certificate",
    "ConeKind",
    "ConeType",
    "ConicProgram",
    "ConicSolution",
    "ControllerStructure",
    "PenaltyConfig",
    "Plant",
    "RoundRecord",
    "SequentialConfig",
    "SequentialError",
    "SolveTrace",
    "SolverSettings",
    "Status",
    "SynthesisKind",
    "SynthesisProblem",
    "VarMap",
    "bmi_residual",
    "build_h2",
    "build_hinf",
    "build_penalized",
    "centralized_structure",
    "certify_stability",
    "closed_loop",
    "cone_contains",
    "cone_violation",
    "controller_gain",
    "diagonal_structure",
    "encode_cone",
    "eval_p",
    "export_cbf",
    "extract_controller",
    "h2_norm",
    "hinf_norm",
    "lift_residual",
    "max_block_violation",
    "max_eig_sym",
    "max_real_eig",
    "min_eig_sym",
    "nesterov_anchor",
    "open_loop_norm",
    "packed_length",
    "penalty_value",
    "regularize_b1",
    "run",
    "scale_vector",
    "side_of_packed",
    "smat",
    "solve",
    "solve_lyapunov",
    "split_primal",
    "stopping_improvement",
    "svec",
    "sym_part",
    "tri_index",
    "validate",
]
