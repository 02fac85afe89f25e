"""Structural analysis of differential-algebraic equations.

Signature matrix, highest-value transversal and offsets, prolongation of the
system to its consistent-point form, the system Jacobian, and the stirred
tank cascade used as a running example.
"""

from .errors import (
    DaeStructError,
    NonSquareSystem,
    NotQuasiTriangular,
    NumericError,
    ParseError,
    StructurallySingular,
    VerificationMismatch,
)
from .expr import Point, evaluate, partial_derivative, to_text, total_derivative
from .jacobian import (
    evaluate_jacobian,
    nonsingularity_check,
    solve_consistent_point,
    system_jacobian,
)
from .language import Model, parse_expr, parse_model, print_model
from .prolong import block_schedule, prolong
from .sigma import (
    ABSENT,
    SigmaMatrix,
    analyze,
    compute_offsets,
    degrees_of_freedom,
    signature_matrix,
    solve_hvt,
    structural_index,
)
from .tanks import TankSpec, generate_tank_model, reduce_quasitriangular

__version__ = "0.1.0"

__all__ = [
    "ABSENT",
    "DaeStructError",
    "Model",
    "NonSquareSystem",
    "NotQuasiTriangular",
    "NumericError",
    "ParseError",
    "Point",
    "SigmaMatrix",
    "StructurallySingular",
    "TankSpec",
    "VerificationMismatch",
    "analyze",
    "block_schedule",
    "compute_offsets",
    "degrees_of_freedom",
    "evaluate",
    "evaluate_jacobian",
    "generate_tank_model",
    "nonsingularity_check",
    "parse_expr",
    "parse_model",
    "partial_derivative",
    "print_model",
    "prolong",
    "reduce_quasitriangular",
    "signature_matrix",
    "solve_consistent_point",
    "solve_hvt",
    "structural_index",
    "system_jacobian",
    "to_text",
    "total_derivative",
]
