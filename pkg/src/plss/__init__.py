"""Projected linear systems solvers for consistent sparse systems ``A x = b``."""

from .baselines import bidiag_start, bidiag_step, craig_solve, lsqr_solve
from .common import (
    CONVERGED,
    ITERATION_LIMIT,
    Breakdown,
    ConfigError,
    SolveReport,
    SolverConfig,
    TraceRow,
    check_stop,
)
from .kaczmarz import KaczmarzState, classical_kaczmarz_step, kaczmarz_solve, kz_solve, kz_step, row_scheduler
from .linalg import (
    SparseMatrix,
    Weight,
    build_csr,
    column_norms,
    matvec,
    matvec_transpose,
    read_matrix_market,
)
from .projection import (
    IdentityColumnSketch,
    QREngineState,
    RandomFixedSketch,
    RandomGrowingSketch,
    ResidualSketch,
    SketchHistory,
    TriEngineState,
    lincomb_coeffs,
    qr_append,
    qr_update_step,
    run_projection,
    sketched_update,
    tri_append,
    tri_update_step,
)
from .solver import SolverState, make_weight, plss_init, plss_solve, plss_step

__version__ = "0.1.0"

__all__ = [
    "bidiag_start",
    "bidiag_step",
    "craig_solve",
    "lsqr_solve",
    "CONVERGED",
    "ITERATION_LIMIT",
    "Breakdown",
    "ConfigError",
    "SolveReport",
    "SolverConfig",
    "TraceRow",
    "check_stop",
    "KaczmarzState",
    "classical_kaczmarz_step",
    "kaczmarz_solve",
    "kz_solve",
    "kz_step",
    "row_scheduler",
    "SparseMatrix",
    "Weight",
    "build_csr",
    "column_norms",
    "matvec",
    "matvec_transpose",
    "read_matrix_market",
    "IdentityColumnSketch",
    "QREngineState",
    "RandomFixedSketch",
    "RandomGrowingSketch",
    "ResidualSketch",
    "SketchHistory",
    "TriEngineState",
    "lincomb_coeffs",
    "qr_append",
    "qr_update_step",
    "run_projection",
    "sketched_update",
    "tri_append",
    "tri_update_step",
    "SolverState",
    "make_weight",
    "plss_init",
    "plss_solve",
    "plss_step",
]
