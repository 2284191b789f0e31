"""Partial SVD by a Jacobi-Davidson method with inner-preconditioned correction equations."""

from .dense import jacobi_svd, small_svd
from .jdsvd import Mode, RunReport, SolverConfig, Status, solve
from .kernels import BACKEND
from .minres import MinresOutcome, MinresStatus, minres
from .operator import ProjectedAugmentedOp, assemble_reduced_op, make_projected_op
from .sparse import (
    MatrixMarketError,
    NormEstimates,
    SparseMatrix,
    load_matrix_market,
    norm_estimates,
    write_matrix_market,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "MatrixMarketError",
    "MinresOutcome",
    "MinresStatus",
    "Mode",
    "NormEstimates",
    "ProjectedAugmentedOp",
    "RunReport",
    "SolverConfig",
    "SparseMatrix",
    "Status",
    "assemble_reduced_op",
    "jacobi_svd",
    "load_matrix_market",
    "make_projected_op",
    "minres",
    "norm_estimates",
    "small_svd",
    "solve",
    "write_matrix_market",
]
