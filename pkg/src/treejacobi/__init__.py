"""Spectral theory of periodic Jacobi matrices on trees.

A periodic Jacobi matrix here is the lift of a finite leafless multigraph
with vertex potentials and positive edge weights to its universal cover
tree.  The package solves the coupled m-function system on the upper
half-plane, recovers the density of states by Stieltjes inversion, locates
bands, gaps (with their rational labels) and point masses, runs
finite-truncation eigenvalue-counting experiments with free and periodic
boundary conditions, and validates everything against closed-form models.
"""

__version__ = "0.1.0"

from .graph_model import (
    Disconnected,
    GraphError,
    HasLeaf,
    NonpositiveWeight,
    QuotientGraph,
    SpanningDecomposition,
    schur_norm_bound,
    spanning_decomposition,
    validate,
)
from .mfield import (
    BacktrackingPath,
    MField,
    NoConvergence,
    continuation_solve,
    greens_consistency,
    greens_ladder,
    greens_path,
    solve_at_points,
    solve_m,
)

__all__ = [
    "__version__",
    "GraphError",
    "Disconnected",
    "HasLeaf",
    "NonpositiveWeight",
    "QuotientGraph",
    "SpanningDecomposition",
    "validate",
    "spanning_decomposition",
    "schur_norm_bound",
    "MField",
    "NoConvergence",
    "BacktrackingPath",
    "solve_m",
    "solve_at_points",
    "continuation_solve",
    "greens_ladder",
    "greens_consistency",
    "greens_path",
]
