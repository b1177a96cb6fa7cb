"""Sparse-grid prewavelet Ritz-Galerkin solver for elliptic problems.

The package discretizes variable-coefficient elliptic equations on the unit
cube with multilinear finite elements on sparse grids, using a prewavelet
basis whose cross-level L2 orthogonality makes the semi-orthogonal stiffness
operator applicable matrix-free in near-linear time.  See :mod:`.grid` for
the storage conventions shared by all modules.
"""

from .grid import (
    Grid1D, LevelBlock, SparseGridArray, ValueFormat, iterate_levels,
    level_size, pack, point_coords, sparse_dof, unpack,
)
from .basis1d import (
    exact_1d_integral, prewavelet_dual_stencil_1d, prewavelet_transform_1d,
    prolong_1d, restrict_1d,
)
from .transform import decompose, evaluate_at, reconstruct
from .operator import (
    CoefficientField, CoordinateMap, Lifting, assemble_load,
    assemble_stencil, assemble_stencils, lifting_contribution, pullback,
    pullback_rhs,
)
from .matvec import (
    PassPlan, SemiOrthogonalOperator, assemble_dense, dense_constant_exact,
    semiortho_diagonal, semiortho_matvec,
)
from .solver import (
    SolveReport, assemble_rhs, estimate_condition, pcg, solve,
)
from .problems import ProblemSpec, builtin, builtin_names, error_norms, make_lifting

__version__ = "0.1.0"
