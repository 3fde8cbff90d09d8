"""Hard-kill topology optimization with a 2D plane-strain BEM solver.

The library couples a direct collocation boundary-element solver (quadratic
discontinuous elements on grid-cell faces) with a topological-derivative
removal loop, quadtree sampling of interior fields, and blockwise
maintenance of the explicit system-matrix inverse across remeshes.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    BoundaryCondition,
    BoundaryElement,
    BoundaryModel,
    CellGrid,
    Material,
    cell_center,
    dirichlet,
    neumann,
    traction_free,
)
from .bem import (  # noqa: F401
    BemSystem,
    BoundarySolution,
    InteriorState,
    assemble,
    interior_fields,
    interior_state,
    solve,
    strain_energy,
    strain_from_stress,
)
from .kernels import kelvin_kernels, stress_kernels  # noqa: F401
from .topoderiv import TdField, TdSample, cutoff, td_field, topological_derivative  # noqa: F401
from .sampler import QuadtreePlan, quadtree_refine, uniform_points  # noqa: F401
from .remesh import BoundaryDiff, classify_cells, diff_boundaries, generate_boundary  # noqa: F401
from .inverse_update import (  # noqa: F401
    InverseState,
    apply_diff,
    audit_drift,
    extend_inverse,
    regularized_inverse,
    shrink_inverse,
)
from .optimize import (  # noqa: F401
    IterationRecord,
    LoadSpec,
    OptimizationConfig,
    OptimizationError,
    OptimizationState,
    build_problem,
    run,
)
from .config import ConfigError, dump_config, load_config  # noqa: F401
from .artifacts import RunArtifacts, boundary_svg, emit_artifacts  # noqa: F401
