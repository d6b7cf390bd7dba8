"""signflip: spectrum of the sign-changing diffusion operator on a
rounded-corner half-annulus, with certified smallest-modulus eigensolves and
the asymptotic diagnostics (ln-delta periodicity, zero crossings at delta^n,
source-norm peaks)."""

__version__ = "0.1.0"

from .material import (  # noqa: F401
    ContrastClass,
    MaterialContrast,
    SingularData,
    compute_mu,
    delta_n,
    lattice,
    normalize_phi,
    period_lndelta,
    phi,
    singular_data,
)
from .mesh import CanonicalMeshParams, TriMesh, build_canonical, build_unit_square  # noqa: F401
from .fem import AssembledSystem, assemble, h1_seminorm  # noqa: F401
from .eig import SpectrumRecord, dense_solve, inertia, smallest_modulus, solve_source  # noqa: F401
from .experiments import (  # noqa: F401
    SweepPlan,
    locate_crossings,
    log_uniform_grid,
    periodicity_grid,
    run_sweep,
    source_sweep,
    verify_periodicity,
)
