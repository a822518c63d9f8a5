"""Eigenvalues of P^2 + iX^3 + i alpha X from moment recursions and a Gaussian reference function."""

__version__ = "0.1.0"

from .branches import (
    CriticalPoint,
    SpectralBranch,
    cubic_family,
    detect_transition,
    locate_critical,
    sweep,
)
from .errors import (
    BracketInvalid,
    BranchLost,
    ConfigError,
    DegreeTooLow,
    DerivativeVanished,
    DoubleRootDivergence,
    EigSolverFailure,
    IndexOutOfRange,
    MrfError,
    NoTransition,
    NotConverged,
    PrecisionExhausted,
)
from .moments import (
    MomentColumnTable,
    PolynomialPotential,
    RecursionSpec,
    column_values,
    cubic_potential,
    derive_recursion,
    moments_from_missing,
)
from .oracle import build_hamiltonian_matrix, match_roots, oracle_eigenvalues
from .quantizer import (
    ConvergedEnergy,
    MrfConfig,
    RootEstimate,
    converge,
    delta_and_derivative,
    grid_scan,
    mrf_entry,
    newton_refine,
    quantization_matrix,
)

__all__ = [name for name in dir() if not name.startswith("_")]
