"""Low-rank column-wise sensing with unknown block-local row permutations.

Observations y_k = P A_k x_k share a rank-r column space X = U B while an
unknown permutation P, acting independently inside consecutive blocks of s
rows, scrambles every measurement vector the same way. The solvers here
alternate between assignment-based permutation estimation, a U update
(gradient or exact), and column-wise least squares for B, after a spectral
initialization computed from permutation-invariant block sums.
"""

from .assignment import solve_lap_max, update_permutation
from .core_model import (
    BlockPermutation,
    CollapsedSystem,
    Dims,
    GroundTruth,
    ProblemInstance,
    apply_permutation,
    collapse,
    compute_incoherence,
    generate_synthetic,
    objective,
    sample_s_local_permutation,
)
from .errors import (
    DegenerateInitError,
    DegenerateInputError,
    InvalidDimsError,
    PermLrcsError,
    QrDegeneracyError,
    RankDeficiencyWarning,
    RankDeficientColumnError,
    ShapeMismatchError,
    SolverError,
)
from .io import load_instance, save_instance
from .metrics import (
    RECOVERY_SD_THRESHOLD,
    TrialRecord,
    permutation_row_error,
    relative_error_x,
    subspace_distance,
)
from .solvers import (
    FactorPair,
    IterationRecord,
    SolveResult,
    SolverConfig,
    estimate_step_size_altgdmin,
    exact_update_u,
    gd_step_u,
    gradient_u,
    init_b_collapsed,
    ls_update_b,
    run_lrcs_collapsed_baseline,
    run_perm_altgdmin,
    run_perm_altmin,
    spectral_init,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPermutation",
    "CollapsedSystem",
    "DegenerateInitError",
    "DegenerateInputError",
    "Dims",
    "FactorPair",
    "GroundTruth",
    "InvalidDimsError",
    "IterationRecord",
    "PermLrcsError",
    "ProblemInstance",
    "QrDegeneracyError",
    "RECOVERY_SD_THRESHOLD",
    "RankDeficiencyWarning",
    "RankDeficientColumnError",
    "ShapeMismatchError",
    "SolveResult",
    "SolverConfig",
    "SolverError",
    "TrialRecord",
    "apply_permutation",
    "collapse",
    "compute_incoherence",
    "estimate_step_size_altgdmin",
    "exact_update_u",
    "gd_step_u",
    "generate_synthetic",
    "gradient_u",
    "init_b_collapsed",
    "load_instance",
    "ls_update_b",
    "objective",
    "permutation_row_error",
    "relative_error_x",
    "run_lrcs_collapsed_baseline",
    "run_perm_altgdmin",
    "run_perm_altmin",
    "sample_s_local_permutation",
    "save_instance",
    "solve_lap_max",
    "spectral_init",
    "subspace_distance",
    "update_permutation",
]
