"""Linear nonautonomous systems toolbox: propagation, Floquet analysis,
exponential dichotomies, Bohl/Sacker-Sell style spectra, Lyapunov
reductions, and topological linearization of quasilinear perturbations.
"""

from . import errors as _errors
from .errors import DlabError  # noqa: F401

__version__ = "0.1.0"

_error_names = [
    name for name in dir(_errors)
    if isinstance(getattr(_errors, name), type)
    and issubclass(getattr(_errors, name), Exception)
]
globals().update({name: getattr(_errors, name) for name in _error_names})

from .linalg import (  # noqa: E402
    ProjectionMatrix,
    canonical_projection,
    gram_schmidt_qr,
    matrix_exp,
    operator_norm_2,
    orth_projector,
    principal_log,
    projection_from_matrix,
    spd_sqrt,
)
from .system import (  # noqa: E402
    CATALOG,
    LinearSystem,
    QuasilinearSystem,
    builtin,
    catalog_entries,
    check_periodicity,
    conjugated_system,
    eval_coeff,
    format_system,
    is_autonomous,
    parse_system,
    reversed_system,
    shifted_system,
)
from .propagate import (  # noqa: E402
    Trajectory,
    TransitionSample,
    adjoint_check,
    bounded_growth_fit,
    fundamental_trajectory,
    integrate_ivp,
    liouville_check,
    trajectory_to_csv,
    transition_matrix,
    transition_path,
)
from .floquet import (  # noqa: E402
    FloquetData,
    PeriodicSolution,
    floquet_factor,
    floquet_factor_path,
    monodromy,
    periodic_hyperbolic,
    periodic_solution,
)
from .dichotomy import (  # noqa: E402
    DichotomyCertificate,
    FullLineReport,
    SubspaceSplit,
    certify,
    dichotomy_index,
    estimate_splitting,
    full_line_criterion,
    green_apply,
    lipschitz_fixed_point,
    min_principal_angle,
    noncriticality_test,
    noncriticality_threshold,
    projector_path_defect,
    sup_bound_check,
)
from .spectrum import (  # noqa: E402
    BohlPair,
    SpectrumReport,
    fullline_spectrum,
    halfline_spectrum,
    perron_triangularize,
    rank_step_function,
    scalar_bohl,
    shifted_dichotomy_test,
)
from .reduce import (  # noqa: E402
    ReductionResult,
    SpectralReduction,
    coppel_similarity,
    spectral_block_diagonalize,
    subsystem_dichotomies,
)
from .linearize import (  # noqa: E402
    LinearizationContext,
    MapEvaluation,
    G_jacobian,
    conjugacy_residual,
    continuity_constant,
    eval_G,
    eval_H,
    evaluations_to_csv,
    inverse_residual,
    make_context,
)

__all__ = ["__version__"] + _error_names + [
    "ProjectionMatrix", "canonical_projection", "gram_schmidt_qr",
    "matrix_exp", "operator_norm_2", "orth_projector", "principal_log",
    "projection_from_matrix", "spd_sqrt",
    "CATALOG", "LinearSystem", "QuasilinearSystem", "builtin",
    "catalog_entries", "check_periodicity", "conjugated_system",
    "eval_coeff", "format_system", "is_autonomous", "parse_system",
    "reversed_system", "shifted_system",
    "Trajectory", "TransitionSample", "adjoint_check", "bounded_growth_fit",
    "fundamental_trajectory", "integrate_ivp", "liouville_check",
    "trajectory_to_csv", "transition_matrix", "transition_path",
    "FloquetData", "PeriodicSolution", "floquet_factor",
    "floquet_factor_path", "monodromy", "periodic_hyperbolic",
    "periodic_solution",
    "DichotomyCertificate", "FullLineReport", "SubspaceSplit", "certify",
    "dichotomy_index", "estimate_splitting", "full_line_criterion",
    "green_apply", "lipschitz_fixed_point", "min_principal_angle",
    "noncriticality_test", "noncriticality_threshold",
    "projector_path_defect", "sup_bound_check",
    "BohlPair", "SpectrumReport", "fullline_spectrum", "halfline_spectrum",
    "perron_triangularize", "rank_step_function", "scalar_bohl",
    "shifted_dichotomy_test",
    "ReductionResult", "SpectralReduction", "coppel_similarity",
    "spectral_block_diagonalize", "subsystem_dichotomies",
    "LinearizationContext", "MapEvaluation", "G_jacobian",
    "conjugacy_residual", "continuity_constant", "eval_G", "eval_H",
    "evaluations_to_csv", "inverse_residual", "make_context",
]
