"""Multiple-domain Legendre-Gauss-Radau collocation with automatic detection
of state-path-constraint arcs, plus the reusable-launch-vehicle entry
benchmark."""
from .backends import NlpResult, NlpSolveOptions, solve
from .detection import (
    Arc,
    ArcReport,
    UnsupportedStructureError,
    bound_switch_times,
    decompose,
    detect_arcs,
    relative_difference,
)
from .lgr import (
    LgrRule,
    barycentric_weights,
    differentiation_matrix,
    integration_matrix,
    interpolate,
    lgr_points,
)
from .loop import SpocTolerances, solve_spoc
from .mesh import ErrorEstimate, estimate_error, refine
from .ocp import (
    ConstraintKind,
    DerivativeInconsistencyError,
    OcpDefinition,
    PathConstraint,
    Scaling,
    derivative_consistency_check,
    validate,
)
from .solution import DomainSolution, LinearGuess, TrajectorySolution
from .transcription import Domain, DomainLayout, SparseNlp, transcribe

__version__ = "0.1.0"
