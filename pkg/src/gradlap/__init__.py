"""Numerical solvers for the infinity Laplacian with a gradient constraint.

The problem ``min{Δ∞u, |Du| - χ_D} = 0`` is approached along three routes:
value iteration for the turn-selling tug-of-war games (:mod:`gradlap.dpp`),
patching of infinity-harmonic functions (:mod:`gradlap.patching`) and the
p→∞ limit of a weighted p-Laplacian functional (:mod:`gradlap.variational`).
:mod:`gradlap.verify` checks the relations between them.
"""

from .analytic import CATALOG, ExampleProblem, cone, dist_to_boundary, example_library, maximal_d_mask, v_alpha
from .dpp import GameSpec, SolveReport, Variant, dpp_apply, dpp_solve, oscillation, payoff_lipschitz, residual
from .grid import (
    ConfigurationError,
    Disk,
    ExplicitMask,
    GridDomain,
    Points,
    Rectangle,
    Segment,
    Union_,
    ball,
    build_grid,
    dilate_mask,
    geodesic_distance,
    interior_closure_mask,
)
from .montecarlo import Estimate, GameTrace, Rule, Strategy, estimate_value, greedy_pair, play
from .patching import RegionDecomposition, decompose, patch, patched_solution, pointwise_lipschitz, solve_infinity_harmonic
from .variational import (
    DEFAULT_SCHEDULE,
    VariationalSpec,
    functional_gradient,
    functional_value,
    minimize_p,
    p_continuation,
    sup_norm_gradient,
)
from .verify import (
    CheckReport,
    check_lip_bound,
    check_minimal_vs_variational,
    check_monotone_in_D,
    check_ordering,
    check_oscillation,
    check_patch_equals_jensen,
    check_support_dependence,
)

__version__ = "0.1.0"
