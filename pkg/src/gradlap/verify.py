"""Relation checks between solver outputs.

Every check returns a :class:`CheckReport`. ``margin`` is the raw worst-case
slack of the inequality being checked (negative means violated); a check
passes when ``margin >= -tol``.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .analytic import ExampleProblem, maximal_d_mask, v_alpha
from .dpp import GameSpec, Variant, default_tol, dpp_solve, oscillation, payoff_lipschitz
from .grid import ConfigurationError, GridDomain, dilate_mask, interior_closure_mask
from .patching import patched_solution, solve_infinity_harmonic
from .variational import VariationalSpec, p_continuation, sup_norm_gradient

logger = logging.getLogger(__name__)


@dataclass
class CheckReport:
    name: str
    passed: bool
    margin: float
    locus: object = None
    details: dict = field(default_factory=dict)
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def as_dict(self) -> dict:
        locus = self.locus
        if isinstance(locus, np.ndarray):
            locus = locus.tolist()
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "status": self.status,
            "margin": float(self.margin),
            "locus": locus,
            "details": _jsonable(self.details),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        # raw solver fields stay in memory only
        return {str(k): _jsonable(v) for k, v in obj.items() if k != "fields"}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _locus(grid, flat_idx):
    if grid is None or flat_idx is None:
        return flat_idx
    return [float(c) for c in grid.node_coords(int(flat_idx))]


def _interior(grid, *fields):
    shape = np.shape(fields[0])
    for f in fields[1:]:
        if np.shape(f) != shape:
            raise ConfigurationError("fields live on different grids")
    if grid is not None:
        if tuple(grid.shape) != tuple(shape):
            raise ConfigurationError("fields do not match the grid")
        return grid.interior_mask
    mask = np.ones(shape, bool)
    for f in fields:
        mask &= np.isfinite(f)
    return mask


def check_ordering(z, u, h, tol: float, grid: GridDomain | None = None) -> CheckReport:
    """``z <= u <= h`` at interior nodes."""
    z, u, h = (np.asarray(a, float) for a in (z, u, h))
    mask = _interior(grid, z, u, h)
    slack = np.minimum(u - z, h - u)
    slack = np.where(mask, slack, np.inf)
    i = int(np.argmin(slack))
    margin = float(slack.reshape(-1)[i])
    return CheckReport(
        "ordering",
        margin >= -tol,
        margin,
        _locus(grid, i),
        {"tol": tol, "max(z-u)": float(np.max((z - u)[mask])), "max(u-h)": float(np.max((u - h)[mask]))},
    )


def check_oscillation(grid: GridDomain, u: np.ndarray, eps: float, payoff: np.ndarray, tol: float) -> CheckReport:
    """``sup - inf`` over every eps-ball is at most ``4 max(Lip F, 1) eps``."""
    bound = 4 * max(payoff_lipschitz(grid, payoff), 1.0) * eps
    osc = oscillation(grid, u, eps)
    slack = np.where(grid.interior_mask, bound - osc, np.inf)
    i = int(np.argmin(slack))
    margin = float(slack.reshape(-1)[i])
    return CheckReport(
        "oscillation",
        margin >= -tol,
        margin,
        _locus(grid, i),
        {"bound": bound, "max_oscillation": float(np.nanmax(osc)), "tol": tol},
    )


def check_monotone_in_D(
    grid: GridDomain,
    spec: GameSpec,
    d_small: np.ndarray,
    d_large: np.ndarray,
    tol: float,
    solve_tol: float | None = None,
) -> CheckReport:
    """A larger constraint set gives a pointwise smaller D-game value."""
    d_small = np.asarray(d_small, bool)
    d_large = np.asarray(d_large, bool)
    if np.any(d_small & ~d_large):
        raise ConfigurationError("d_large must contain d_small")
    spec = dataclasses.replace(spec, variant=Variant.D_GAME)
    u_small, r1 = dpp_solve(grid.with_masks(d=d_small), spec, tol=solve_tol)
    u_large, r2 = dpp_solve(grid.with_masks(d=d_large), spec, tol=solve_tol)
    slack = np.where(grid.interior_mask, u_small - u_large, np.inf)
    i = int(np.argmin(slack))
    margin = float(slack.reshape(-1)[i])
    rep = CheckReport(
        "monotone_in_D",
        margin >= -tol,
        margin,
        _locus(grid, i),
        {"tol": tol, "solve_small": r1.as_dict(), "solve_large": r2.as_dict()},
    )
    if not (r1.converged and r2.converged):
        rep.status = "inconclusive"
        rep.passed = False
    return rep


def check_patch_equals_jensen(
    grid: GridDomain,
    payoff: np.ndarray,
    eps: float,
    tol: float,
    game_eps: float | None = None,
    solve_tol: float | None = None,
    stencil_radius: float | None = None,
) -> CheckReport:
    """Patched harmonic solution against the Omega-game value with sell price ``eps * game_eps``.

    ``game_eps`` is the step of both discrete games (default: the spacing).
    """
    if eps < grid.spacing * (1 - 1e-9):
        raise ConfigurationError("eps must be at least the grid spacing")
    step = grid.spacing if game_eps is None else game_eps
    h, rh = solve_infinity_harmonic(grid, payoff, tol=solve_tol, eps=step)
    h_eps, dec = patched_solution(grid, payoff, eps, h=h, stencil_radius=stencil_radius)
    z, rz = dpp_solve(grid, GameSpec(Variant.OMEGA_GAME, step, payoff, price=eps * step), tol=solve_tol)
    diff = np.where(grid.interior_mask, np.abs(h_eps - z), -np.inf)
    i = int(np.argmax(diff))
    worst = float(diff.reshape(-1)[i])
    rep = CheckReport(
        "patch_equals_jensen",
        worst <= tol,
        tol - worst,
        _locus(grid, i),
        {
            "eps": eps,
            "game_eps": step,
            "max_abs_diff": worst,
            "tol": tol,
            "components": len(dec.components),
            "ambiguous_nodes": dec.n_ambiguous,
            "harmonic": rh.as_dict(),
            "jensen": rz.as_dict(),
        },
    )
    if not (rh.converged and rz.converged):
        rep.status = "inconclusive"
        rep.passed = False
    rep.details["fields"] = {"h": h, "h_eps": h_eps, "z_eps": z}
    return rep


def check_lip_bound(grid: GridDomain, u_inf: np.ndarray, lip_f: float, tol: float) -> CheckReport:
    bound = max(1.0, lip_f)
    g = sup_norm_gradient(grid, u_inf)
    margin = bound - g
    return CheckReport("lip_bound", margin >= -tol, margin, None, {"sup_norm_gradient": g, "bound": bound, "tol": tol})


def _support(spec: VariationalSpec, grid: GridDomain):
    g = np.nan_to_num(np.asarray(spec.g_weights, float))
    return (g > 0) & grid.interior_mask


def check_support_dependence(
    grid: GridDomain,
    spec1: VariationalSpec,
    spec2: VariationalSpec,
    tol: float,
    fields: tuple | None = None,
) -> CheckReport:
    """Specs whose g-weights share a support give the same p→∞ estimate.

    ``fields`` may carry precomputed continuation outputs for the two specs.
    """
    if not np.array_equal(_support(spec1, grid), _support(spec2, grid)):
        raise ConfigurationError("g-weights have different supports")
    d1 = np.asarray(spec1.dirichlet, float)[grid.strip_mask]
    d2 = np.asarray(spec2.dirichlet, float)[grid.strip_mask]
    if not np.array_equal(d1, d2):
        raise ConfigurationError("Dirichlet data differ")
    details = {"tol": tol}
    if fields is None:
        u1, r1 = p_continuation(grid, spec1)
        u2, r2 = p_continuation(grid, spec2)
        details.update(run1=r1.as_dict(), run2=r2.as_dict())
        ok = r1.converged and r2.converged
    else:
        u1, u2 = fields
        ok = True
    diff = np.where(grid.interior_mask, np.abs(u1 - u2), -np.inf)
    i = int(np.argmax(diff))
    worst = float(diff.reshape(-1)[i])
    details["max_abs_diff"] = worst
    rep = CheckReport("support_dependence", worst <= tol, tol - worst, _locus(grid, i), details)
    if not ok:
        rep.status = "inconclusive"
        rep.passed = False
    return rep


def check_minimal_vs_variational(
    problem: ExampleProblem,
    tol: float,
    grid: GridDomain | None = None,
    game_field: np.ndarray | None = None,
    variational_field: np.ndarray | None = None,
    solve_tol: float | None = None,
) -> CheckReport:
    """Compare the D-game value and the p→∞ estimate with what the problem predicts.

    ``expected_relation``: ``all`` -- both match the exact field within
    ``tol``; ``minimal`` -- the game value matches the minimal solution at the
    origin (within [-1.1, -0.8]) while the variational field is identically
    zero; ``relations`` -- no exact field, the maximal and pinned solutions
    must differ at the marked point by more than two spacings.
    """
    grid = problem.build_grid() if grid is None else grid
    details: dict = {"problem": problem.name, "relation": problem.expected_relation, "tol": tol}
    if game_field is None:
        game_field, rep = dpp_solve(grid, problem.game_spec(grid), tol=solve_tol)
        details["game_solve"] = rep.as_dict()
    interior = grid.interior_mask

    if problem.expected_relation == "relations":
        return _twopatch_relations(problem, grid, game_field, details, solve_tol)

    if variational_field is None:
        variational_field, rep = p_continuation(grid, problem.variational_spec(grid))
        details["variational_solve"] = rep.as_dict()

    exact = problem.exact(grid)
    game_err = float(np.max(np.abs(game_field - exact)[interior]))
    details["game_max_error"] = game_err
    vexact = problem.exact_variational(grid)
    var_err = float(np.max(np.abs(variational_field - vexact)[interior]))
    details["variational_max_error"] = var_err

    if problem.expected_relation == "minimal":
        origin = np.unravel_index(grid.nearest_node(np.zeros(grid.dim)), grid.shape)
        g0 = float(game_field[origin])
        v0 = float(variational_field[origin])
        details.update(game_origin=g0, variational_origin=v0)
        margins = [g0 + 1.1, -0.8 - g0, -var_err]
        margin = float(min(margins))
        passed = -1.1 <= g0 <= -0.8 and var_err == 0.0
        return CheckReport("minimal_vs_variational", passed, margin, [float(c) for c in grid.node_coords(grid.nearest_node(np.zeros(grid.dim)))], details)

    margin = tol - max(game_err, var_err)
    return CheckReport("minimal_vs_variational", margin >= 0, margin, None, details)


def _twopatch_relations(problem, grid, minimal, details, solve_tol):
    x0 = problem.extra["x0"]
    node = grid.nearest_node(x0)
    at = np.unravel_index(node, grid.shape)
    payoff = problem.payoff(grid)
    spec = problem.game_spec(grid)
    max_mask = maximal_d_mask(grid)
    maximal, rmax = dpp_solve(grid.with_masks(d=max_mask), spec, tol=solve_tol)
    # pinned solution: -dist(., boundary) on closure(D0) ∪ {x0}, harmonic elsewhere
    pins = max_mask.copy()
    pins[at] = True
    pinned = v_alpha(grid, payoff, 1.0, pins, tol=solve_tol)
    gap = abs(float(maximal[at]) - float(pinned[at]))
    noise = 2 * grid.spacing
    details.update(
        x0=list(x0),
        maximal_x0=float(maximal[at]),
        pinned_x0=float(pinned[at]),
        minimal_x0=float(minimal[at]),
        gap=gap,
        noise=noise,
        maximal_solve=rmax.as_dict(),
    )
    order = float(np.min((maximal - minimal)[grid.interior_mask]))
    # both fields come from bracketed solves, each accurate to ~10 * tol
    order_tol = 20 * (solve_tol if solve_tol is not None else default_tol(payoff, grid))
    details.update({"min(maximal-minimal)": order, "order_tol": order_tol})
    margin = min(gap - noise, order + order_tol)
    return CheckReport("minimal_vs_variational", margin >= 0, margin, list(x0), details)


def dilated_d(grid: GridDomain, r: float | None = None) -> np.ndarray:
    """D grown by ``r`` (default two spacings) inside the domain."""
    return dilate_mask(grid, grid.d_mask, 2 * grid.spacing if r is None else r)
