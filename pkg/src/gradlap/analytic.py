"""Closed-form fields and the catalog of worked test problems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .dpp import GameSpec, Variant, cone_envelope, dpp_solve, payoff_lipschitz
from .grid import (
    ConfigurationError,
    Disk,
    GridDomain,
    Points,
    Rectangle,
    Segment,
    Union_,
    build_grid,
    interior_closure_mask,
)
from .variational import DEFAULT_SCHEDULE, VariationalSpec


def cone(grid: GridDomain, apex, slope: float, offset: float = 0.0) -> np.ndarray:
    """``offset - slope * |x - apex|`` at every node."""
    if slope < 0:
        raise ConfigurationError("cone slope must be nonnegative")
    apex = np.atleast_1d(np.asarray(apex, float))
    return offset - slope * np.linalg.norm(grid.coords - apex, axis=-1)


def dist_to_boundary(grid: GridDomain) -> np.ndarray:
    """Distance from each interior node to the nearest strip node.

    Strip nodes sit on or outside the boundary, so this approximates the
    distance to the boundary from above, to within one spacing.
    """
    d = ndimage.distance_transform_edt(~grid.strip_mask) * grid.spacing
    return np.where(grid.interior_mask, d, np.nan)


def v_alpha(
    grid: GridDomain,
    payoff: np.ndarray,
    alpha: float,
    d_closure: np.ndarray,
    tol: float | None = None,
    eps: float | None = None,
) -> np.ndarray:
    """Cone envelope of slope ``alpha`` pinned on ``d_closure``, tug-of-war extension elsewhere."""
    lip = payoff_lipschitz(grid, payoff)
    if not (lip - 1e-12 <= alpha <= 1 + 1e-12):
        warnings.warn(
            f"alpha={alpha} outside [Lip(payoff)={lip:.4g}, 1]; the field is still computed",
            stacklevel=2,
        )
    d_closure = np.asarray(d_closure, bool) & grid.interior_mask
    env = cone_envelope(grid, payoff, max(alpha, 0.0), "lower")
    pinned = grid.with_masks(
        interior=grid.interior_mask & ~d_closure,
        strip=grid.strip_mask | d_closure,
        d=np.zeros(grid.shape, bool),
    )
    data = np.where(grid.strip_mask, payoff, np.nan)
    data = np.where(d_closure, env, data)
    if not pinned.interior_mask.any():
        out = data.copy()
        return out
    eps = grid.strip_width if eps is None else eps
    u, _ = dpp_solve(pinned, GameSpec(Variant.TUG_OF_WAR, eps, data), tol=tol)
    return u


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


@dataclass
class ExampleProblem:
    """A named test problem: geometry, data, and known solutions where available.

    ``exact_solution`` is the closed form the game (minimal) solution is
    compared against; ``variational_exact`` the p→∞ limit when it differs.
    """

    name: str
    domain: object
    d_shape: object
    spacing: float
    eps: float
    payoff_fn: Callable[[np.ndarray], np.ndarray]
    g_fn: Callable[[GridDomain], np.ndarray]
    exact_solution: Callable[[np.ndarray], np.ndarray] | None
    variational_exact: Callable[[np.ndarray], np.ndarray] | None
    expected_relation: str
    description: str = ""
    extra: dict = field(default_factory=dict)
    sphere_samples: int = 0
    strip_fill: str = "extend"

    def build_grid(self, spacing: float | None = None, eps: float | None = None) -> GridDomain:
        s = self.spacing if spacing is None else spacing
        e = self.eps if eps is None else eps
        return build_grid(self.domain, s, e, self.d_shape)

    def payoff(self, grid: GridDomain, fill: str | None = None) -> np.ndarray:
        """Payoff on the strip.

        ``fill="extend"`` evaluates the boundary function at the strip node
        itself (it is defined on the whole plane); ``fill="nearest"``
        evaluates it at the nearest boundary point of the domain.  ``None``
        uses :attr:`strip_fill`.
        """
        fill = self.strip_fill if fill is None else fill
        if fill == "extend":
            pts = grid.coords
        elif fill == "nearest":
            if not hasattr(self.domain, "project_boundary"):
                raise ConfigurationError(f"domain {self.domain!r} has no boundary projection")
            pts = self.domain.project_boundary(grid.coords)
        else:
            raise ConfigurationError(f"fill must be 'extend' or 'nearest', got {fill!r}")
        return np.where(grid.strip_mask, self.payoff_fn(pts), np.nan)

    def game_spec(self, grid: GridDomain, variant: Variant = Variant.D_GAME, eps: float | None = None) -> GameSpec:
        e = self.eps if eps is None else eps
        return GameSpec(variant, e, self.payoff(grid), sphere_samples=self.sphere_samples)

    def variational_spec(self, grid: GridDomain, scale: float = 1.0, p_schedule=DEFAULT_SCHEDULE) -> VariationalSpec:
        g = np.where(grid.interior_mask, scale * self.g_fn(grid), 0.0)
        return VariationalSpec(g_weights=g, dirichlet=self.payoff(grid), p_schedule=tuple(p_schedule))

    def exact(self, grid: GridDomain) -> np.ndarray | None:
        if self.exact_solution is None:
            return None
        return self.exact_solution(grid.coords)

    def exact_variational(self, grid: GridDomain) -> np.ndarray | None:
        fn = self.variational_exact or self.exact_solution
        return None if fn is None else fn(grid.coords)


def _radius(c):
    return np.linalg.norm(c, axis=-1)


def _zero(c):
    return np.zeros(c.shape[:-1])


def _d_indicator(grid):
    return grid.d_mask.astype(float)


def _no_g(grid):
    return np.zeros(grid.shape)


def _catalog() -> dict:
    x0 = (0.75, 0.75)
    return {
        "disk2_annulusD": ExampleProblem(
            name="disk2_annulusD",
            domain=Disk((0.0, 0.0), 2.0),
            d_shape=Disk((0.0, 0.0), 1.0),
            spacing=0.025,
            eps=0.1,
            payoff_fn=_zero,
            g_fn=_d_indicator,
            exact_solution=lambda c: _radius(c) - 2.0,
            variational_exact=None,
            expected_relation="all",
            description="Omega=B_2, D=B_1, f=0; unique solution |x|-2",
            # the lattice ball reaches less than eps off the axes, which
            # biases the selling branch by ~8% per step at eps = 4 spacings
            sphere_samples=32,
        ),
        "ball1_pointD": ExampleProblem(
            name="ball1_pointD",
            domain=Disk((0.0, 0.0), 1.0),
            d_shape=Points(((0.0, 0.0),)),
            spacing=0.025,
            eps=0.1,
            payoff_fn=_zero,
            g_fn=_no_g,
            exact_solution=lambda c: _radius(c) - 1.0,
            variational_exact=_zero,
            expected_relation="minimal",
            description="Omega=B_1, D={0}, f=0; minimal |x|-1, variational (maximal) 0",
        ),
        "segment_jensen": ExampleProblem(
            name="segment_jensen",
            domain=Segment(-1.0, 1.0),
            d_shape="all",
            spacing=0.05,
            eps=0.1,
            payoff_fn=_zero,
            g_fn=_d_indicator,
            exact_solution=lambda c: np.abs(c[..., 0]) - 1.0,
            variational_exact=None,
            expected_relation="all",
            description="Omega=(-1,1), D=Omega, f=0; Jensen solution |x|-1",
        ),
        "square_twopatch": ExampleProblem(
            name="square_twopatch",
            domain=Rectangle((-1.0, -1.0), (1.0, 1.0)),
            d_shape=Union_((Disk((0.0, 0.0), 0.5), Points((x0,)))),
            spacing=0.05,
            eps=0.1,
            payoff_fn=_zero,
            g_fn=_d_indicator,
            exact_solution=None,
            variational_exact=None,
            expected_relation="relations",
            description="Omega=(-1,1)^2, D=B_1/2 ∪ {x0}; maximal and pinned solutions differ at x0",
            extra={"x0": x0},
        ),
    }


CATALOG = _catalog()


def example_library(name: str) -> ExampleProblem:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown example {name!r}; catalog: {sorted(CATALOG)}") from None


def maximal_d_mask(grid: GridDomain) -> np.ndarray:
    """Constraint mask whose game value approximates the maximal solution."""
    return interior_closure_mask(grid, grid.d_mask)
