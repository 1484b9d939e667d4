"""Infinity-harmonic extension, small-gradient region and the geodesically patched solution."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .dpp import GameSpec, SolveReport, Variant, dpp_solve
from .grid import ConfigurationError, GridDomain, ball_offsets, geodesic_distance

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class RegionDecomposition:
    lip_field: np.ndarray
    v_eps_mask: np.ndarray
    components: list
    a_mask: np.ndarray
    b_mask: np.ndarray
    eps: float
    n_ambiguous: int = 0


def solve_infinity_harmonic(
    grid: GridDomain,
    payoff: np.ndarray,
    tol: float | None = None,
    eps: float | None = None,
    max_iter: int = 10**6,
) -> tuple[np.ndarray, SolveReport]:
    """Tug-of-war value, i.e. the discrete infinity-harmonic extension of the payoff."""
    eps = grid.strip_width if eps is None else eps
    spec = GameSpec(Variant.TUG_OF_WAR, eps, payoff)
    return dpp_solve(grid, spec, tol=tol, max_iter=max_iter)


def pointwise_lipschitz(grid: GridDomain, u: np.ndarray, radius: float | None = None) -> np.ndarray:
    """Finite-radius Lipschitz quotient ``max |u(y) - u(x)| / |y - x|`` over the ball."""
    if radius is None:
        radius = 2 * grid.spacing
    if radius < grid.spacing * (1 - 1e-9):
        raise ConfigurationError("Lipschitz radius must be at least the grid spacing")
    u = np.asarray(u, float)
    active = grid.active_mask
    out = np.zeros(grid.shape)
    n = np.array(grid.shape)
    idx = np.argwhere(grid.interior_mask)
    best = np.zeros(len(idx))
    for k in ball_offsets(grid.dim, grid.spacing, radius):
        if not np.any(k):
            continue
        nb = idx + k
        inside = np.all((nb >= 0) & (nb < n), axis=1)
        ok = np.zeros(len(idx), bool)
        ok[inside] = active[tuple(nb[inside].T)]
        q = np.abs(u[tuple(nb[ok].T)] - u[tuple(idx[ok].T)]) / (np.linalg.norm(k) * grid.spacing)
        best[ok] = np.maximum(best[ok], q)
    out[grid.interior_mask] = best
    return out


def decompose(grid: GridDomain, lip_field: np.ndarray, eps: float) -> RegionDecomposition:
    """Split the domain by the size of the pointwise Lipschitz field.

    ``V_eps = {lip < eps}`` (strict), cut into connected components over the
    axis+diagonal graph; ``A = {lip < 1}`` and ``B = A ∩ D``.
    """
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    lip = np.asarray(lip_field, float)
    interior = grid.interior_mask
    v = interior & (lip < eps)
    structure = ndimage.generate_binary_structure(grid.dim, grid.dim)
    labels, n = ndimage.label(v, structure=structure)
    components = [np.flatnonzero(labels.reshape(-1) == i) for i in range(1, n + 1)]
    a = interior & (lip < 1.0)
    ambiguous = int(np.sum(interior & np.isclose(lip, eps, rtol=0, atol=1e-12)))
    if ambiguous:
        logger.info("decompose: %d nodes have Lipschitz quotient equal to eps", ambiguous)
    return RegionDecomposition(
        lip_field=lip,
        v_eps_mask=v,
        components=components,
        a_mask=a,
        b_mask=a & grid.d_mask,
        eps=eps,
        n_ambiguous=ambiguous,
    )


def component_boundary(grid: GridDomain, comp_mask: np.ndarray) -> np.ndarray:
    """Active nodes adjacent (axis or diagonal) to the component but not in it."""
    structure = ndimage.generate_binary_structure(grid.dim, grid.dim)
    grown = ndimage.binary_dilation(comp_mask, structure=structure)
    return grown & ~comp_mask & grid.active_mask


def patch(
    grid: GridDomain,
    h: np.ndarray,
    dec: RegionDecomposition,
    eps: float,
    stencil_radius: float | None = None,
) -> np.ndarray:
    """Replace ``h`` on each component ``U`` of ``V_eps`` by ``sup_{y in ∂U} (h(y) - eps d_U(x, y))``."""
    if not np.isclose(dec.eps, eps):
        raise ConfigurationError(f"decomposition built for eps={dec.eps}, patch called with eps={eps}")
    h = np.asarray(h, float)
    out = h.copy()
    flat_h = h.reshape(-1)
    for comp in dec.components:
        comp_mask = np.zeros(grid.size, bool)
        comp_mask[comp] = True
        comp_mask = comp_mask.reshape(grid.shape)
        bdry = np.flatnonzero(component_boundary(grid, comp_mask))
        if len(bdry) == 0:
            raise ConfigurationError("component of V_eps has empty boundary")
        sources = [(int(y), -flat_h[y] / eps) for y in bdry]
        d = geodesic_distance(grid, comp_mask, sources, stencil_radius=stencil_radius)
        out[comp_mask] = -eps * d[comp_mask]
    return out


def patched_solution(
    grid: GridDomain,
    payoff: np.ndarray,
    eps: float,
    h: np.ndarray | None = None,
    tol: float | None = None,
    lip_radius: float | None = None,
    stencil_radius: float | None = None,
) -> tuple[np.ndarray, RegionDecomposition]:
    """Full pipeline: harmonic solve (unless ``h`` is given), decomposition, patch."""
    if h is None:
        h, _ = solve_infinity_harmonic(grid, payoff, tol=tol)
    lip = pointwise_lipschitz(grid, h, lip_radius)
    dec = decompose(grid, lip, eps)
    return patch(grid, h, dec, eps, stencil_radius=stencil_radius), dec
