"""Discrete p-Laplace energy, its minimization, and continuation in p.

The energy of a nodal field ``u`` is

    F_p(u) = sum_cells |Du_cell|^p / p * vol + sum_interior g * u * vol

with ``Du_cell`` the forward differences along each axis from the cell's
anchor node (the node itself in 1D, the lower-left corner in 2D). A cell is
used when its anchor and forward neighbours are all active and at least one
of them is interior.
"""

from __future__ import annotations

import functools
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .dpp import SolveReport
from .grid import ConfigurationError, GridDomain

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (4, 8, 16, 32, 64, 128)
# exp() argument cap for |q|^(p-2) and |q|^p
_LOG_CAP = 700.0


@dataclass(frozen=True, eq=False)
class VariationalSpec:
    g_weights: np.ndarray
    dirichlet: np.ndarray
    p_schedule: tuple = DEFAULT_SCHEDULE
    inner_tol: float = 1e-10

    def __post_init__(self):
        g = np.asarray(self.g_weights, float)
        if np.any(g[np.isfinite(g)] < 0):
            raise ConfigurationError("g_weights must be nonnegative")
        ps = list(self.p_schedule)
        if not ps:
            raise ConfigurationError("p_schedule must be nonempty")
        if ps[0] <= 2 or any(b <= a for a, b in zip(ps, ps[1:])):
            raise ConfigurationError("p_schedule must be strictly increasing with first entry > 2")


class CellOps:
    """Forward-difference operators on the cells of a grid."""

    def __init__(self, grid: GridDomain):
        self.grid = grid
        self.vol = grid.spacing ** grid.dim
        active = grid.active_mask
        interior = grid.interior_mask
        shape = np.array(grid.shape)
        anchors = np.argwhere(active)
        ok = np.ones(len(anchors), bool)
        touches = interior[tuple(anchors.T)].copy()
        nbrs = []
        for k in range(grid.dim):
            e = np.zeros(grid.dim, int)
            e[k] = 1
            nb = anchors + e
            inside = np.all(nb < shape, axis=1)
            nb_c = np.minimum(nb, shape - 1)
            ok &= inside & active[tuple(nb_c.T)]
            touches |= inside & interior[tuple(nb_c.T)]
            nbrs.append(nb_c)
        ok &= touches
        a_flat = np.ravel_multi_index(tuple(anchors[ok].T), grid.shape)
        self.anchor = a_flat
        n_cells = len(a_flat)
        rows = np.arange(n_cells)
        self.diff = []
        for nb in nbrs:
            b_flat = np.ravel_multi_index(tuple(nb[ok].T), grid.shape)
            mat = sparse.csr_matrix(
                (
                    np.concatenate([np.full(n_cells, 1.0), np.full(n_cells, -1.0)]) / grid.spacing,
                    (np.concatenate([rows, rows]), np.concatenate([b_flat, a_flat])),
                ),
                shape=(n_cells, grid.size),
            )
            self.diff.append(mat)
        self.unknowns = np.flatnonzero(interior.reshape(-1))
        self.diff_unknown = [d[:, self.unknowns].tocsc() for d in self.diff]

    def gradients(self, u: np.ndarray) -> np.ndarray:
        """Per-cell forward-difference gradient, shape ``(n_cells, dim)``."""
        flat = np.where(self.grid.active_mask, u, 0.0).reshape(-1)
        return np.stack([d @ flat for d in self.diff], axis=1)


@functools.lru_cache(maxsize=8)
def cell_ops(grid: GridDomain) -> CellOps:
    return CellOps(grid)


def _check_p(p):
    if not p >= 2:
        raise ConfigurationError(f"exponent p={p} outside supported range p >= 2")


def _powers(q: np.ndarray, p: float):
    """``|q|^p / p`` and ``|q|^(p-2)`` per cell, computed in log form with clamping."""
    mag = np.linalg.norm(q, axis=1)
    with np.errstate(divide="ignore"):
        logm = np.log(mag)
    energy = np.where(mag > 0, np.exp(np.minimum(p * logm, _LOG_CAP)), 0.0) / p
    if p == 2:
        weight = np.ones_like(mag)
    else:
        weight = np.where(mag > 0, np.exp(np.minimum((p - 2) * logm, _LOG_CAP)), 0.0)
    return mag, energy, weight


def _g_field(grid, spec):
    g = np.asarray(spec.g_weights, float)
    return np.where(grid.interior_mask, np.nan_to_num(g), 0.0)


def functional_value(grid: GridDomain, p: float, spec: VariationalSpec, u: np.ndarray) -> float:
    """Discrete energy ``sum |Du|^p/p vol + sum g u vol``."""
    _check_p(p)
    ops = cell_ops(grid)
    _, energy, _ = _powers(ops.gradients(u), p)
    g = _g_field(grid, spec)
    lin = np.sum(g[grid.interior_mask] * np.asarray(u, float)[grid.interior_mask])
    return float((energy.sum() + lin) * ops.vol)


def functional_gradient(grid: GridDomain, p: float, spec: VariationalSpec, u: np.ndarray) -> np.ndarray:
    """Partial derivatives of :func:`functional_value` in the interior node values; zero elsewhere."""
    _check_p(p)
    ops = cell_ops(grid)
    q = ops.gradients(u)
    _, _, w = _powers(q, p)
    flux = w[:, None] * q
    full = sum(d.T @ flux[:, k] for k, d in enumerate(ops.diff))
    g = _g_field(grid, spec).reshape(-1)
    out = np.zeros(grid.size)
    out[ops.unknowns] = (full[ops.unknowns] + g[ops.unknowns]) * ops.vol
    return out.reshape(grid.shape)


def _hessian(ops: CellOps, q: np.ndarray, p: float, reg: float):
    mag, _, w = _powers(q, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        w4 = np.where(mag > 0, w / mag**2, 0.0) * (p - 2)
    dim = q.shape[1]
    h = None
    for k in range(dim):
        for l in range(dim):
            coef = w4 * q[:, k] * q[:, l]
            if k == l:
                coef = coef + w + reg
            term = ops.diff_unknown[k].T @ sparse.diags(coef) @ ops.diff_unknown[l]
            h = term if h is None else h + term
    return (h * ops.vol).tocsc()


def minimize_p(
    grid: GridDomain,
    p: float,
    spec: VariationalSpec,
    init: np.ndarray,
    tol: float | None = None,
    max_iter: int = 500,
) -> tuple[np.ndarray, SolveReport]:
    """Minimize the discrete energy over fields with the prescribed strip values.

    Search directions come from a regularized Newton system (the energy
    Hessian plus a small multiple of the cell Laplacian, which keeps it
    positive definite where ``Du`` vanishes) and are accepted through Armijo
    backtracking. Stops when the max-norm of the gradient is ``<= tol``, or
    when the Newton decrement ``-grad·d / 2`` (the predicted remaining energy
    decrease) falls below rounding level ``1e-14 (1 + |F|)``.
    """
    _check_p(p)
    tol = spec.inner_tol if tol is None else tol
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    t0 = time.perf_counter()
    ops = cell_ops(grid)
    u = np.array(init, float, copy=True)
    dirichlet = np.asarray(spec.dirichlet, float)
    u[grid.strip_mask] = dirichlet[grid.strip_mask]
    u[grid.dead_mask] = np.nan
    idx = ops.unknowns

    f = functional_value(grid, p, spec, u)
    f0 = f
    grad = functional_gradient(grid, p, spec, u).reshape(-1)[idx]
    gnorm = float(np.max(np.abs(grad))) if len(grad) else 0.0
    it = 0
    n_backtracks = 0
    status = "converged"
    decrement_stop = False
    while gnorm > tol and it < max_iter:
        it += 1
        q = ops.gradients(u)
        _, _, w = _powers(q, p)
        reg = 1e-8 * max(float(w.max()), 1.0)
        try:
            hess = _hessian(ops, q, p, reg)
            d = -splinalg.spsolve(hess, grad)
        except (RuntimeError, ValueError):
            d = -grad
        slope = float(grad @ d)
        if not np.isfinite(slope) or slope >= 0:
            d = -grad
            slope = float(grad @ d)
        elif -0.5 * slope <= 1e-14 * (1.0 + abs(f)):
            decrement_stop = True
            break
        t = 1.0
        flat = u.reshape(-1)
        accepted = False
        for _ in range(80):
            trial = flat.copy()
            trial[idx] = flat[idx] + t * d
            trial = trial.reshape(grid.shape)
            f_trial = functional_value(grid, p, spec, trial)
            if np.isfinite(f_trial) and f_trial <= f + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
            n_backtracks += 1
        if not accepted:
            status = "line search failed"
            break
        u, f = trial, f_trial
        grad = functional_gradient(grid, p, spec, u).reshape(-1)[idx]
        gnorm = float(np.max(np.abs(grad)))
    converged = gnorm <= tol or decrement_stop
    if decrement_stop:
        status = "converged (Newton decrement)"
    if not converged and status == "converged":
        status = "max_iter reached"
    report = SolveReport(
        iterations=it,
        residual=gnorm,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        details={"p": p, "status": status, "energy": f, "initial_energy": f0, "backtracks": n_backtracks},
    )
    if not converged:
        logger.warning("minimize_p(p=%g): %s, gradient norm %.3g", p, status, gnorm)
    return u, report


def p_continuation(
    grid: GridDomain,
    spec: VariationalSpec,
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Warm-started minimization along ``spec.p_schedule``; the last field estimates the p→∞ limit."""
    t0 = time.perf_counter()
    if init is None:
        init = np.where(grid.interior_mask, 0.0, np.nan)
    u = np.array(init, float)
    stages = []
    total = 0
    rep = None
    for p in spec.p_schedule:
        u, rep = minimize_p(grid, p, spec, u)
        total += rep.iterations
        stages.append(rep.as_dict())
        if not rep.converged:
            break
    converged = all(s["converged"] for s in stages) and len(stages) == len(spec.p_schedule)
    report = SolveReport(
        iterations=total,
        residual=rep.residual,
        converged=converged,
        wall_time=time.perf_counter() - t0,
        details={"stages": stages},
    )
    return u, report


def sup_norm_gradient(grid: GridDomain, u: np.ndarray) -> float:
    """Largest forward-difference gradient magnitude over cells."""
    q = cell_ops(grid).gradients(u)
    return float(np.max(np.linalg.norm(q, axis=1))) if len(q) else 0.0
