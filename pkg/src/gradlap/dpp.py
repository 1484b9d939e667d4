"""Dynamic programming operators of the turn-selling tug-of-war games and their fixed points."""

from __future__ import annotations

import enum
import functools
import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse

from .grid import ConfigurationError, GridDomain, ball_footprint

logger = logging.getLogger(__name__)


class Variant(enum.Enum):
    TUG_OF_WAR = "tug-of-war"
    D_GAME = "d-game"
    OMEGA_GAME = "omega-game"


@dataclass(frozen=True, eq=False)
class GameSpec:
    """Game variant, step ``eps`` and payoff values on the strip.

    ``price`` is what Player II pays for selling a turn; it defaults to
    ``eps``. Scaling it (``price = slope * eps``) targets the gradient bound
    ``slope`` instead of 1.

    ``sphere_samples`` > 0 completes the lattice ball with that many
    interpolated points on its bounding sphere (see :class:`BallOperator`).
    The default 0 is the plain lattice ball.
    """

    variant: Variant
    eps: float
    payoff: np.ndarray
    price: float | None = None
    sphere_samples: int = 0

    @property
    def sell_price(self) -> float:
        return self.eps if self.price is None else self.price


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    lower_upper_gap: float = float("nan")
    wall_time: float = 0.0
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "lower_upper_gap": self.lower_upper_gap,
            "wall_time": self.wall_time,
            **self.details,
        }


def _check_spec(grid: GridDomain, spec: GameSpec):
    if spec.eps < grid.spacing * (1 - 1e-9):
        raise ConfigurationError(f"game step {spec.eps} below grid spacing {grid.spacing}")
    if spec.eps > grid.strip_width * (1 + 1e-9):
        raise ConfigurationError(
            f"game step {spec.eps} exceeds strip width {grid.strip_width}; balls would leave the strip"
        )
    pay = np.asarray(spec.payoff, float)
    if pay.shape != grid.shape:
        raise ConfigurationError("payoff must be a field on the grid")
    if not np.all(np.isfinite(pay[grid.strip_mask])):
        raise ConfigurationError("payoff must be finite on every strip node")
    if spec.sphere_samples < 0:
        raise ConfigurationError("sphere_samples must be nonnegative")


class BallOperator:
    """Sup and inf of a field over closed balls of fixed radius around interior nodes.

    The ball always contains the lattice nodes within ``radius``. With
    ``samples > 0`` it is completed by points on the bounding sphere (two
    endpoints in 1D, ``samples`` equally spaced angles in 2D) evaluated by
    multilinear interpolation; interpolation weights are nonnegative, so the
    operator stays monotone and nonexpansive. Sphere points whose cell touches
    a dead node are replaced by the center.
    """

    def __init__(self, grid: GridDomain, radius: float, samples: int = 0):
        self.grid = grid
        self.radius = radius
        self.footprint = ball_footprint(grid.dim, grid.spacing, radius)
        self.interp = None
        if samples:
            self.interp = self._build_interp(samples)

    def _directions(self, samples):
        if self.grid.dim == 1:
            return np.array([[-1.0], [1.0]])
        th = 2 * np.pi * np.arange(samples) / samples
        return np.stack([np.cos(th), np.sin(th)], axis=1)

    def _build_interp(self, samples):
        g = self.grid
        dirs = self._directions(samples)
        centers = np.argwhere(g.interior_mask)
        center_flat = np.ravel_multi_index(tuple(centers.T), g.shape)
        n, m, dim = len(centers), len(dirs), g.dim
        pts = centers[:, None, :] + dirs[None, :, :] * (self.radius / g.spacing)
        pts = pts.reshape(-1, dim)
        base = np.floor(pts + 1e-12).astype(int)
        frac = np.clip(pts - base, 0.0, 1.0)
        frac[frac < 1e-12] = 0.0
        rows, cols, vals = [], [], []
        ok = np.ones(len(pts), bool)
        corners = np.array(np.meshgrid(*[[0, 1]] * dim, indexing="ij")).reshape(dim, -1).T
        shape = np.array(g.shape)
        corner_idx, corner_w = [], []
        for c in corners:
            idx = base + c
            w = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1)
            inside = np.all((idx >= 0) & (idx < shape), axis=1)
            idx_c = np.clip(idx, 0, shape - 1)
            active = inside & g.active_mask[tuple(idx_c.T)]
            ok &= active | (w == 0)
            corner_idx.append(np.ravel_multi_index(tuple(idx_c.T), g.shape))
            corner_w.append(w)
        row_ids = np.arange(len(pts))
        fallback = np.repeat(center_flat, m)
        for idx, w in zip(corner_idx, corner_w):
            keep = ok & (w > 0)
            rows.append(row_ids[keep])
            cols.append(idx[keep])
            vals.append(w[keep])
        rows.append(row_ids[~ok])
        cols.append(fallback[~ok])
        vals.append(np.ones((~ok).sum()))
        mat = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n * m, g.size),
        )
        return mat, m

    def sup_inf(self, u: np.ndarray):
        g = self.grid
        dead = g.dead_mask
        hi = np.where(dead, -np.inf, u)
        lo = np.where(dead, np.inf, u)
        sup = ndimage.maximum_filter(hi, footprint=self.footprint, mode="constant", cval=-np.inf)
        inf = ndimage.minimum_filter(lo, footprint=self.footprint, mode="constant", cval=np.inf)
        if self.interp is not None:
            mat, m = self.interp
            s = (mat @ np.where(dead, 0.0, u).reshape(-1)).reshape(-1, m)
            interior = g.interior_mask
            sup[interior] = np.maximum(sup[interior], s.max(axis=1))
            inf[interior] = np.minimum(inf[interior], s.min(axis=1))
        return sup, inf


@functools.lru_cache(maxsize=16)
def ball_operator(grid: GridDomain, radius: float, samples: int = 0) -> BallOperator:
    return BallOperator(grid, radius, samples)


def _sup_inf(grid: GridDomain, u: np.ndarray, eps: float, samples: int = 0):
    return ball_operator(grid, float(eps), int(samples)).sup_inf(u)


def dpp_apply(grid: GridDomain, spec: GameSpec, u: np.ndarray) -> np.ndarray:
    """One application of the game operator.

    At interior nodes ``min(avg, sup - price * chi)`` with ``avg`` the
    midrange over the closed ``eps``-ball; chi is the D indicator for the
    D-game, 1 for the Omega-game, and the selling branch is absent for plain
    tug-of-war. Strip values are copied unchanged.
    """
    _check_spec(grid, spec)
    sup, inf = _sup_inf(grid, u, spec.eps, spec.sphere_samples)
    with np.errstate(invalid="ignore"):
        tu = 0.5 * sup + 0.5 * inf
    if spec.variant is Variant.OMEGA_GAME:
        tu = np.minimum(tu, sup - spec.sell_price)
    elif spec.variant is Variant.D_GAME:
        tu = np.where(grid.d_mask, np.minimum(tu, sup - spec.sell_price), tu)
    out = np.array(u, float, copy=True)
    out[grid.interior_mask] = tu[grid.interior_mask]
    return out


def residual(grid: GridDomain, spec: GameSpec, u: np.ndarray) -> float:
    """Max-norm of ``T u - u`` over interior nodes."""
    tu = dpp_apply(grid, spec, u)
    return float(np.max(np.abs(tu - u)[grid.interior_mask]))


def oscillation(grid: GridDomain, u: np.ndarray, radius: float, samples: int = 0) -> np.ndarray:
    """``sup - inf`` of ``u`` over the closed ball at each interior node (``nan`` elsewhere)."""
    sup, inf = _sup_inf(grid, u, radius, samples)
    out = np.full(grid.shape, np.nan)
    with np.errstate(invalid="ignore"):
        out[grid.interior_mask] = (sup - inf)[grid.interior_mask]
    return out


def payoff_lipschitz(grid: GridDomain, payoff: np.ndarray, chunk: int = 2048) -> float:
    """Lipschitz constant of the payoff over strip nodes (pairwise quotient)."""
    pts = grid.coords[grid.strip_mask]
    vals = np.asarray(payoff, float)[grid.strip_mask]
    if np.ptp(vals) == 0:
        return 0.0
    best = 0.0
    for s in range(0, len(pts), chunk):
        d = np.linalg.norm(pts[s:s + chunk, None, :] - pts[None, :, :], axis=-1)
        dv = np.abs(vals[s:s + chunk, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, dv / d, 0.0)
        best = max(best, float(q.max()))
    return best


def cone_envelope(
    grid: GridDomain,
    payoff: np.ndarray,
    slope: float,
    side: str = "lower",
    chunk: int = 4096,
) -> np.ndarray:
    """Cone envelope of the strip payoff.

    ``lower``: ``sup_y (F(y) - slope |x - y|)``; ``upper``:
    ``inf_y (F(y) + slope |x - y|)``, both over strip nodes ``y``.
    Evaluated on interior and strip nodes.
    """
    if slope < 0:
        raise ConfigurationError("cone slope must be nonnegative")
    if side not in ("lower", "upper"):
        raise ConfigurationError(f"side must be 'lower' or 'upper', got {side!r}")
    ys = grid.coords[grid.strip_mask]
    fy = np.asarray(payoff, float)[grid.strip_mask]
    active = grid.active_mask
    xs = grid.coords[active]
    vals = np.empty(len(xs))
    for s in range(0, len(xs), chunk):
        d = np.linalg.norm(xs[s:s + chunk, None, :] - ys[None, :, :], axis=-1)
        if side == "lower":
            vals[s:s + chunk] = np.max(fy[None, :] - slope * d, axis=1)
        else:
            vals[s:s + chunk] = np.min(fy[None, :] + slope * d, axis=1)
    out = grid.empty_field()
    out[active] = vals
    return out


def _iterate(grid, spec, u):
    tu = dpp_apply(grid, spec, u)
    res = float(np.max(np.abs(tu - u)[grid.interior_mask]))
    return tu, res


def default_tol(payoff: np.ndarray, grid: GridDomain) -> float:
    return 1e-9 * (1.0 + float(np.max(np.abs(np.asarray(payoff)[grid.strip_mask]))))


def _hop_count(grid: GridDomain, radius: float) -> np.ndarray:
    """Fewest ``radius``-ball steps from each active node to the strip."""
    footprint = ball_footprint(grid.dim, grid.spacing, radius)
    hops = np.where(grid.strip_mask, 0.0, np.inf)
    reached = grid.strip_mask.copy()
    k = 0
    while True:
        k += 1
        grown = ndimage.binary_dilation(reached, structure=footprint) & grid.active_mask
        new = grown & ~reached
        if not new.any():
            return hops
        hops[new] = k
        reached = grown


def _starting_bracket(grid, spec, payoff):
    """A sub- and a supersolution of the operator to start the bracket from.

    Cone envelopes of slope ``Lip F`` and ``max(1, Lip F, price/eps)`` are
    tight but need not pass the discrete test: next to the strip they behave
    like ``-s dist(x, strip)``, which is concave across the boundary.  Each
    candidate is therefore checked, with fallbacks that always pass on the
    lattice ball: the constant ``max F`` above, and below ``min F`` (tug-of-war)
    or ``min F - price * hops`` with ``hops`` the number of ball steps to the
    strip.  ``certified`` is False only if nothing passed (possible with
    sphere samples), in which case the gap is not a guaranteed enclosure.
    """
    lip = payoff_lipschitz(grid, payoff)
    safe = max(1.0, lip)
    if spec.variant is not Variant.TUG_OF_WAR:
        safe = max(safe, spec.sell_price / spec.eps)
    fvals = payoff[grid.strip_mask]
    interior = grid.interior_mask

    def cones(side):
        for slope in sorted({lip, safe}):
            env = cone_envelope(grid, payoff, slope, side)
            env[grid.strip_mask] = payoff[grid.strip_mask]
            yield env, slope

    def floor():
        env = np.where(grid.active_mask, float(np.min(fvals)), np.nan)
        if spec.variant is not Variant.TUG_OF_WAR:
            env -= spec.sell_price * _hop_count(grid, spec.eps)
        env[grid.strip_mask] = payoff[grid.strip_mask]
        yield env, "floor"

    def ceiling():
        env = np.where(grid.active_mask, float(np.max(fvals)), np.nan)
        env[grid.strip_mask] = payoff[grid.strip_mask]
        yield env, "ceiling"

    out, certified = [], True
    for side, fallback in (("lower", floor), ("upper", ceiling)):
        for env, kind in itertools.chain(cones(side), fallback()):
            step = dpp_apply(grid, spec, env) - env
            slack = 1e-12 * (1.0 + np.max(np.abs(env[interior])))
            ok = np.all(step[interior] >= -slack) if side == "lower" else np.all(step[interior] <= slack)
            if ok:
                break
        certified &= bool(ok)
        out.append((env, kind))
    (lo, k_lo), (up, k_up) = out
    return lo, up, {"lower": k_lo, "upper": k_up, "certified": certified}


def dpp_solve(
    grid: GridDomain,
    spec: GameSpec,
    tol: float | None = None,
    max_iter: int = 10**6,
    stall_window: int = 2000,
) -> tuple[np.ndarray, SolveReport]:
    """Bracketed value iteration for the game value.

    Two Jacobi sequences are run side by side, one started from a
    subsolution and one from a supersolution (see ``_starting_bracket``), so
    by monotonicity the fixed point stays between the two iterates. The lower iterate is returned; the report
    carries its residual and the max-norm gap between the two sequences.
    Convergence requires ``residual <= tol`` and ``gap <= 10 * tol``.
    Iteration also stops when neither quantity has improved over
    ``stall_window`` sweeps.
    """
    _check_spec(grid, spec)
    if tol is None:
        tol = default_tol(spec.payoff, grid)
    if not tol > 0:
        raise ConfigurationError("tol must be positive")
    t0 = time.perf_counter()
    payoff = np.asarray(spec.payoff, float)
    lo, up, bracket = _starting_bracket(grid, spec, payoff)
    interior = grid.interior_mask

    best = (np.inf, np.inf)
    last_gain = 0
    res_lo = np.inf
    gap = np.inf
    it = 0
    while it < max_iter:
        it += 1
        lo, res_lo = _iterate(grid, spec, lo)
        up, res_up = _iterate(grid, spec, up)
        gap = float(np.max(np.abs(up - lo)[interior]))
        if res_lo <= tol and gap <= 10 * tol:
            break
        score = (max(res_lo, res_up), gap)
        if score[0] < 0.999 * best[0] or score[1] < 0.999 * best[1]:
            best = (min(best[0], score[0]), min(best[1], score[1]))
            last_gain = it
        elif it - last_gain > stall_window:
            logger.warning("dpp_solve stalled after %d sweeps (residual %.3g, gap %.3g)", it, res_lo, gap)
            break
    res_lo = residual(grid, spec, lo)
    converged = res_lo <= tol and gap <= 10 * tol
    report = SolveReport(
        iterations=it,
        residual=res_lo,
        converged=converged,
        lower_upper_gap=gap,
        wall_time=time.perf_counter() - t0,
        details={
            "variant": spec.variant.value,
            "eps": spec.eps,
            "tol": tol,
            "sphere_samples": spec.sphere_samples,
            "bracket": bracket,
        },
    )
    return lo, report
