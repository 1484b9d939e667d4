"""Lattice discretization of the domain, the exterior payoff strip and the constraint set.

Fields on a grid are plain ``numpy`` arrays of shape ``grid.shape``. Nodes are
identified by their flat (C-order) index. Values on dead nodes (neither in the
domain nor in the strip) are meaningless and conventionally ``nan``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

logger = logging.getLogger(__name__)

# Relative slack used when comparing lattice distances against radii.
_TOL = 1e-9


class ConfigurationError(ValueError):
    """Raised for inconsistent grid or solver parameters."""


# ---------------------------------------------------------------------------
# shape descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    a: float
    b: float

    dim = 1

    def bounds(self):
        return np.array([self.a]), np.array([self.b])

    def contains(self, coords, tol=0.0):
        x = coords[..., 0]
        return (x > self.a + tol) & (x < self.b - tol)

    def project_boundary(self, coords):
        """Nearest endpoint (for points outside the segment)."""
        x = coords[..., :1]
        return np.where(np.abs(x - self.a) <= np.abs(x - self.b), self.a, self.b)


@dataclass(frozen=True)
class Rectangle:
    lower: tuple
    upper: tuple

    @property
    def dim(self):
        return len(self.lower)

    def bounds(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)

    def contains(self, coords, tol=0.0):
        lo, hi = self.bounds()
        return np.all((coords > lo + tol) & (coords < hi - tol), axis=-1)

    def project_boundary(self, coords):
        """Nearest boundary point; exact for points outside the box."""
        lo, hi = self.bounds()
        return np.clip(coords, lo, hi)


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    @property
    def dim(self):
        return len(self.center)

    def bounds(self):
        c = np.asarray(self.center, float)
        return c - self.radius, c + self.radius

    def contains(self, coords, tol=0.0):
        c = np.asarray(self.center, float)
        return np.linalg.norm(coords - c, axis=-1) < self.radius - tol

    def project_boundary(self, coords):
        """Radial projection onto the circle (the center maps to an arbitrary point)."""
        c = np.asarray(self.center, float)
        d = coords - c
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        unit = np.where(r > 0, d / np.where(r > 0, r, 1.0), np.eye(self.dim)[0])
        return c + self.radius * unit


@dataclass(frozen=True)
class Points:
    """Finite point set; each point selects its nearest lattice node."""

    points: tuple

    @property
    def dim(self):
        return len(self.points[0])

    def bounds(self):
        p = np.asarray(self.points, float)
        return p.min(axis=0), p.max(axis=0)


@dataclass(frozen=True)
class Union_:
    """Union of constraint shapes."""

    parts: tuple


@dataclass(frozen=True)
class ExplicitMask:
    """Boolean node mask on a lattice with given origin (coordinates of index 0)."""

    mask: np.ndarray
    origin: tuple

    @property
    def dim(self):
        return self.mask.ndim


Shape = Union[Segment, Rectangle, Disk, ExplicitMask]
DShape = Union[Segment, Rectangle, Disk, Points, Union_, ExplicitMask, str, None]


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Regular lattice with interior, strip and constraint masks.

    ``interior_mask`` marks nodes of the open domain, ``strip_mask`` the
    exterior nodes reachable from the domain within ``strip_width`` (where the
    payoff lives), and ``d_mask`` the interior nodes of the constraint set.
    """

    spacing: float
    origin: np.ndarray
    interior_mask: np.ndarray
    strip_mask: np.ndarray
    d_mask: np.ndarray
    strip_width: float
    _coords: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("interior_mask", "strip_mask", "d_mask"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        start = np.rint(np.asarray(self.origin) / self.spacing)
        idx = np.moveaxis(np.indices(self.shape, dtype=float), 0, -1) + start
        coords = idx * self.spacing
        coords.setflags(write=False)
        object.__setattr__(self, "_coords", coords)

    @property
    def shape(self) -> tuple:
        return self.interior_mask.shape

    @property
    def dim(self) -> int:
        return self.interior_mask.ndim

    @property
    def size(self) -> int:
        return self.interior_mask.size

    @property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``grid.shape + (dim,)``."""
        return self._coords

    @property
    def active_mask(self) -> np.ndarray:
        return self.interior_mask | self.strip_mask

    @property
    def dead_mask(self) -> np.ndarray:
        return ~self.active_mask

    def node_coords(self, node: int) -> np.ndarray:
        return self._coords.reshape(-1, self.dim)[node]

    def nearest_node(self, point: Sequence[float]) -> int:
        """Flat index of the lattice node closest to ``point``."""
        p = np.atleast_1d(np.asarray(point, float))
        idx = np.rint((p - self.origin) / self.spacing).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise ConfigurationError(f"point {point} lies outside the lattice")
        return int(np.ravel_multi_index(tuple(idx), self.shape))

    def with_masks(self, *, interior=None, strip=None, d=None) -> "GridDomain":
        """Copy of the grid with some masks replaced (used for pinning nodes)."""
        interior = self.interior_mask if interior is None else interior
        d = self.d_mask if d is None else d
        return GridDomain(
            spacing=self.spacing,
            origin=self.origin,
            interior_mask=np.array(interior, bool),
            strip_mask=np.array(self.strip_mask if strip is None else strip, bool),
            d_mask=np.array(d, bool) & np.array(interior, bool),
            strip_width=self.strip_width,
        )

    def empty_field(self) -> np.ndarray:
        return np.full(self.shape, np.nan)


def _lattice_for(lo, hi, spacing, pad):
    start = np.floor((lo - pad) / spacing + _TOL).astype(int) - 1
    stop = np.ceil((hi + pad) / spacing - _TOL).astype(int) + 1
    origin = start * spacing
    shape = tuple(int(n) for n in stop - start + 1)
    return origin.astype(float), shape


def _shape_mask(shape_desc, coords, grid_origin, spacing, grid_shape):
    if isinstance(shape_desc, ExplicitMask):
        m = np.asarray(shape_desc.mask, bool)
        offset = np.rint((np.asarray(shape_desc.origin, float) - grid_origin) / spacing).astype(int)
        out = np.zeros(grid_shape, bool)
        sl_dst, sl_src = [], []
        for ax in range(m.ndim):
            d0 = max(offset[ax], 0)
            s0 = max(-offset[ax], 0)
            n = min(m.shape[ax] - s0, grid_shape[ax] - d0)
            if n <= 0:
                return out
            sl_dst.append(slice(d0, d0 + n))
            sl_src.append(slice(s0, s0 + n))
        out[tuple(sl_dst)] = m[tuple(sl_src)]
        return out
    # open sets: nodes within rounding distance of the boundary are outside
    return shape_desc.contains(coords, tol=_TOL * spacing)


def build_grid(
    shape: Shape,
    spacing: float,
    strip_width: float,
    d_shape: DShape = None,
) -> GridDomain:
    """Discretize ``shape`` on a lattice of step ``spacing`` containing the origin.

    The strip holds every exterior node within ``strip_width`` of an interior
    node, so any ball of radius ``<= strip_width`` around an interior node only
    meets interior and strip nodes. ``d_shape`` may be a shape, a
    :class:`Points` set, ``"all"`` (D = domain) or ``None`` (D empty).
    """
    if not spacing > 0:
        raise ConfigurationError(f"spacing must be positive, got {spacing}")
    if strip_width < spacing * (1 - _TOL):
        raise ConfigurationError(
            f"strip_width {strip_width} is smaller than spacing {spacing}"
        )
    if isinstance(shape, ExplicitMask):
        m = np.asarray(shape.mask, bool)
        lo = np.asarray(shape.origin, float)
        hi = lo + (np.array(m.shape) - 1) * spacing
    else:
        lo, hi = shape.bounds()
    origin, lattice_shape = _lattice_for(lo, hi, spacing, strip_width)
    idx = np.moveaxis(np.indices(lattice_shape, dtype=float), 0, -1) + np.rint(origin / spacing)
    coords = idx * spacing

    interior = _shape_mask(shape, coords, origin, spacing, lattice_shape)
    if not interior.any():
        raise ConfigurationError("domain contains no lattice nodes")

    dist_to_interior = ndimage.distance_transform_edt(~interior) * spacing
    strip = (~interior) & (dist_to_interior <= strip_width * (1 + _TOL))

    grid = GridDomain(
        spacing=float(spacing),
        origin=origin,
        interior_mask=interior,
        strip_mask=strip,
        d_mask=np.zeros(lattice_shape, bool),
        strip_width=float(strip_width),
    )
    d = constraint_mask(grid, d_shape)
    return grid.with_masks(d=d)


def constraint_mask(grid: GridDomain, d_shape: DShape) -> np.ndarray:
    """Interior nodes belonging to the constraint shape."""
    if d_shape is None:
        return np.zeros(grid.shape, bool)
    if isinstance(d_shape, str):
        if d_shape != "all":
            raise ConfigurationError(f"unknown constraint keyword {d_shape!r}")
        return grid.interior_mask.copy()
    if isinstance(d_shape, Union_):
        m = np.zeros(grid.shape, bool)
        for part in d_shape.parts:
            m |= constraint_mask(grid, part)
        return m
    if isinstance(d_shape, Points):
        m = np.zeros(grid.size, bool)
        for p in d_shape.points:
            m[grid.nearest_node(p)] = True
        return m.reshape(grid.shape) & grid.interior_mask
    return _shape_mask(d_shape, grid.coords, grid.origin, grid.spacing, grid.shape) & grid.interior_mask


# ---------------------------------------------------------------------------
# stencils and masks
# ---------------------------------------------------------------------------


def ball_offsets(dim: int, spacing: float, radius: float) -> np.ndarray:
    """Integer offsets ``k`` with ``|k| * spacing <= radius``, center first."""
    r = int(np.floor(radius / spacing + _TOL))
    axes = [np.arange(-r, r + 1)] * dim
    ks = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    keep = np.linalg.norm(ks, axis=1) * spacing <= radius * (1 + _TOL)
    ks = ks[keep]
    order = np.lexsort((np.abs(ks).sum(axis=1),))
    return ks[order]


def ball_footprint(dim: int, spacing: float, radius: float) -> np.ndarray:
    ks = ball_offsets(dim, spacing, radius)
    r = int(np.abs(ks).max()) if len(ks) else 0
    fp = np.zeros((2 * r + 1,) * dim, bool)
    fp[tuple((ks + r).T)] = True
    return fp


def ball(grid: GridDomain, node: int, radius: float) -> set:
    """Active nodes within Euclidean distance ``radius`` of an interior node."""
    if radius < grid.spacing * (1 - _TOL):
        raise ConfigurationError(f"ball radius {radius} below grid spacing {grid.spacing}")
    center = np.array(np.unravel_index(node, grid.shape))
    if not grid.interior_mask[tuple(center)]:
        raise ConfigurationError(f"node {node} is not interior")
    ks = ball_offsets(grid.dim, grid.spacing, radius) + center
    inside = np.all((ks >= 0) & (ks < np.array(grid.shape)), axis=1)
    ks = ks[inside]
    ok = grid.active_mask[tuple(ks.T)]
    return set(np.ravel_multi_index(tuple(ks[ok].T), grid.shape).tolist())


def dilate_mask(grid: GridDomain, mask: np.ndarray, r: float) -> np.ndarray:
    """Interior nodes within distance ``r`` of ``mask``."""
    mask = np.asarray(mask, bool)
    if r < 0:
        raise ConfigurationError("dilation radius must be nonnegative")
    if not mask.any():
        return np.zeros(grid.shape, bool)
    dist = ndimage.distance_transform_edt(~mask) * grid.spacing
    return (dist <= r * (1 + _TOL) + 1e-15) & grid.interior_mask


def interior_closure_mask(grid: GridDomain, mask: np.ndarray) -> np.ndarray:
    """Grid version of the closure of the interior of ``mask``.

    Interior is taken relative to the domain: a node is grid-interior when all
    its axis neighbours inside the domain are in the mask. The closure adds
    the axis neighbours of grid-interior nodes.
    """
    mask = np.asarray(mask, bool) & grid.interior_mask
    cross = ndimage.generate_binary_structure(grid.dim, 1)
    core = ndimage.binary_erosion(mask | ~grid.interior_mask, structure=cross, border_value=1) & mask
    return ndimage.binary_dilation(core, structure=cross) & mask


# ---------------------------------------------------------------------------
# geodesic distances
# ---------------------------------------------------------------------------


def geodesic_stencil(dim: int, spacing: float, radius: float | None = None) -> np.ndarray:
    """Half set of graph offsets (one of each ``±k`` pair).

    Default radius ``sqrt(dim) * spacing`` gives axis plus diagonal neighbours.
    """
    if radius is None:
        radius = np.sqrt(dim) * spacing
    ks = ball_offsets(dim, spacing, radius)
    ks = ks[np.any(ks != 0, axis=1)]
    # keep k whose first nonzero entry is positive
    first = np.array([k[np.flatnonzero(k)[0]] for k in ks])
    return ks[first > 0]


def _graph_edges(grid, nodes_mask, core_mask, stencil):
    """Edges between ``nodes_mask`` nodes with at least one endpoint in ``core_mask``."""
    shape = np.array(grid.shape)
    all_idx = np.argwhere(nodes_mask)
    rows, cols, wts = [], [], []
    for k in stencil:
        nb = all_idx + k
        inside = np.all((nb >= 0) & (nb < shape), axis=1)
        a, b = all_idx[inside], nb[inside]
        ok = nodes_mask[tuple(b.T)] & (core_mask[tuple(a.T)] | core_mask[tuple(b.T)])
        a, b = a[ok], b[ok]
        rows.append(np.ravel_multi_index(tuple(a.T), grid.shape))
        cols.append(np.ravel_multi_index(tuple(b.T), grid.shape))
        wts.append(np.full(len(a), np.linalg.norm(k) * grid.spacing))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(wts)


def geodesic_distance(
    grid: GridDomain,
    region: np.ndarray,
    sources: Iterable[tuple[int, float]],
    stencil_radius: float | None = None,
) -> np.ndarray:
    """Multi-source shortest path over the region graph.

    Returns, for each region node, ``min_s (value_s + graph distance(s, x))``.
    Graph nodes are the region plus the sources; an edge joins two graph
    nodes within the stencil when at least one of them is in the region, so
    paths never travel between two outside sources directly. Source nodes
    keep their initial values; every other node is ``inf``.
    """
    region = np.asarray(region, bool)
    sources = list(sources)
    out = np.full(grid.size, np.inf)
    if not sources:
        if region.any():
            logger.warning("geodesic_distance: no sources, %d nodes unreachable", region.sum())
        return out.reshape(grid.shape)
    src_nodes = np.array([s for s, _ in sources], dtype=int)
    src_vals = np.array([v for _, v in sources], dtype=float)
    nodes_mask = region.copy().reshape(-1)
    nodes_mask[src_nodes] = True
    nodes_mask = nodes_mask.reshape(grid.shape)

    stencil = geodesic_stencil(grid.dim, grid.spacing, stencil_radius)
    r, c, w = _graph_edges(grid, nodes_mask, region, stencil)

    # super-source joined to each source; weights shifted to stay positive
    n = grid.size
    shift = src_vals.min() - 1.0
    r = np.concatenate([r, np.full(len(src_nodes), n)])
    c = np.concatenate([c, src_nodes])
    w = np.concatenate([w, src_vals - shift])
    graph = sparse.coo_matrix((w, (r, c)), shape=(n + 1, n + 1)).tocsr()
    dist = csgraph.dijkstra(graph, directed=False, indices=n)[:n] + shift

    flat_region = region.reshape(-1)
    out[flat_region] = dist[flat_region]
    out[src_nodes] = np.minimum(dist[src_nodes], src_vals)
    n_bad = int(np.isinf(out[flat_region]).sum())
    if n_bad:
        logger.warning("geodesic_distance: %d region nodes unreachable", n_bad)
    return out.reshape(grid.shape)
