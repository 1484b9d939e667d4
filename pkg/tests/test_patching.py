import numpy as np
import pytest

from gradlap.grid import ConfigurationError, Rectangle, Segment, build_grid
from gradlap.patching import (
    decompose,
    patch,
    patched_solution,
    pointwise_lipschitz,
    solve_infinity_harmonic,
)


@pytest.fixture
def seg():
    return build_grid(Segment(-1.0, 1.0), 0.1, 0.1, None)


def strip_values(grid, fn):
    return np.where(grid.strip_mask, fn(grid.coords), np.nan)


class TestHarmonic:
    def test_constant(self, square):
        h, rep = solve_infinity_harmonic(square, strip_values(square, lambda c: np.full(c.shape[:-1], 2.5)))
        assert rep.converged
        assert np.allclose(h[square.interior_mask], 2.5)

    def test_linear_1d(self):
        g = build_grid(Segment(-1.0, 1.0), 0.5, 0.5, None)
        pay = np.where(g.strip_mask, (g.coords[..., 0] + 1) / 2, np.nan)
        h, rep = solve_infinity_harmonic(g, pay, tol=1e-12)
        assert rep.converged
        assert np.allclose(h[g.interior_mask], [0.25, 0.5, 0.75], atol=1e-10)

    def test_linear_square(self):
        g = build_grid(Rectangle((-1.0, -1.0), (1.0, 1.0)), 0.05, 0.1, None)
        h, rep = solve_infinity_harmonic(g, strip_values(g, lambda c: 0.5 * c[..., 0]))
        assert rep.converged
        assert np.max(np.abs(h - 0.5 * g.coords[..., 0])[g.interior_mask]) <= g.spacing


class TestPointwiseLipschitz:
    def test_constant(self, square):
        u = np.where(square.active_mask, 1.0, np.nan)
        assert np.allclose(pointwise_lipschitz(square, u)[square.interior_mask], 0.0)

    def test_linear(self, square):
        u = np.where(square.active_mask, 0.5 * square.coords[..., 0], np.nan)
        assert np.allclose(pointwise_lipschitz(square, u)[square.interior_mask], 0.5)

    def test_abs_1d(self, seg):
        u = np.where(seg.active_mask, np.abs(seg.coords[..., 0]), np.nan)
        assert np.allclose(pointwise_lipschitz(seg, u)[seg.interior_mask], 1.0)

    def test_radius_below_spacing(self, seg):
        with pytest.raises(ConfigurationError):
            pointwise_lipschitz(seg, np.zeros(seg.shape), radius=0.05)


class TestDecompose:
    def test_all_small(self, square):
        dec = decompose(square, np.full(square.shape, 0.5), 1.0)
        assert np.array_equal(dec.v_eps_mask, square.interior_mask)
        assert len(dec.components) == 1

    def test_all_large(self, square):
        dec = decompose(square, np.full(square.shape, 1.5), 1.0)
        assert not dec.v_eps_mask.any() and dec.components == []

    def test_singleton(self, seg5):
        lip = np.zeros(seg5.shape)
        lip[seg5.interior_mask] = [1.5, 0.5, 1.5]
        dec = decompose(seg5, lip, 1.0)
        assert [list(c) for c in dec.components] == [[seg5.nearest_node((0.0,))]]

    def test_strict_inequality(self, seg5):
        lip = np.where(seg5.interior_mask, 1.0, 0.0)
        dec = decompose(seg5, lip, 1.0)
        assert not dec.v_eps_mask.any()
        assert dec.n_ambiguous == 3

    def test_a_and_b(self, square):
        dec = decompose(square, np.full(square.shape, 0.5), 0.2)
        assert np.array_equal(dec.a_mask, square.interior_mask)
        assert np.array_equal(dec.b_mask, square.d_mask)

    def test_two_components(self, seg):
        x = seg.coords[..., 0]
        lip = np.where(np.abs(x) < 0.25, 2.0, 0.0)
        dec = decompose(seg, lip, 1.0)
        assert len(dec.components) == 2


class TestPatch:
    def test_zero_payoff_unit_eps(self, seg):
        pay = strip_values(seg, lambda c: np.zeros(c.shape[:-1]))
        h_eps, dec = patched_solution(seg, pay, 1.0)
        x = seg.coords[..., 0]
        assert len(dec.components) == 1
        # the graph distance runs to the nearest strip node, which sits on the boundary
        assert np.allclose(h_eps[seg.interior_mask], (np.abs(x) - 1)[seg.interior_mask], atol=1e-12)

    def test_scaling(self, seg):
        pay = strip_values(seg, lambda c: np.zeros(c.shape[:-1]))
        h_eps, _ = patched_solution(seg, pay, 0.5)
        x = seg.coords[..., 0]
        assert np.allclose(h_eps[seg.interior_mask], 0.5 * (np.abs(x) - 1)[seg.interior_mask], atol=1e-12)

    def test_empty_v_is_identity(self, square, rng):
        h = np.where(square.active_mask, rng.normal(size=square.shape), np.nan)
        dec = decompose(square, np.full(square.shape, 2.0), 1.0)
        assert np.array_equal(patch(square, h, dec, 1.0), h, equal_nan=True)

    def test_patch_below_h(self, square):
        pay = strip_values(square, lambda c: 0.5 * c[..., 0])
        h, _ = solve_infinity_harmonic(square, pay)
        h_eps, dec = patched_solution(square, pay, 1.0, h=h)
        assert dec.v_eps_mask.any()
        # every patched value is a cone from a boundary value of h, hence below h on the patch
        assert np.all(h_eps[square.interior_mask] <= h[square.interior_mask] + 1e-9)

    def test_eps_mismatch(self, square):
        dec = decompose(square, np.zeros(square.shape), 1.0)
        with pytest.raises(ConfigurationError):
            patch(square, np.zeros(square.shape), dec, 0.5)


def _patch_case(square, eps):
    pay = strip_values(square, lambda c: 0.5 * c[..., 0] + 0.3 * np.sin(3 * c[..., 1]))
    h, _ = solve_infinity_harmonic(square, pay)
    h_eps, dec = patched_solution(square, pay, eps, h=h)
    assert dec.v_eps_mask.any() and not dec.v_eps_mask.all()
    return h, h_eps, dec


@pytest.mark.parametrize("eps", [0.6, 1.0])
def test_patch_leaves_h_outside_v_eps(square, eps):
    h, h_eps, dec = _patch_case(square, eps)
    outside = square.active_mask & ~dec.v_eps_mask
    assert np.array_equal(h_eps[outside], h[outside])


@pytest.mark.parametrize("eps", [0.6, 1.0])
def test_patch_is_eps_lipschitz_on_components(square, eps):
    """Along every axis or diagonal edge inside one component the slope is at most eps."""
    _, h_eps, dec = _patch_case(square, eps)
    label = np.full(square.size, -1)
    for i, comp in enumerate(dec.components):
        label[comp] = i
    label = label.reshape(square.shape)
    s = square.spacing
    for shift in [(0, 1), (1, 0), (1, 1), (1, -1)]:
        a = label
        b = np.roll(label, shift, axis=(0, 1))
        same = (a >= 0) & (a == b)
        # discard pairs produced by wrap-around
        if shift[0]:
            same[: abs(shift[0]), :] = False
        if shift[1] > 0:
            same[:, :1] = False
        elif shift[1] < 0:
            same[:, -1:] = False
        diff = np.abs(h_eps - np.roll(h_eps, shift, axis=(0, 1)))[same]
        assert np.all(diff <= eps * s * np.hypot(*shift) + 1e-12)


def test_patch_below_euclidean_boundary_cones(square):
    """Path lengths are at least Euclidean, so h_eps <= sup_y (h(y) - eps |x - y|) over the boundary."""
    from gradlap.patching import component_boundary

    eps = 1.0
    h, h_eps, dec = _patch_case(square, eps)
    coords = square.coords.reshape(-1, 2)
    flat_h, flat_e = h.reshape(-1), h_eps.reshape(-1)
    for comp in dec.components:
        mask = np.zeros(square.size, bool)
        mask[comp] = True
        bdry = np.flatnonzero(component_boundary(square, mask.reshape(square.shape)))
        d = np.linalg.norm(coords[comp][:, None] - coords[bdry][None], axis=-1)
        cone = np.max(flat_h[bdry][None] - eps * d, axis=1)
        assert np.all(flat_e[comp] <= cone + 1e-12)
        # and no worse than a straight path of at most sqrt(2) times the length
        path = np.max(flat_h[bdry][None] - np.sqrt(2) * eps * d, axis=1)
        assert np.all(flat_e[comp] >= path - 1e-12)
