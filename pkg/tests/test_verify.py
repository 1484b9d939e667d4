import json

import numpy as np
import pytest

from gradlap.analytic import example_library
from gradlap.dpp import GameSpec, Variant
from gradlap.grid import ConfigurationError, Rectangle, Segment, build_grid
from gradlap.variational import VariationalSpec
from gradlap.verify import (
    check_lip_bound,
    check_minimal_vs_variational,
    check_monotone_in_D,
    check_ordering,
    check_oscillation,
    check_patch_equals_jensen,
    check_support_dependence,
    dilated_d,
)

V_FIXED = np.array([-0.5, -1.0, -0.5])


def interior_field(grid, values, outside=0.0):
    u = np.where(grid.strip_mask, outside, np.nan)
    u[grid.interior_mask] = values
    return u


class TestOrdering:
    def test_catalog_fixed_points(self, seg5):
        z = u = interior_field(seg5, V_FIXED)
        h = interior_field(seg5, 0.0)
        rep = check_ordering(z, u, h, 1e-9, grid=seg5)
        assert rep.passed and rep.margin == 0.0

    def test_violation(self, seg5):
        rep = check_ordering(interior_field(seg5, 0.0), interior_field(seg5, -1.0), interior_field(seg5, 0.0), 1e-9, grid=seg5)
        assert not rep.passed and rep.margin == -1.0
        assert rep.status == "fail" and rep.locus is not None

    def test_equal(self, square, rng):
        f = np.where(square.active_mask, rng.normal(size=square.shape), np.nan)
        rep = check_ordering(f, f, f, 0.0)
        assert rep.passed and rep.margin == 0.0

    def test_grid_mismatch(self, seg5, square):
        with pytest.raises(ConfigurationError):
            check_ordering(np.zeros(seg5.shape), np.zeros(square.shape), np.zeros(seg5.shape), 1e-9)


class TestOscillation:
    def test_cone_passes(self, seg5, seg5_payoff):
        rep = check_oscillation(seg5, interior_field(seg5, V_FIXED), 0.5, seg5_payoff, 1e-9)
        assert rep.passed and rep.margin == pytest.approx(4 * 0.5 - 1.0)

    def test_steep_field_fails(self, seg5, seg5_payoff):
        rep = check_oscillation(seg5, interior_field(seg5, [0.0, 5.0, 0.0]), 0.5, seg5_payoff, 1e-9)
        assert not rep.passed and rep.margin == pytest.approx(2.0 - 5.0)


class TestMonotoneInD:
    def test_empty_vs_full(self, seg5, seg5_payoff):
        spec = GameSpec(Variant.D_GAME, 0.5, seg5_payoff)
        rep = check_monotone_in_D(seg5, spec, np.zeros(seg5.shape, bool), seg5.interior_mask, 1e-9)
        # tug-of-war value 0 against (-0.5, -1, -0.5)
        assert rep.passed
        assert rep.margin == pytest.approx(0.5, abs=1e-9)
        assert rep.details["solve_small"]["converged"]

    def test_same_set(self, seg5, seg5_payoff):
        spec = GameSpec(Variant.D_GAME, 0.5, seg5_payoff)
        rep = check_monotone_in_D(seg5, spec, seg5.d_mask, seg5.d_mask, 1e-9)
        assert rep.passed and rep.margin == pytest.approx(0.0, abs=1e-9)

    def test_dilated_disk(self):
        g = build_grid(Rectangle((-1.0, -1.0), (1.0, 1.0)), 0.1, 0.2, None)
        g = g.with_masks(d=np.linalg.norm(g.coords, axis=-1) < 0.4)
        spec = GameSpec(Variant.D_GAME, 0.2, np.where(g.strip_mask, 0.3 * g.coords[..., 1], np.nan))
        rep = check_monotone_in_D(g, spec, g.d_mask, dilated_d(g), 1e-9)
        assert rep.passed, rep.details

    def test_containment_required(self, seg5, seg5_payoff):
        spec = GameSpec(Variant.D_GAME, 0.5, seg5_payoff)
        with pytest.raises(ConfigurationError):
            check_monotone_in_D(seg5, spec, seg5.interior_mask, seg5.d_mask, 1e-9)


class TestPatchJensen:
    def test_segment(self):
        g = build_grid(Segment(-1.0, 1.0), 0.1, 0.1, None)
        pay = np.where(g.strip_mask, 0.0, np.nan)
        rep = check_patch_equals_jensen(g, pay, 1.0, 2 * g.spacing)
        assert rep.passed, rep.details
        z, h_eps = rep.details["fields"]["z_eps"], rep.details["fields"]["h_eps"]
        x = g.coords[..., 0]
        assert np.allclose(z[g.interior_mask], (np.abs(x) - 1)[g.interior_mask], atol=1e-9)
        assert np.allclose(h_eps[g.interior_mask], (np.abs(x) - 1)[g.interior_mask], atol=1e-9)
        assert "fields" not in rep.as_dict()["details"]
        json.dumps(rep.as_dict())

    def test_constant_payoff_small_eps(self, square):
        pay = np.where(square.strip_mask, 1.5, np.nan)
        rep = check_patch_equals_jensen(square, pay, 0.2, 2 * square.spacing)
        assert rep.passed, rep.details

    def test_eps_below_spacing(self, square):
        with pytest.raises(ConfigurationError):
            check_patch_equals_jensen(square, np.where(square.strip_mask, 0.0, np.nan), 0.01, 0.1)


class TestLipBound:
    def test_cone(self):
        g = build_grid(Segment(-1.0, 1.0), 0.1, 0.1, None)
        rep = check_lip_bound(g, np.abs(g.coords[..., 0]) - 1, 0.0, 1e-9)
        assert rep.passed

    def test_steep(self, square):
        rep = check_lip_bound(square, 2 * square.coords[..., 0], 0.0, 0.1)
        assert not rep.passed and rep.margin == pytest.approx(-1.0)


class TestSupportDependence:
    @pytest.fixture
    def seg(self):
        return build_grid(Segment(-1.0, 1.0), 0.05, 0.05, None)

    def _spec(self, grid, g):
        return VariationalSpec(np.where(grid.interior_mask, g, 0.0), np.where(grid.strip_mask, 0.0, np.nan))

    def test_zero_weights(self, seg):
        rep = check_support_dependence(seg, self._spec(seg, 0.0), self._spec(seg, 0.0), 1e-12)
        assert rep.passed and rep.details["max_abs_diff"] == 0.0

    def test_reweighted(self, seg):
        x = seg.coords[..., 0]
        g = (np.abs(x) < 0.5).astype(float)
        rep = check_support_dependence(seg, self._spec(seg, g), self._spec(seg, g * (1 + x**2 / 10)), 0.1)
        assert rep.passed, rep.details

    def test_precomputed_fields(self, seg):
        f = np.zeros(seg.shape)
        rep = check_support_dependence(seg, self._spec(seg, 1.0), self._spec(seg, 2.0), 0.1, fields=(f, f + 0.05))
        assert rep.passed and rep.margin == pytest.approx(0.05)

    def test_support_mismatch(self, seg):
        x = seg.coords[..., 0]
        with pytest.raises(ConfigurationError):
            check_support_dependence(seg, self._spec(seg, (x > 0) * 1.0), self._spec(seg, 1.0), 0.1)


def test_minimal_vs_variational_segment():
    pr = example_library("segment_jensen")
    rep = check_minimal_vs_variational(pr, 2 * pr.spacing + pr.eps)
    assert rep.passed, rep.details
    assert rep.details["game_max_error"] <= 2 * pr.spacing + pr.eps
