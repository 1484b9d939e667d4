import warnings

import numpy as np
import pytest

from gradlap.analytic import CATALOG, cone, dist_to_boundary, example_library, maximal_d_mask, v_alpha
from gradlap.dpp import Variant
from gradlap.grid import ConfigurationError, Disk, Segment, build_grid


@pytest.fixture
def seg():
    return build_grid(Segment(-1.0, 1.0), 0.1, 0.1, None)


def zero_payoff(grid):
    return np.where(grid.strip_mask, 0.0, np.nan)


def origin_mask(grid):
    m = np.zeros(grid.shape, bool)
    m[np.unravel_index(grid.nearest_node(np.zeros(grid.dim)), grid.shape)] = True
    return m


class TestCone:
    def test_1d(self, seg):
        assert np.allclose(cone(seg, 0.0, 1.0), -np.abs(seg.coords[..., 0]))

    def test_flat(self, seg):
        assert np.all(cone(seg, 0.3, 0.0, offset=2.0) == 2.0)

    def test_2d_value(self):
        g = build_grid(Disk((0.0, 0.0), 2.0), 1.0, 1.0, None)
        c = cone(g, (0.0, 0.0), 1.0, offset=2.0)
        assert c.reshape(-1)[g.nearest_node((2.0, 0.0))] == pytest.approx(0.0)

    def test_negative_slope(self, seg):
        with pytest.raises(ConfigurationError):
            cone(seg, 0.0, -1.0)


class TestDistToBoundary:
    def test_1d(self, seg5):
        d = dist_to_boundary(seg5)
        assert d.reshape(-1)[seg5.nearest_node((0.0,))] == pytest.approx(1.0)
        assert d.reshape(-1)[seg5.nearest_node((0.5,))] == pytest.approx(0.5)
        assert d.reshape(-1)[seg5.nearest_node((-0.5,))] == pytest.approx(0.5)

    def test_adjacent_nodes(self, square):
        d = dist_to_boundary(square)
        near = square.interior_mask & (np.max(np.abs(square.coords), axis=-1) > 0.85)
        assert np.all(d[near] <= square.spacing + 1e-12)

    def test_disk_center(self):
        g = build_grid(Disk((0.0, 0.0), 2.0), 0.1, 0.1, None)
        assert dist_to_boundary(g).reshape(-1)[g.nearest_node((0.0, 0.0))] == pytest.approx(2.0, abs=0.1)


class TestVAlpha:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
    def test_segment(self, seg, alpha):
        v = v_alpha(seg, zero_payoff(seg), alpha, origin_mask(seg), tol=1e-12)
        x = seg.coords[..., 0]
        assert np.allclose(v[seg.interior_mask], alpha * (np.abs(x) - 1)[seg.interior_mask], atol=1e-9)

    def test_warns_outside_range(self, seg):
        pay = np.where(seg.strip_mask, seg.coords[..., 0], np.nan)
        with pytest.warns(UserWarning, match="alpha"):
            v_alpha(seg, pay, 0.5, origin_mask(seg))

    def test_no_warning_inside_range(self, seg):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            v_alpha(seg, zero_payoff(seg), 0.7, origin_mask(seg))


class TestCatalog:
    def test_names(self):
        assert set(CATALOG) == {"disk2_annulusD", "ball1_pointD", "segment_jensen", "square_twopatch"}

    def test_unknown(self):
        with pytest.raises(KeyError, match="disk2_annulusD"):
            example_library("nope")

    def test_disk2(self):
        pr = example_library("disk2_annulusD")
        assert pr.exact_solution(np.zeros((1, 2)))[0] == pytest.approx(-2.0)
        assert pr.spacing == 0.025 and pr.eps == 0.1

    def test_ball1(self):
        pr = example_library("ball1_pointD")
        assert pr.exact_solution(np.zeros((1, 2)))[0] == pytest.approx(-1.0)
        assert np.all(pr.variational_exact(np.random.default_rng(0).normal(size=(5, 2))) == 0)
        g = pr.build_grid(0.1, 0.1)
        assert g.d_mask.sum() == 1
        assert np.all(pr.variational_spec(g).g_weights == 0)

    def test_segment(self):
        pr = example_library("segment_jensen")
        assert pr.exact_solution(np.zeros((1, 1)))[0] == pytest.approx(-1.0)
        g = pr.build_grid()
        assert np.array_equal(g.d_mask, g.interior_mask)

    def test_game_spec(self):
        pr = example_library("segment_jensen")
        g = pr.build_grid()
        spec = pr.game_spec(g, Variant.OMEGA_GAME)
        assert spec.variant is Variant.OMEGA_GAME and spec.eps == pr.eps
        assert np.all(spec.payoff[g.strip_mask] == 0)

    def test_maximal_mask_drops_isolated_point(self):
        pr = example_library("square_twopatch")
        g = pr.build_grid()
        x0 = np.unravel_index(g.nearest_node(pr.extra["x0"]), g.shape)
        assert g.d_mask[x0] and not maximal_d_mask(g)[x0]
        assert maximal_d_mask(g).sum() > 0.9 * (g.d_mask.sum() - 1)


def test_strip_fill_strategies():
    import dataclasses

    base = example_library("square_twopatch")
    pr = dataclasses.replace(base, payoff_fn=lambda x: x[..., 0] ** 2)
    g = pr.build_grid(0.1, 0.2)
    ext = pr.payoff(g)
    near = pr.payoff(g, fill="nearest")
    x = g.coords[..., 0]
    s = g.strip_mask
    np.testing.assert_allclose(ext[s], x[s] ** 2)
    np.testing.assert_allclose(near[s], np.clip(x[s], -1, 1) ** 2)
    assert np.all(np.isnan(near[~s]))
    # the stored default is used by the specs
    spec = dataclasses.replace(pr, strip_fill="nearest").game_spec(g, Variant.D_GAME)
    np.testing.assert_array_equal(spec.payoff[s], near[s])
    with pytest.raises(ConfigurationError):
        pr.payoff(g, fill="mirror")
