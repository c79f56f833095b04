import math

import numpy as np
import pytest

from eitmono import polygons as pg
from eitmono.coefficient import (CoefficientError, CoefficientField,
                                 SingularNodeError, WeightSpec,
                                 bracket_coefficients, estimate_a2_constant,
                                 eval_coefficient, graded_triangle_integral)
from eitmono.geometry import RegionSet, triangulate
from eitmono import phantoms

from conftest import build_field


class TestWeightSpec:
    def test_exponent_ranges(self):
        with pytest.raises(CoefficientError):
            WeightSpec.radial_power((0, 0), 2.0)
        with pytest.raises(CoefficientError):
            WeightSpec.radial_power((0, 0), -2.5)
        with pytest.raises(CoefficientError):
            WeightSpec.surface_power([(0, 0), (1, 0)], 1.0)
        WeightSpec.radial_power((0, 0), 1.9)
        WeightSpec.surface_power([(0, 0), (1, 0)], -0.9)

    def test_radial_eval(self):
        w = WeightSpec.radial_power((0.0, 0.0), 1.0)
        assert np.isclose(w.eval(np.array([[0.5, 0.0]]))[0], 0.5)
        w2 = WeightSpec.radial_power((0.0, 0.0), 0.5, amplitude=2.0)
        assert np.isclose(w2.eval(np.array([[0.25, 0.0]]))[0], 2 * 0.5)

    def test_surface_eval(self):
        w = WeightSpec.surface_power([(-1, 0), (1, 0)], 0.5)
        assert np.isclose(w.eval(np.array([[0.0, 0.09]]))[0], 0.3)

    def test_product_and_clip(self):
        w = WeightSpec.product(WeightSpec.radial_power((0, 0), 1.0),
                               WeightSpec.constant(3.0))
        assert np.isclose(w.eval(np.array([[0.5, 0.0]]))[0], 1.5)
        wc = WeightSpec.radial_power((0, 0), 1.0, clip=(0.2, 0.8))
        vals = wc.eval(np.array([[0.05, 0.0], [0.95, 0.0]]))
        assert np.allclose(vals, [0.2, 0.8])

    def test_singular_node_error(self):
        w = WeightSpec.radial_power((0.0, 0.0), -0.5)
        with pytest.raises(SingularNodeError):
            w.eval(np.array([[0.0, 0.0]]))
        # positive exponents evaluate to zero there instead
        wp = WeightSpec.radial_power((0.0, 0.0), 0.5)
        assert wp.eval(np.array([[0.0, 0.0]]))[0] == 0.0

    def test_features(self):
        w = WeightSpec.product(
            WeightSpec.radial_power((0.1, 0.2), -0.5),
            WeightSpec.surface_power([(0, 0), (1, 0)], 0.5))
        assert len(w.singular_points()) == 1
        assert len(w.singular_segments()) == 1
        assert np.isclose(w.vertex_exponent((0.1, 0.2)), -0.5)
        assert np.isclose(w.vertex_exponent((0.5, 0.0)), 0.5)
        assert np.isclose(w.edge_exponent((0.2, 0.0), (0.6, 0.0)), 0.5)
        assert w.edge_exponent((0.2, 0.1), (0.6, 0.1)) is None


class TestEvalCoefficient:
    def test_labels(self, disk_mesh):
        fld = CoefficientField(mesh=disk_mesh, gamma0=1.0)
        assert eval_coefficient(fld, (0.1, 0.1), "bg") == 1.0
        assert eval_coefficient(fld, (0.1, 0.1), "D0") == 0.0
        assert math.isinf(eval_coefficient(fld, (0.1, 0.1), "Dinf"))

    def test_weight_label(self, disk_mesh):
        w = WeightSpec.radial_power((0.0, 0.0), 1.0)
        fld = CoefficientField(mesh=disk_mesh, gamma0=1.0, weights={"Ddeg": w})
        assert np.isclose(eval_coefficient(fld, (0.5, 0.0), "Ddeg"), 0.5)


class TestValidation:
    def test_sign_violation_rejected(self, disk):
        regions, spec = phantoms.build_phantom("weighted_annulus")
        mesh = triangulate(disk, regions, target_h=0.12)
        bad = dict(spec)
        # weight exceeding the background on Ddeg violates the deficit side
        bad["Ddeg"] = WeightSpec.radial_power((0.0, 0.0), 0.5, amplitude=100.0)
        with pytest.raises(CoefficientError):
            build_field(mesh, bad)

    def test_missing_values_rejected(self, disk):
        regions, spec = phantoms.build_phantom("df_minus_square")
        mesh = triangulate(disk, regions, target_h=0.12)
        with pytest.raises(CoefficientError):
            CoefficientField(mesh=mesh, gamma0=1.0).validate()

    def test_dfplus_below_background_rejected(self, disk):
        regions, spec = phantoms.build_phantom("df_plus_disk")
        mesh = triangulate(disk, regions, target_h=0.12)
        with pytest.raises(CoefficientError):
            CoefficientField(mesh=mesh, gamma0=1.0,
                             finite_values={"DFplus": 0.5}).validate()


class TestBracketing:
    def test_no_weights_identity(self, disk_mesh):
        fld = CoefficientField(mesh=disk_mesh, gamma0=1.0)
        low, up = bracket_coefficients(fld)
        assert low is fld and up is fld

    def test_weighted_annulus_brackets(self, disk):
        regions, spec = phantoms.build_phantom("weighted_annulus")
        mesh = triangulate(disk, regions, target_h=0.1)
        fld = build_field(mesh, spec)
        low, up = bracket_coefficients(fld)
        assert np.sum(low.mesh.triangle_region == "D0") > \
            np.sum(fld.mesh.triangle_region == "D0")
        assert np.sum(up.mesh.triangle_region == "Dinf") > 0
        assert "Ddeg" not in low.weights and "Ddeg" not in up.weights
        # pointwise order at quadrature nodes inside the weighted ring
        mask = fld.mesh.triangle_region == "Ddeg"
        cents = fld.mesh.centroids()[mask]
        w = fld.weights["Ddeg"].eval(cents)
        assert np.all(w > 0) and np.all(w <= 1.0 + 1e-12)
        # lower maps the ring to 0, upper to infinity: 0 <= w <= inf
        assert np.all(0.0 <= w)

    def test_disconnecting_bracket_rejected(self, disk):
        # an annular weighted region whose insulating bracket seals off an
        # island; built directly (bypassing validate_regions on purpose)
        outer = pg.regular_polygon((0, 0), 0.45, 32)
        inner = pg.regular_polygon((0, 0), 0.25, 32)[::-1].copy()
        regions = RegionSet(polys={"Ddeg": [outer, inner]})
        mesh = triangulate(disk, regions, target_h=0.1)
        w = WeightSpec.radial_power((0.0, 0.0), 0.5, amplitude=1.0 / 0.45 ** 0.5)
        fld = CoefficientField(mesh=mesh, gamma0=1.0, weights={"Ddeg": w})
        with pytest.raises(CoefficientError):
            bracket_coefficients(fld)


class TestA2Estimate:
    def test_constant_weight(self, disk):
        est = estimate_a2_constant(WeightSpec.constant(4.2), disk, n_balls=6)
        assert np.isclose(est.constant_estimate, 1.0, atol=1e-9)

    def test_zero_exponent(self, disk):
        est = estimate_a2_constant(WeightSpec.radial_power((0, 0), 0.0),
                                   disk, n_balls=6)
        assert np.isclose(est.constant_estimate, 1.0, atol=1e-9)

    def test_radial_products_match_closed_form(self, disk):
        # ball centered at the singularity: product = 4 / (4 - s^2),
        # independent of the radius
        from eitmono.coefficient import _ball_average_pair
        for s in (0.5, 1.0, -1.0):
            w = WeightSpec.radial_power((0.0, 0.0), s)
            for radius in (0.15, 0.4):
                aw, awi = _ball_average_pair(w, (0.0, 0.0), radius,
                                             n_boundary=128, depth=12)
                assert np.isclose(aw, 2 * radius ** s / (2 + s), rtol=1e-3)
                assert np.isclose(aw * awi, 4.0 / (4.0 - s * s), rtol=1e-4)

    def test_estimate_bounds_and_monotonicity(self, disk):
        w = WeightSpec.radial_power((0.0, 0.0), 1.0)
        small = estimate_a2_constant(w, disk, n_balls=6, seed=11)
        big = estimate_a2_constant(w, disk, n_balls=18, seed=11)
        assert np.all(small.products >= 1.0 - 1e-12)
        assert big.constant_estimate >= small.constant_estimate - 1e-12
        assert big.constant_estimate >= 4.0 / 3.0 - 1e-3

    def test_n_balls_guard(self, disk):
        with pytest.raises(CoefficientError):
            estimate_a2_constant(WeightSpec.constant(1.0), disk, n_balls=0)


class TestElementIntegrals:
    def test_weighted_element_convergence(self, disk):
        # element integral over a triangle at the singular vertex converges
        # in the grading depth (relative change under 1e-6 from 12 to 16)
        w = WeightSpec.radial_power((0.0, 0.0), -1.5)
        tri = np.array([[0.0, 0.0], [0.08, 0.0], [0.0, 0.08]])
        v12 = graded_triangle_integral(w.eval, tri, w, depth=12)
        v16 = graded_triangle_integral(w.eval, tri, w, depth=16)
        assert abs(v12 - v16) / abs(v16) < 1e-6

    def test_field_element_integrals(self, disk):
        regions, spec = phantoms.build_phantom("weighted_annulus")
        mesh = triangulate(disk, regions, target_h=0.12)
        fld = build_field(mesh, spec)
        vals = fld.element_integrals()
        areas = mesh.triangle_areas()
        bg = mesh.triangle_region == "bg"
        assert np.allclose(vals[bg], areas[bg])
        d0 = mesh.triangle_region == "D0"
        assert np.all(np.isnan(vals[d0]))
        ddeg = mesh.triangle_region == "Ddeg"
        # deficit weight: element averages strictly below the area
        assert np.all(vals[ddeg] < areas[ddeg])
        assert np.all(vals[ddeg] > 0)
