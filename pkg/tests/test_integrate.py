import math

import numpy as np
import pytest

from conftest import TWO_PI, field, flat, flrw_chart, flrw_metric, plane, sphere, torus
from volex.errors import FaceNotSlice, NonCompactDomain, SchemaError
from volex.exprdsl import parse
from volex.geometry import Chart, LogRateField, MetricSpec
from volex.integrate import (Face, GridSpec, Region, axis_rule, boundary_check, flow_sign_diagnostics,
                             green_check, l1_convergence, log_rate_green_check, pairwise_sum, quad,
                             total_volume, truncated_l1)


def G2(n):
    return GridSpec.uniform(2, n)


def test_unit_torus_volume():
    c = torus(1.0)
    assert quad(c, flat(c), parse("1", c), G2(16)) == 1.0


def test_sine_integrates_to_zero():
    c = torus(1.0)
    assert abs(quad(c, flat(c), parse("sin(2*pi*x)", c), G2(64))) < 1e-12


def test_sphere_area(frozen):
    c, g = sphere()
    area = quad(c, g, parse("1", c), G2(64))
    assert area == pytest.approx(frozen["sphere"]["area_excised_1e-3"], rel=1e-6)
    assert area == pytest.approx(4 * math.pi, rel=1e-2)


def test_total_volumes():
    c = torus()
    assert total_volume(c, flat(c), G2(8)) == pytest.approx(4 * math.pi ** 2, rel=1e-14)
    f = flrw_chart()
    sl = Region(f, ((0.999, 1.001), None, None, None))
    assert total_volume(f, flrw_metric(f, "t^(4/3)"), GridSpec.uniform(4, 8), sl) / 0.002 == pytest.approx(1.0, rel=1e-6)


def test_constants_integrate_exactly():
    c = Chart(("x", "y"), periods=(3.0, None), bounds=(None, (-1.0, 2.5)))
    r = quad(c, flat(c), parse("1.7", c), G2(10))
    assert r == pytest.approx(1.7 * 3.0 * 3.5, rel=1e-13)


def test_spectral_convergence(frozen):
    c = Chart(("x", "y"), periods=(TWO_PI, 1.0))
    exact = frozen["exp_sin_integral_2pi"]
    e16 = abs(quad(c, flat(c), parse("exp(sin(x))", c), G2(16)) - exact)
    e32 = abs(quad(c, flat(c), parse("exp(sin(x))", c), G2(32)) - exact)
    assert e32 < 1e-12 and e32 <= e16


def test_simpson_rounds_up_to_odd():
    nodes, w = axis_rule(0.0, 1.0, 8, periodic=False)
    assert len(nodes) == 9 and nodes[0] == 0 and nodes[-1] == 1
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    nodes, w = axis_rule(0.0, 1.0, 8, periodic=True)
    assert len(nodes) == 8 and nodes[-1] < 1


def test_noncompact_rejected():
    p = plane()
    with pytest.raises(NonCompactDomain):
        quad(p, flat(p), parse("1", p), G2(8))


def test_grid_minimum():
    with pytest.raises(SchemaError):
        GridSpec((3, 8))


def test_pairwise_sum_matches_fsum(rng):
    v = rng.standard_normal(10001)
    assert pairwise_sum(v) == pytest.approx(math.fsum(v), abs=1e-12)


def test_green_gradient():
    c = torus()
    r = green_check(c, flat(c), field(c, "cos(x)*sin(y)", "sin(x)*cos(y)"), G2(64))
    assert abs(r.residual) < 1e-12 and r.passes(1e-12)


def test_green_divergence_free():
    c = torus()
    r = green_check(c, flat(c), field(c, "sin(y)", "cos(x)"), G2(16))
    assert r.residual == 0 and r.abs_integral == 0


def test_green_sine_squared():
    c = torus()
    r = green_check(c, flat(c), field(c, "sin(x)^2", "0"), G2(64))
    assert abs(r.residual) < 1e-12 and r.abs_integral > 1


def test_green_curved_torus():
    c = torus()
    g = MetricSpec.from_strings(c, ["1", "(2+cos(x))^2"])
    r = green_check(c, g, field(c, "sin(x)", "cos(y)+0.5*sin(x)"), G2(64))
    assert abs(r.residual) < 1e-10 and r.abs_integral > 1


def test_green_requires_closed():
    c, g = sphere()
    with pytest.raises(NonCompactDomain):
        green_check(c, g, field(c, "0", "1"), G2(8))


def test_log_rate_gradient_changes_sign():
    c = torus()
    r = log_rate_green_check(c, flat(c), field(c, "cos(x)", "0"), G2(64))
    assert abs(r.residual) < 1e-10
    assert r.integrand_min < 0 < r.integrand_max


def test_log_rate_divergence_free():
    c = torus()
    r = log_rate_green_check(c, flat(c), field(c, "sin(y)", "cos(x)"), G2(16))
    assert r.residual == 0 and r.integrand_min == 0 == r.integrand_max


def test_log_rate_sine(frozen):
    assert frozen["sin_squared_accel_integrand_is_cos2x"]
    c = torus()
    r = log_rate_green_check(c, flat(c), field(c, "sin(x)", "0"), G2(64))
    assert abs(r.residual) < 1e-12
    assert r.integrand_min == pytest.approx(-1) and r.integrand_max == pytest.approx(1)


def test_flrw_strip_balance(frozen):
    c = flrw_chart()
    region = Region(c, ((1.0, 2.0), None, None, None))
    xi = field(c, "1", "0", "0", "0")
    r = boundary_check(region, flrw_metric(c, "t^(4/3)"), LogRateField(xi), GridSpec((32, 4, 4, 4)))
    f = frozen["flrw_matter"]
    assert r.bulk == pytest.approx(f["strip_bulk"], rel=1e-8)
    assert r.boundary == pytest.approx(f["strip_bulk"], rel=1e-8)
    assert r.faces["t:upper"] == pytest.approx(f["strip_face_upper"], rel=1e-12)
    assert r.faces["t:lower"] == pytest.approx(f["strip_face_lower"], rel=1e-12)
    assert abs(r.residual) < 1e-8


def test_zero_field_balance():
    c = flrw_chart()
    region = Region(c, ((1.0, 2.0), None, None, None))
    r = boundary_check(region, flrw_metric(c, "t^(4/3)"), field(c, "0", "0", "0", "0"), GridSpec.uniform(4, 4))
    assert (r.bulk, r.boundary, r.residual) == (0.0, 0.0, 0.0)


def test_euclidean_box():
    c = Chart(("x", "y"), bounds=((0.0, 1.0), (0.0, 1.0)))
    r = boundary_check(Region.whole(c), flat(c), field(c, "x", "0"), G2(8))
    assert r.bulk == pytest.approx(1.0, abs=1e-14) and r.boundary == pytest.approx(1.0, abs=1e-14)
    assert abs(r.residual) < 1e-12


def test_curved_box_balance():
    c = Chart(("x", "y"), bounds=((0.0, 1.0), (0.0, 2.0)))
    g = MetricSpec.from_strings(c, [["1+x^2", "0.2*x*y"], ["0.2*x*y", "2+sin(y)"]])
    r = boundary_check(Region.whole(c), g, field(c, "cos(x*y)", "x+y^2"), G2(64))
    assert abs(r.residual) < 1e-6 * max(1, abs(r.bulk))


def test_face_must_be_slice():
    c = torus()
    with pytest.raises(FaceNotSlice):
        Region(c, (None, None), faces=(Face(0, "lower"),))


def test_region_inside_chart():
    c = flrw_chart()
    with pytest.raises(SchemaError):
        Region(c, ((0.1, 2.0), None, None, None))


def test_truncated_l1_zero():
    p = plane()
    r = truncated_l1(p, flat(p), field(p, "0", "0"), Region(p, ((-1, 1), (-1, 1))), G2(8))
    assert r.value == 0


def test_gaussian_l1(frozen):
    p = plane()
    X = field(p, "exp(-x^2-y^2)", "0")
    boxes = [Region(p, ((-L, L), (-L, L))) for L in (6.0, 8.0)]
    conv = l1_convergence(p, flat(p), X, boxes, G2(128))
    assert conv["converged"]
    # independent oracle: pi * erf(L)^2
    for L, v in zip((6, 8), conv["values"]):
        assert v == pytest.approx(math.pi * math.erf(L) ** 2, abs=1e-6)
        assert v == pytest.approx(frozen["gaussian_l1"][str(L)], abs=1e-6)


def test_constant_field_not_l1():
    p = plane()
    boxes = [Region(p, ((-L, L), (-L, L))) for L in (2.0, 4.0, 8.0)]
    conv = l1_convergence(p, flat(p), field(p, "1", "0"), boxes, G2(8))
    assert not conv["converged"] and "not L1-convergent" in conv["note"]
    v = conv["values"]
    assert v[1] / v[0] == pytest.approx(4.0) and v[2] / v[1] == pytest.approx(4.0)


def test_lorentzian_l1_flags_timelike():
    c = flrw_chart()
    r = truncated_l1(c, flrw_metric(c, "t^(4/3)"), field(c, "1", "0", "0", "0"),
                     Region(c, ((1.0, 2.0), None, None, None)), GridSpec.uniform(4, 4))
    assert r.causal_warning and r.value > 0


def test_determinism_across_workers():
    c = torus()
    g = MetricSpec.from_strings(c, ["1", "(2+cos(x))^2"])
    X = field(c, "sin(x)*cos(3*y)", "cos(y)+0.5*sin(x)")
    grid = G2(160)  # several chunks
    one = green_check(c, g, X, grid, workers=1)
    for w in (2, 3, 8):
        assert green_check(c, g, X, grid, workers=w) == one


def test_flat_torus_sign_diagnostics():
    c = torus()
    out = flow_sign_diagnostics(c, flat(c), field(c, "sin(y)", "cos(x)"), G2(16))
    assert {a.status for a in out} <= {"not applicable", "applies"}
    assert all(a.sound for a in out)


def test_gradient_field_diagnostics_not_applicable():
    c = torus()
    out = flow_sign_diagnostics(c, flat(c), field(c, "cos(x)*sin(y)", "sin(x)*cos(y)"), G2(16))
    assert all(a.status == "not applicable" for a in out)
