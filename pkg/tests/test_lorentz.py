import math

import numpy as np
import pytest

from conftest import TWO_PI, field, flrw_chart, flrw_metric
from volex import exprdsl
from volex.errors import NotLapseForm, SchemaError
from volex.geometry import LORENTZIAN, Chart, MetricSpec
from volex.integrate import GridSpec
from volex.lorentz import (FluidParams, SliceSamples, SliceSpec, causal_classify,
                           closed_slice_integral, energy_condition_scan, extrinsic_geometry,
                           perfect_fluid_ricci, raychaudhuri_residual, region_assessment,
                           sample_slice, slice_terms, slice_volume, theorem_diagnostics, assess_slice)
from volex.scenario import catalog, load_scenario

G4 = lambda n: GridSpec.uniform(4, n)  # noqa: E731


def matter():
    c = flrw_chart()
    return c, flrw_metric(c, "t^(4/3)")


def desitter():
    c = flrw_chart((0.0, 2.0))
    return c, flrw_metric(c, "exp(2*t)")


def kasner():
    c = flrw_chart((0.5, 2.0))
    return c, MetricSpec.from_strings(c, ["-1", "t^(4/3)", "t^(4/3)", "t^(-2/3)"])


def static():
    c = flrw_chart((-1.0, 1.0))
    return c, MetricSpec.from_strings(c, ["-1", "1", "1", "1"])


def lapse_family(name):
    c = Chart(("t", "x", "y", "z"), LORENTZIAN, (None, TWO_PI, TWO_PI, TWO_PI), ((-3.0, 3.0), None, None, None))
    if name == "unit_lapse":
        h = "1 + 0.1*sin(t + x)"
        return c, MetricSpec.from_strings(c, ["-1", h, h, h])
    return c, MetricSpec.from_strings(c, ["-(1 + 0.3*sin(x)*cos(t))^2", "1 + 0.1*sin(t + x)",
                                          "exp(0.2*cos(y + t))", "1 + 0.2*t^2"])


def test_causal_types():
    c, g = matter()
    r = causal_classify(c, g, field(c, "1", "0", "0", "0"), [1.3, 0, 0, 0])
    assert r.kind == "timelike" and r.norm == -1.0 and r.unit.tolist() == [1, 0, 0, 0]
    r = causal_classify(c, g, field(c, "0", "1", "0", "0"), [1.0, 0, 0, 0])
    assert r.kind == "spacelike" and r.norm == pytest.approx(1.0)
    m = Chart(("t", "x", "y"), LORENTZIAN)
    r = causal_classify(m, MetricSpec.from_strings(m, ["-1", "1", "1"]), field(m, "1", "1", "0"), [0, 0, 0])
    assert r.kind == "null" and r.unit is None


def test_matter_extrinsic(frozen):
    c, g = matter()
    e = extrinsic_geometry(SliceSpec(c, g, 0, 1.0), [0.1, 0.2, 0.3])
    assert np.allclose(e.K, frozen["flrw_matter"]["K_xx"] * np.eye(3), atol=1e-14)
    assert e.theta == pytest.approx(frozen["flrw_matter"]["terms"]["theta"], abs=1e-13)
    assert np.max(np.abs(e.sigma)) < 1e-14


def test_static_totally_geodesic():
    c, g = static()
    e = extrinsic_geometry(SliceSpec(c, g, 0, 0.0), [0.1, 0.2, 0.3])
    assert np.all(e.K == 0) and e.theta == 0


def test_kasner_shear(frozen):
    c, g = kasner()
    e = extrinsic_geometry(SliceSpec(c, g, 0, 1.0), [0.4, 0.5, 0.6])
    assert e.theta == pytest.approx(frozen["kasner_like"]["terms"]["theta"], abs=1e-13)
    assert e.sigma_norm2 == pytest.approx(frozen["kasner_like"]["terms"]["shear"], abs=1e-6)
    hinv = np.diag([1.0, 1.0, 1.0])
    assert abs(np.trace(hinv @ e.sigma)) < 1e-10


def _check_terms(res, ref, tol):
    for k in ("ricci", "shear", "expansion", "lie_expansion"):
        assert res.rhs_terms[k] == pytest.approx(ref[k], abs=tol), k
    assert abs(res.residual) < tol


def test_matter_raychaudhuri(frozen):
    c, g = matter()
    _check_terms(raychaudhuri_residual(SliceSpec(c, g, 0, 1.0), [0.1, 0.2, 0.3]),
                 frozen["flrw_matter"]["terms"], 1e-7)


def test_desitter_raychaudhuri(frozen):
    c, g = desitter()
    _check_terms(raychaudhuri_residual(SliceSpec(c, g, 0, 1.0), [0.1, 0.2, 0.3]),
                 frozen["flrw_desitter"]["terms"], 1e-8)


@pytest.mark.parametrize("name", ["unit_lapse", "wavy_lapse"])
def test_lapse_family_terms_match_symbolic(frozen, name):
    c, g = lapse_family(name)
    ref = frozen["lapse_family"]
    T = slice_terms(SliceSpec(c, g, 0, 0.0), np.array(ref["points"]))
    for k in ("lhs", "ricci", "shear", "expansion", "lie_expansion", "theta", "accel_norm2"):
        assert np.allclose(getattr(T, k), ref[name][k], rtol=1e-8, atol=1e-9), k


@pytest.mark.parametrize("name", ["unit_lapse", "wavy_lapse"])
def test_lapse_family_residual_random(name, rng):
    c, g = lapse_family(name)
    pts = c.sample(rng, 50, margin=0.05)
    T = slice_terms(SliceSpec(c, g, 0, 0.0), pts)
    assert np.max(np.abs(T.residual)) < 1e-6
    assert np.max(np.abs(T.theta - T.theta_extrinsic)) < 1e-10
    assert np.min(T.shear) >= -1e-12


def test_theta_matches_divergence_on_catalog():
    for name in catalog():
        s = load_scenario(name)
        if s.slice_at is None:
            continue
        sl = s.slice_spec()
        T = sample_slice(sl, G4(8)).terms
        assert np.max(np.abs(T.theta - T.theta_extrinsic)) < 1e-10, name


def test_closed_integral_matter():
    c, g = matter()
    I = closed_slice_integral(SliceSpec(c, g, 0, 1.0), G4(16))
    assert abs(I.integral) < 1e-8 and I.volume == pytest.approx(1.0)
    assert I.terms["ricci"] == pytest.approx(2 / 3) and I.terms["lie_expansion"] == pytest.approx(-2)


def test_closed_integral_unit_lapse():
    c, g = lapse_family("unit_lapse")
    I = closed_slice_integral(SliceSpec(c, g, 0, 0.5), GridSpec((4, 32, 8, 8)))
    assert abs(I.integral) < 1e-6 * I.volume
    assert I.terms["ricci"] != 0 and I.terms["lie_expansion"] != 0


def test_closed_integral_equals_acceleration_norm():
    """With varying lapse the integral is the acceleration norm, not zero."""
    c, g = lapse_family("wavy_lapse")
    I = closed_slice_integral(SliceSpec(c, g, 0, 0.4), GridSpec((4, 32, 32, 8)))
    assert I.integral == pytest.approx(I.accel_norm2_integral, rel=1e-8)
    assert I.accel_norm2_integral > 1e-3


def test_closed_integral_static():
    c, g = static()
    assert closed_slice_integral(SliceSpec(c, g, 0, 0.0), G4(8)).integral == 0


def test_closed_integral_needs_periodic_space():
    c = Chart(("t", "x", "y"), LORENTZIAN, (None, 1.0, None), ((0, 1), None, (0, 1)))
    sl = SliceSpec(c, MetricSpec.from_strings(c, ["-1", "1", "1"]), 0, 0.5)
    with pytest.raises(SchemaError):
        closed_slice_integral(sl, GridSpec.uniform(3, 8))


def test_slice_volumes():
    c, g = matter()
    assert slice_volume(SliceSpec(c, g, 0, 1.0), G4(8)) == pytest.approx(1.0, rel=1e-14)
    c, g = desitter()
    assert slice_volume(SliceSpec(c, g, 0, 1.0), G4(8)) == pytest.approx(math.exp(3), rel=1e-14)


def test_perfect_fluid_matter(frozen):
    c, g = matter()
    fl = FluidParams(exprdsl.parse("1/(6*pi*t^2)", c), exprdsl.parse("0", c))
    r = perfect_fluid_ricci(c, g, fl, [1.0, 0, 0, 0])
    assert r.fluid == pytest.approx(frozen["flrw_matter"]["fluid_4pi_mu"], abs=1e-14)
    assert abs(r.gap) < 1e-7
    pts = np.column_stack([np.linspace(1, 2, 20), np.zeros((20, 3))])
    assert np.max(np.abs(perfect_fluid_ricci(c, g, fl, pts).gap)) < 1e-7


def test_perfect_fluid_vacuum_and_desitter(frozen):
    c, g = static()
    z = exprdsl.parse("0", c)
    r = perfect_fluid_ricci(c, g, FluidParams(z, z), [0.2, 0.1, 0.1, 0.1])
    assert r.fluid == 0 and r.ricci == 0
    c, g = desitter()
    fl = FluidParams(exprdsl.parse("3/(8*pi)", c), exprdsl.parse("-3/(8*pi)", c))
    r = perfect_fluid_ricci(c, g, fl, [1.0, 0, 0, 0])
    assert r.fluid == pytest.approx(frozen["flrw_desitter"]["fluid_model"], abs=1e-14)
    assert abs(r.gap) < 1e-7


def test_energy_scans():
    c, g = matter()
    e = energy_condition_scan(SliceSpec(c, g, 0, 1.0), G4(8))
    assert e["min"] == pytest.approx(2 / 3) and e["violation_fraction"] == 0
    c, g = desitter()
    e = energy_condition_scan(SliceSpec(c, g, 0, 1.0), G4(8))
    assert e["max"] == pytest.approx(-3) and e["violation_fraction"] == 1.0
    c, g = static()
    e = energy_condition_scan(SliceSpec(c, g, 0, 0.0), G4(8))
    assert e["min"] == 0 and e["satisfied"]


def test_shift_rejected():
    c = flrw_chart()
    g = MetricSpec.from_strings(c, [["-1", "0.1", "0", "0"], ["0.1", "1", "0", "0"],
                                    ["0", "0", "1", "0"], ["0", "0", "0", "1"]])
    with pytest.raises(NotLapseForm):
        SliceSpec(c, g, 0, 1.0)


def test_slice_value_in_bounds():
    c, g = matter()
    with pytest.raises(SchemaError):
        SliceSpec(c, g, 0, 3.0)


def test_matter_diagnostics_witness():
    c, g = matter()
    d = theorem_diagnostics(SliceSpec(c, g, 0, 1.0), G4(8))
    first = d["assessments"][0]
    assert first.name == "closed_slice_obstruction" and first.status == "not applicable"
    lie = next(h for h in first.hypotheses if h.name == "lie_expansion_nonnegative")
    assert not lie.holds and lie.value == pytest.approx(-2.0, abs=1e-12) and lie.witness[0] == 1.0
    assert "consistent with the integral relation" in first.note
    assert all(a.sound for a in d["assessments"])


def test_static_diagnostics_totally_geodesic():
    c, g = static()
    d = theorem_diagnostics(SliceSpec(c, g, 0, 0.0), G4(8))
    tg = next(a for a in d["assessments"] if a.name == "totally_geodesic_slice")
    assert tg.status == "applies" and "K = 0" in tg.note


def test_injected_inconsistent_samples_flag_contradiction():
    """Samples with Ric >= 0, xi(div xi) >= 0 and a strict point on a closed
    slice cannot come from a real metric; the report must say so."""
    c, g = matter()
    S = sample_slice(SliceSpec(c, g, 0, 1.0), G4(8))
    T = S.terms
    bump = np.exp(-np.sum((T.points[:, 1:] - 0.5) ** 2, axis=1) * 20)
    T.lie_expansion = bump
    T.ricci = np.abs(T.ricci)
    T.lhs = np.zeros_like(T.lhs)
    out = assess_slice(SliceSamples(T, S.weights, closed=True))
    first = out[0]
    assert first.status == "contradiction"
    assert "contradiction detected" in first.note
    assert S.integral(T.rhs) > 0


def test_region_assessment_strip():
    c, g = matter()
    a, bal = region_assessment(SliceSpec(c, g, 0, 1.0), (1.0, 2.0), GridSpec((16, 4, 4, 4)))
    assert a.status == "not applicable" and a.sound
    assert bal.bulk == pytest.approx(2.0, rel=1e-8) and bal.boundary == pytest.approx(2.0, rel=1e-8)


@pytest.mark.parametrize("name", [n for n in catalog() if load_scenario(n).slice_at is not None])
def test_catalog_diagnostics_sound(name):
    s = load_scenario(name)
    d = theorem_diagnostics(s.slice_spec(), G4(8))
    for a in d["assessments"]:
        assert a.sound
        if a.status == "applies":
            assert all(h.holds for h in a.hypotheses)
