"""Spacelike coordinate slices of shift-free Lorentzian metrics.

The metric is assumed in lapse form ``g = -N^2 dt^2 + h_ij dx^i dx^j``; the
flow is the unit normal ``xi = N^-1 d_t`` (so ``g(xi, xi) = -1``).  Extrinsic
curvature is ``K_ij = d_t h_ij / (2N)``, positive for an expanding slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprdsl
from .errors import NotLapseForm, SchemaError
from .exprdsl import Expr
from .geometry import (LORENTZIAN, Chart, LocalGeometry, LogRateField, MetricSpec,
                       VectorFieldSpec, acceleration_from_jets, acceleration_jacobian,
                       divergence_from_jets, grad_divergence)
from .integrate import (Assessment, BoundaryResult, Conclusion, GridSpec, Hypothesis, Region,
                        boundary_check, decide, pairwise_sum, sample_grid)

SIGN_TOL = 1e-9
NULL_TOL = 1e-12
ENERGY_THRESHOLD = -1e-10


def unit_normal_field(chart: Chart, g: MetricSpec, time_index: int = 0) -> VectorFieldSpec:
    """``N^-1 d_t`` as expressions: ``1 / sqrt(-g_tt)`` on the time axis."""
    gtt = g.components[time_index][time_index]
    comp = exprdsl.BinOp("/", exprdsl.Num(1.0), exprdsl.Call("sqrt", exprdsl.Neg(gtt)))
    return VectorFieldSpec(tuple(comp if k == time_index else exprdsl.Num(0.0)
                                 for k in range(chart.n)))


@dataclass(frozen=True)
class SliceSpec:
    """The hypersurface ``{x^t = value}`` with its unit normal flow."""

    chart: Chart
    g: MetricSpec
    time_index: int
    value: float
    validate_samples: int = 20
    seed: int = 0
    xi: VectorFieldSpec = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        c = self.chart
        if c.signature != LORENTZIAN:
            raise SchemaError("slices need a Lorentzian chart", "chart.signature")
        if not 0 <= self.time_index < c.n:
            raise SchemaError("slice coordinate out of range", "slice.coordinate")
        if c.periods[self.time_index] is not None:
            raise SchemaError("the slice coordinate cannot be periodic", "slice.coordinate")
        b = c.bounds[self.time_index]
        if b is not None and not b[0] <= self.value <= b[1]:
            raise SchemaError("slice value outside the chart bounds", "slice.value")
        object.__setattr__(self, "xi", unit_normal_field(c, self.g, self.time_index))
        if self.validate_samples:
            rng = np.random.default_rng(self.seed)
            pts = c.sample(rng, self.validate_samples)
            pts[0, self.time_index] = self.value
            self.check_lapse_form(pts)

    @property
    def spatial(self) -> list[int]:
        return [k for k in range(self.chart.n) if k != self.time_index]

    @property
    def closed(self) -> bool:
        return all(self.chart.periods[k] is not None for k in self.spatial)

    def check_lapse_form(self, pts: np.ndarray) -> None:
        geo = LocalGeometry(self.chart, self.g, pts)
        t, s = self.time_index, self.spatial
        shift = np.max(np.abs(geo.g[:, t, s]))
        if shift > 1e-12:
            raise NotLapseForm(f"time-space metric components reach {shift:.3e}")
        if np.any(geo.g[:, t, t] >= 0):
            raise NotLapseForm("g_tt must be negative (lapse N > 0)")
        h = geo.g[:, s][:, :, s]
        if np.any(np.linalg.eigvalsh(h) <= 0):
            raise NotLapseForm("spatial metric is not positive definite")

    def full_points(self, p_spatial) -> tuple[np.ndarray, bool]:
        ps = np.asarray(p_spatial, dtype=float)
        single = ps.ndim == 1
        ps = np.atleast_2d(ps)
        if ps.shape[1] != self.chart.n - 1:
            raise ValueError(f"expected {self.chart.n - 1} spatial coordinates")
        pts = np.insert(ps, self.time_index, self.value, axis=1)
        return pts, single


# --------------------------------------------------------------------------
# Pointwise quantities

@dataclass(frozen=True)
class CausalResult:
    kind: str
    norm: float
    unit: np.ndarray | None


def causal_classify(chart: Chart, g: MetricSpec, X, p, tol: float = NULL_TOL) -> CausalResult:
    """Timelike / spacelike / null by the sign of ``g(X, X)``, plus ``X/|X|``."""
    geo = LocalGeometry(chart, g, np.asarray(p, dtype=float))
    vals = X.jets(geo, 0)[0][0]
    n2 = float(vals @ geo.g[0] @ vals)
    if abs(n2) <= tol:
        return CausalResult("null", n2, None)
    kind = "timelike" if n2 < 0 else "spacelike"
    return CausalResult(kind, n2, vals / np.sqrt(abs(n2)))


@dataclass(frozen=True)
class ShearPack:
    K: np.ndarray
    theta: np.ndarray | float
    sigma: np.ndarray
    sigma_norm2: np.ndarray | float


def _shear(geo: LocalGeometry, t: int, s: list[int]):
    lapse = np.sqrt(-geo.g[:, t, t])
    h = geo.g[:, s][:, :, s]
    K = geo.dg[:, s][:, :, s][..., t] / (2.0 * lapse[:, None, None])
    hinv = np.linalg.inv(h)
    theta = np.einsum("pij,pij->p", hinv, K)
    sigma = K - (theta / len(s))[:, None, None] * h
    s2 = np.einsum("pik,pjl,pij,pkl->p", hinv, hinv, sigma, sigma, optimize=True)
    knorm = np.sqrt(np.abs(np.einsum("pik,pjl,pij,pkl->p", hinv, hinv, K, K, optimize=True)))
    return K, theta, sigma, s2, knorm


def extrinsic_geometry(sl: SliceSpec, p_spatial) -> ShearPack:
    """Second fundamental form of the slice, split into trace and traceless part."""
    pts, single = sl.full_points(p_spatial)
    geo = LocalGeometry(sl.chart, sl.g, pts).prefetch(1)
    K, theta, sigma, s2, _ = _shear(geo, sl.time_index, sl.spatial)
    if single:
        return ShearPack(K[0], float(theta[0]), sigma[0], float(s2[0]))
    return ShearPack(K, theta, sigma, s2)


@dataclass
class SliceTerms:
    """Pointwise terms of the Raychaudhuri identity for the normal flow."""

    points: np.ndarray
    lhs: np.ndarray            # div of the acceleration vector
    ricci: np.ndarray          # Ric(xi, xi)
    shear: np.ndarray          # g(sigma, sigma)
    expansion: np.ndarray      # (div xi)^2 / (n - 1)
    lie_expansion: np.ndarray  # xi(div xi)
    theta: np.ndarray          # div xi
    theta_extrinsic: np.ndarray
    k_norm: np.ndarray
    accel_norm2: np.ndarray
    slice_density: np.ndarray  # sqrt det h

    @property
    def rhs(self) -> np.ndarray:
        return self.ricci + self.shear + self.expansion + self.lie_expansion

    @property
    def residual(self) -> np.ndarray:
        return self.lhs - self.rhs


def slice_terms(sl: SliceSpec, points) -> SliceTerms:
    """Evaluate every term at full spacetime points (any time value)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    geo = LocalGeometry(sl.chart, sl.g, pts).prefetch(2)
    X, dX, ddX = sl.xi.jets(geo, 2)
    theta = divergence_from_jets(geo, X, dX)
    lie = np.einsum("pm,pm->p", X, grad_divergence(geo, X, dX, ddX))
    acc = acceleration_from_jets(geo, X, dX)
    jac = acceleration_jacobian(geo, X, dX, ddX)
    div_acc = np.einsum("pkk->p", jac) + np.einsum("pk,pk->p", acc, geo.logvol_grad)
    ric = np.einsum("pab,pa,pb->p", geo.ricci, X, X, optimize=True)
    t, s = sl.time_index, sl.spatial
    _, theta_k, _, s2, knorm = _shear(geo, t, s)
    n = sl.chart.n
    h = geo.g[:, s][:, :, s]
    return SliceTerms(
        points=pts, lhs=div_acc, ricci=ric, shear=s2, expansion=theta * theta / (n - 1),
        lie_expansion=lie, theta=theta, theta_extrinsic=theta_k, k_norm=knorm,
        accel_norm2=np.einsum("pi,pij,pj->p", acc, geo.g, acc, optimize=True),
        slice_density=np.sqrt(np.linalg.det(h)))


@dataclass(frozen=True)
class RaychaudhuriResult:
    lhs: np.ndarray | float
    rhs_terms: dict
    residual: np.ndarray | float


def raychaudhuri_residual(sl: SliceSpec, p_spatial) -> RaychaudhuriResult:
    """``div(nabla_xi xi)`` against ``Ric(xi,xi) + g(sigma,sigma) +
    (div xi)^2/(n-1) + xi(div xi)``, each term reported."""
    pts, single = sl.full_points(p_spatial)
    T = slice_terms(sl, pts)
    pick = (lambda a: float(a[0])) if single else (lambda a: a)
    terms = {"ricci": pick(T.ricci), "shear": pick(T.shear),
             "expansion": pick(T.expansion), "lie_expansion": pick(T.lie_expansion)}
    return RaychaudhuriResult(pick(T.lhs), terms, pick(T.residual))


@dataclass(frozen=True)
class FluidParams:
    mu: Expr
    rho: Expr


@dataclass(frozen=True)
class FluidComparison:
    fluid: np.ndarray | float
    ricci: np.ndarray | float
    gap: np.ndarray | float


def perfect_fluid_ricci(chart: Chart, g: MetricSpec, fluid: FluidParams, points,
                        time_index: int = 0) -> FluidComparison:
    """``4 pi (mu + 3 rho)`` against the geometric ``Ric(xi, xi)``."""
    arr = np.asarray(points, dtype=float)
    single = arr.ndim == 1
    pts = np.atleast_2d(arr)
    mu = exprdsl.eval_jet(fluid.mu, pts, order=0).value
    rho = exprdsl.eval_jet(fluid.rho, pts, order=0).value
    model = 4.0 * np.pi * (mu + 3.0 * rho)
    geo = LocalGeometry(chart, g, pts).prefetch(2)
    X = unit_normal_field(chart, g, time_index).jets(geo, 0)[0]
    ric = np.einsum("pab,pa,pb->p", geo.ricci, X, X, optimize=True)
    gap = model - ric
    if single:
        return FluidComparison(float(model[0]), float(ric[0]), float(gap[0]))
    return FluidComparison(model, ric, gap)


# --------------------------------------------------------------------------
# Slice integrals

def _slice_region(sl: SliceSpec) -> Region:
    # the time axis is pinned by ``fixed``, so its range is never consulted
    return Region.whole(sl.chart)


@dataclass
class SliceSamples:
    """Slice terms on a quadrature grid; ``weights`` include ``sqrt det h``."""

    terms: SliceTerms
    weights: np.ndarray
    closed: bool

    def integral(self, values: np.ndarray) -> float:
        return pairwise_sum(self.weights * values)

    @property
    def volume(self) -> float:
        return pairwise_sum(self.weights)


def sample_slice(sl: SliceSpec, grid: GridSpec, workers: int = 1) -> SliceSamples:
    names = list(SliceTerms.__dataclass_fields__)

    def fn(pts):
        T = slice_terms(sl, pts)
        return {f: getattr(T, f) for f in names}

    w, vals = sample_grid(_slice_region(sl), grid, fn, fixed={sl.time_index: sl.value},
                          workers=workers)
    terms = SliceTerms(**vals)
    return SliceSamples(terms, w * terms.slice_density, sl.closed)


def slice_volume(sl: SliceSpec, grid: GridSpec) -> float:
    def fn(pts):
        geo = LocalGeometry(sl.chart, sl.g, pts)
        h = geo.g[:, sl.spatial][:, :, sl.spatial]
        return np.sqrt(np.linalg.det(h))

    w, v = sample_grid(_slice_region(sl), grid, fn, fixed={sl.time_index: sl.value})
    return pairwise_sum(w * v)


@dataclass(frozen=True)
class SliceIntegral:
    integral: float
    volume: float
    terms: dict
    integrand_min: float
    integrand_max: float
    accel_norm2_integral: float

    def passes(self, tol: float) -> bool:
        return abs(self.integral) <= tol * self.volume


def closed_slice_integral(sl: SliceSpec, grid: GridSpec, samples: SliceSamples | None = None
                          ) -> SliceIntegral:
    """Integral over a closed slice of the Raychaudhuri right-hand side.

    By the identity this is the integral of ``div(nabla_xi xi)``, which
    vanishes when the acceleration is zero on the slice (constant lapse
    there); ``accel_norm2_integral`` is the leftover otherwise.
    """
    if not sl.closed:
        raise SchemaError("every spatial coordinate must be periodic for a closed slice", "chart")
    S = samples or sample_slice(sl, grid)
    T = S.terms
    rhs = T.rhs
    terms = {name: S.integral(getattr(T, name))
             for name in ("ricci", "shear", "expansion", "lie_expansion")}
    return SliceIntegral(S.integral(rhs), S.volume, terms, float(rhs.min()), float(rhs.max()),
                         S.integral(T.accel_norm2))


def energy_condition_scan(sl: SliceSpec, grid: GridSpec, samples: SliceSamples | None = None,
                          threshold: float = ENERGY_THRESHOLD) -> dict:
    """``Ric(xi, xi)`` over the slice grid: extremes and violation fraction."""
    S = samples or sample_slice(sl, grid)
    r = S.terms.ricci
    return {"min": float(r.min()), "max": float(r.max()),
            "violation_fraction": float(np.mean(r < threshold)), "threshold": threshold,
            "satisfied": bool(np.all(r >= threshold))}


# --------------------------------------------------------------------------
# Hypothesis / conclusion reports

def _min_hyp(name: str, values: np.ndarray, pts: np.ndarray, tol: float) -> Hypothesis:
    k = int(np.argmin(values))
    return Hypothesis(name, bool(values[k] >= -tol), float(values[k]), pts[k].tolist(), tol)


def _max_hyp(name: str, values: np.ndarray, pts: np.ndarray, tol: float) -> Hypothesis:
    k = int(np.argmax(values))
    return Hypothesis(name, bool(values[k] > tol), float(values[k]), pts[k].tolist(), tol)


def assess_slice(samples: SliceSamples, tol: float = SIGN_TOL, conclusion_tol: float = 1e-6,
                 integral_tol: float = 1e-6) -> list[Assessment]:
    """Closed-slice obstruction and totally-geodesic assertions from samples.

    Takes precomputed samples so that deliberately inconsistent data can be
    fed in to exercise the contradiction path.
    """
    T = samples.terms
    pts = T.points
    ric = _min_hyp("ricci_nonnegative", T.ricci, pts, tol)
    lie = _min_hyp("lie_expansion_nonnegative", T.lie_expansion, pts, tol)
    strict = _max_hyp("lie_expansion_positive_somewhere", T.lie_expansion, pts, tol)
    closed = Hypothesis("slice_closed", samples.closed)
    out = []

    rhs_int = samples.integral(T.rhs) if samples.closed else float("nan")
    vol = samples.volume
    balanced = samples.closed and abs(rhs_int) <= integral_tol * vol
    if balanced:
        na = f"closed slice consistent with the integral relation (integral {rhs_int:.3e})"
    elif samples.closed:
        na = f"closed slice integral {rhs_int:.3e} does not vanish"
    else:
        na = ""
    out.append(decide(
        "closed_slice_obstruction", [ric, lie, strict, closed],
        [Conclusion("slice_not_closed", 1.0, 0.0, False)],
        note_na=na,
        note_bad=("contradiction detected: the data violate the Raychaudhuri identity "
                  f"tolerance or the model (closed-slice integral {rhs_int:.3e})")))

    integrable = Hypothesis("acceleration_integrable", samples.closed)
    kmax = float(np.max(T.k_norm))
    out.append(decide(
        "totally_geodesic_slice", [ric, lie, integrable],
        [Conclusion("max_extrinsic_curvature_norm", kmax, conclusion_tol, kmax <= conclusion_tol)],
        note_na=("" if samples.closed else "noncompact slice: integrability is not verifiable"),
        note_ok="conclusion consistent: K = 0 (totally geodesic)",
        note_bad="hypotheses hold but the slice is not totally geodesic"))
    return out


def region_assessment(sl: SliceSpec, window: tuple[float, float], grid: GridSpec,
                      tol: float = SIGN_TOL) -> tuple[Assessment, BoundaryResult]:
    """Expanding-region obstruction on ``window x (spatial slice)``.

    Needs ``xi(div xi) >= 0`` on the region, nonzero somewhere, vanishing
    expansion on the slice, and a region whose boundary is that slice alone.
    Product strips always have two time faces, so the last hypothesis fails
    for them and only the divergence balance is reported.
    """
    t = sl.time_index
    bounds = tuple(tuple(window) if k == t else None for k in range(sl.chart.n))
    region = Region(sl.chart, bounds)
    bal = boundary_check(region, sl.g, LogRateField(sl.xi), grid)

    def fn(pts):
        T = slice_terms(sl, pts)
        return {"lie": T.lie_expansion, "pts": pts.copy()}

    _, v = sample_grid(region, grid, fn)
    lie_n = _min_hyp("lie_expansion_nonnegative_in_region", v["lie"], v["pts"], tol)
    strict = _max_hyp("lie_expansion_positive_in_region", v["lie"], v["pts"], tol)
    theta_slice = sample_slice(sl, grid).terms.theta
    tmax = float(np.max(np.abs(theta_slice)))
    vanish = Hypothesis("expansion_vanishes_on_slice", tmax <= 1e-6, tmax, None, 1e-6)
    single = Hypothesis("boundary_is_the_slice", len(region.faces) == 1)
    a = decide("expanding_region_obstruction", [lie_n, strict, vanish, single],
               [Conclusion("hypotheses_jointly_satisfiable", 1.0, 0.0, False)],
               note_na=f"divergence balance bulk {bal.bulk:.6g} vs boundary {bal.boundary:.6g}",
               note_bad="data satisfy hypotheses that cannot hold together")
    return a, bal


def theorem_diagnostics(sl: SliceSpec, grid: GridSpec, window: tuple[float, float] | None = None,
                        tol: float = SIGN_TOL) -> dict:
    """Hypothesis telemetry and verdicts for the slice assertions.

    Never reports an assertion as applying unless all of its hypotheses
    pass their thresholds.
    """
    S = sample_slice(sl, grid)
    out = {"assessments": assess_slice(S, tol), "energy": energy_condition_scan(sl, grid, S)}
    if sl.closed:
        out["closed_slice_integral"] = closed_slice_integral(sl, grid, S)
    if window is not None:
        a, bal = region_assessment(sl, window, grid, tol)
        out["assessments"].append(a)
        out["region_balance"] = bal
    return out
