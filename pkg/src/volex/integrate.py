"""Quadrature on compact product domains and the integral identities built on it.

Periodic axes use the composite trapezoid rule (spectrally accurate for smooth
periodic integrands), bounded axes use composite Simpson with an odd node
count.  Weighted node values are reduced with a fixed pairwise tree, so the
result does not depend on chunking or on the number of worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exprdsl
from .errors import FaceNotSlice, NonCompactDomain, SchemaError
from .geometry import (Chart, LocalGeometry, LogRateField, MetricSpec, VectorFieldSpec,
                       divergence_from_jets, grad_divergence)

CHUNK = 4096


def pairwise_sum(values) -> float:
    """Sum by repeated halving; the tree shape depends only on the length."""
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        return 0.0
    while x.size > 1:
        if x.size % 2:
            x = np.append(x, 0.0)
        x = x[0::2] + x[1::2]
    return float(x[0])


@dataclass(frozen=True)
class GridSpec:
    """Per-axis sample counts (each >= 4)."""

    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 4 for c in self.counts):
            raise SchemaError("grid counts must be >= 4", "grid")

    @classmethod
    def uniform(cls, n: int, count: int) -> "GridSpec":
        return cls((count,) * n)


@dataclass(frozen=True)
class Face:
    axis: int
    side: str  # "lower" | "upper"


@dataclass(frozen=True)
class Region:
    """Sub-box of a chart with the faces that bound it.

    ``bounds[k]`` restricts axis ``k``; ``None`` keeps the chart's own range
    (a full period for periodic axes).  Faces default to both ends of every
    non-periodic axis.
    """

    chart: Chart
    bounds: tuple[tuple[float, float] | None, ...]
    faces: tuple[Face, ...] | None = None

    def __post_init__(self):
        c = self.chart
        if len(self.bounds) != c.n:
            raise SchemaError("region bounds length differs from dimension", "region")
        for k, b in enumerate(self.bounds):
            if b is None:
                continue
            if not b[0] < b[1]:
                raise SchemaError("region bounds must satisfy lo < hi", f"region.{c.names[k]}")
            cb = c.bounds[k]
            if cb is not None and (b[0] < cb[0] or b[1] > cb[1]):
                raise SchemaError("region leaves the chart bounds", f"region.{c.names[k]}")
            per = c.periods[k]
            if per is not None and (b[0] < 0 or b[1] > per):
                raise SchemaError("region leaves the periodic range", f"region.{c.names[k]}")
        if self.faces is None:
            faces = []
            for k in range(c.n):
                if self.axis_kind(k) == "bounded":
                    faces += [Face(k, "lower"), Face(k, "upper")]
            object.__setattr__(self, "faces", tuple(faces))
        for f in self.faces:
            if not (0 <= f.axis < c.n) or f.side not in ("lower", "upper"):
                raise FaceNotSlice(f"face {f} is not a coordinate slice of the region")
            if self.axis_kind(f.axis) != "bounded":
                raise FaceNotSlice(f"axis {c.names[f.axis]!r} is periodic in the region and has no face")

    @classmethod
    def whole(cls, chart: Chart) -> "Region":
        return cls(chart, (None,) * chart.n)

    def axis_kind(self, k: int) -> str:
        if self.bounds[k] is not None:
            return "bounded"
        if self.chart.periods[k] is not None:
            return "periodic"
        if self.chart.bounds[k] is not None:
            return "bounded"
        return "unbounded"

    def interval(self, k: int) -> tuple[float, float]:
        if self.bounds[k] is not None:
            return self.bounds[k]
        if self.chart.periods[k] is not None:
            return (0.0, self.chart.periods[k])
        if self.chart.bounds[k] is not None:
            return self.chart.bounds[k]
        raise NonCompactDomain(f"coordinate {self.chart.names[k]!r} is unbounded; give a region")

    def measure(self) -> float:
        return float(np.prod([b - a for a, b in (self.interval(k) for k in range(self.chart.n))]))


def axis_rule(lo: float, hi: float, count: int, periodic: bool) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on one axis."""
    if periodic:
        h = (hi - lo) / count
        return lo + h * np.arange(count), np.full(count, h)
    if count % 2 == 0:
        count += 1
    nodes = np.linspace(lo, hi, count)
    h = (hi - lo) / (count - 1)
    w = np.full(count, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return nodes, w * (h / 3.0)


def _rules(region: Region, grid: GridSpec, fixed: dict[int, float] | None = None):
    chart = region.chart
    if len(grid.counts) != chart.n:
        raise SchemaError(f"grid needs {chart.n} counts", "grid")
    rules = []
    for k in range(chart.n):
        if fixed and k in fixed:
            rules.append((np.array([fixed[k]]), np.array([1.0])))
            continue
        lo, hi = region.interval(k)
        rules.append(axis_rule(lo, hi, grid.counts[k], region.axis_kind(k) == "periodic"))
    return rules


def tensor_nodes(rules, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    shape = tuple(len(r[0]) for r in rules)
    idx = np.unravel_index(np.arange(start, stop), shape)
    pts = np.stack([r[0][i] for r, i in zip(rules, idx)], axis=-1)
    w = np.ones(stop - start)
    for r, i in zip(rules, idx):
        w = w * r[1][i]
    return pts, w


def sample_grid(region: Region, grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray | dict],
                fixed: dict[int, float] | None = None, workers: int = 1):
    """Evaluate ``fn(points)`` chunk by chunk over the tensor grid.

    Returns ``(weights, values)``; ``values`` is an array or a dict of arrays
    if ``fn`` returns a dict.  Chunk order is preserved under threading.
    """
    rules = _rules(region, grid, fixed)
    total = int(np.prod([len(r[0]) for r in rules]))
    bounds = [(s, min(s + CHUNK, total)) for s in range(0, total, CHUNK)]

    def run(b):
        pts, w = tensor_nodes(rules, *b)
        return w, fn(pts)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    weights = np.concatenate([p[0] for p in parts])
    if isinstance(parts[0][1], dict):
        vals = {k: np.concatenate([p[1][k] for p in parts]) for k in parts[0][1]}
    else:
        vals = np.concatenate([p[1] for p in parts])
    return weights, vals


def _scalar_fn(f) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, exprdsl.Expr):
        return lambda pts: exprdsl.eval_jet(f, pts, order=0).value
    return f


def integrate_density(region: Region, grid: GridSpec, density, workers: int = 1) -> float:
    """Coordinate integral of ``density(points)`` (volume factor included by caller)."""
    w, v = sample_grid(region, grid, density, workers=workers)
    return pairwise_sum(w * v)


def quad(chart: Chart, g: MetricSpec, f, grid: GridSpec, region: Region | None = None,
         workers: int = 1) -> float:
    """``integral f dv`` with ``dv = sqrt|det g| dx``.

    ``f`` is an expression or a callable mapping ``(P, n)`` points to values.

    Raises
    ------
    NonCompactDomain
        Some coordinate is neither periodic nor bounded (pass a region).
    SingularMetric
        The metric degenerates at a node.
    """
    region = region or Region.whole(chart)
    fn = _scalar_fn(f)

    def density(pts):
        return fn(pts) * LocalGeometry(chart, g, pts).sqrt_abs_det

    return integrate_density(region, grid, density, workers)


def total_volume(chart: Chart, g: MetricSpec, grid: GridSpec, region: Region | None = None,
                 workers: int = 1) -> float:
    vol = quad(chart, g, lambda pts: np.ones(len(pts)), grid, region, workers)
    if not vol > 0:
        raise NonCompactDomain(f"non-positive volume {vol!r}")
    return vol


@dataclass(frozen=True)
class GreenResult:
    """Integral of a divergence over a closed domain and its natural scale."""

    residual: float
    abs_integral: float
    integrand_min: float = 0.0
    integrand_max: float = 0.0

    def passes(self, tol: float) -> bool:
        return abs(self.residual) <= tol * (1.0 + self.abs_integral)


def _require_closed(region: Region) -> None:
    for k in range(region.chart.n):
        if region.axis_kind(k) != "periodic":
            raise NonCompactDomain(
                f"coordinate {region.chart.names[k]!r} is not periodic; the domain has a boundary")


def _green(chart, g, integrand, grid, workers, order: int) -> GreenResult:
    region = Region.whole(chart)
    _require_closed(region)

    def fn(pts):
        geo = LocalGeometry(chart, g, pts).prefetch(order)
        return {"f": integrand(geo), "vol": geo.sqrt_abs_det}

    w, vals = sample_grid(region, grid, fn, workers=workers)
    wv = w * vals["vol"]
    return GreenResult(pairwise_sum(wv * vals["f"]), pairwise_sum(wv * np.abs(vals["f"])),
                       float(vals["f"].min()), float(vals["f"].max()))


def green_check(chart: Chart, g: MetricSpec, X, grid: GridSpec, workers: int = 1) -> GreenResult:
    """``integral div X dv`` over a closed (all-periodic) chart; zero by Green's theorem."""
    def div(geo):
        vals, d1, _ = X.jets(geo, 1)
        return divergence_from_jets(geo, vals, d1)

    return _green(chart, g, div, grid, workers, 1)


def log_rate_green_check(chart: Chart, g: MetricSpec, xi: VectorFieldSpec, grid: GridSpec,
                         workers: int = 1) -> GreenResult:
    """Integral of the acceleration coefficient ``xi(div xi) + (div xi)^2``.

    Vanishes on a closed chart; ``integrand_min``/``integrand_max`` carry
    the sign information (a nonzero integrand must change sign).
    """
    def accel(geo):
        X, dX, ddX = xi.jets(geo, 2)
        theta = divergence_from_jets(geo, X, dX)
        return np.einsum("pm,pm->p", X, grad_divergence(geo, X, dX, ddX)) + theta * theta

    return _green(chart, g, accel, grid, workers, 2)


@dataclass(frozen=True)
class BoundaryResult:
    bulk: float
    boundary: float
    residual: float
    faces: dict = field(default_factory=dict)

    def passes(self, tol: float) -> bool:
        return abs(self.residual) <= tol * max(1.0, abs(self.bulk), abs(self.boundary))


def face_flux(region: Region, g: MetricSpec, X, face: Face, grid: GridSpec, workers: int = 1) -> float:
    """``integral g(X, N) dS`` over one face.

    ``N`` is the metric dual of the outward conormal ``+-dx^a``, normalized
    to ``|g(N, N)| = 1``, and ``dS`` the induced volume of the face.  For a
    timelike normal this ``N`` is past-directed on an upper time face, so the
    flux equals ``-integral g(X, N_future) dS``.
    """
    chart = region.chart
    a = face.axis
    lo, hi = region.interval(a)
    value = hi if face.side == "upper" else lo
    sign = 1.0 if face.side == "upper" else -1.0
    others = [k for k in range(chart.n) if k != a]

    def density(pts):
        geo = LocalGeometry(chart, g, pts)
        vals, _, _ = X.jets(geo, 0)
        raised = sign * geo.ginv[:, :, a]
        norm = np.sqrt(np.abs(geo.ginv[:, a, a]))
        normal = raised / norm[:, None]
        gxn = np.einsum("pi,pij,pj->p", vals, geo.g, normal)
        induced = geo.g[:, others][:, :, others]
        dS = np.sqrt(np.abs(np.linalg.det(induced)))
        return gxn * dS

    w, v = sample_grid(region, grid, density, fixed={a: value}, workers=workers)
    return pairwise_sum(w * v)


def boundary_check(region: Region, g: MetricSpec, X, grid: GridSpec, workers: int = 1) -> BoundaryResult:
    """Divergence theorem on a region: bulk ``integral div X dv`` against the
    outward flux through the region's faces."""
    chart = region.chart

    def bulk_density(pts):
        geo = LocalGeometry(chart, g, pts).prefetch(2 if isinstance(X, LogRateField) else 1)
        vals, d1, _ = X.jets(geo, 1)
        return divergence_from_jets(geo, vals, d1) * geo.sqrt_abs_det

    bulk = integrate_density(region, grid, bulk_density, workers)
    faces = {}
    for f in region.faces:
        faces[f"{chart.names[f.axis]}:{f.side}"] = face_flux(region, g, X, f, grid, workers)
    boundary = pairwise_sum(np.array(list(faces.values()))) if faces else 0.0
    return BoundaryResult(bulk, boundary, bulk - boundary, faces)


@dataclass(frozen=True)
class L1Result:
    value: float
    region_measure: float
    region_volume: float
    causal_warning: bool


def truncated_l1(chart: Chart, g: MetricSpec, X, region: Region, grid: GridSpec,
                 workers: int = 1) -> L1Result:
    """``integral |X| dv`` over a truncation of the domain.

    For Lorentzian metrics ``|X| = |g(X, X)|^(1/2)``; ``causal_warning`` is
    set if ``g(X, X) < 0`` anywhere on the grid.
    """
    def fn(pts):
        geo = LocalGeometry(chart, g, pts)
        vals, _, _ = X.jets(geo, 0)
        n2 = np.einsum("pi,pij,pj->p", vals, geo.g, vals)
        return {"abs": np.sqrt(np.abs(n2)) * geo.sqrt_abs_det, "vol": geo.sqrt_abs_det,
                "timelike": (n2 < -1e-12).astype(float)}

    w, vals = sample_grid(region, grid, fn, workers=workers)
    return L1Result(pairwise_sum(w * vals["abs"]), region.measure(), pairwise_sum(w * vals["vol"]),
                    bool(vals["timelike"].any()))


def l1_convergence(chart: Chart, g: MetricSpec, X, regions: Sequence[Region], grid: GridSpec,
                   rtol: float = 1e-6) -> dict:
    """Truncated L1 norms on nested regions and whether they have settled."""
    values = [truncated_l1(chart, g, X, r, grid) for r in regions]
    seq = [v.value for v in values]
    converged = len(seq) >= 2 and abs(seq[-1] - seq[-2]) <= rtol * max(1.0, abs(seq[-1]))
    return {"values": seq, "measures": [v.region_measure for v in values], "converged": converged,
            "note": "settled at this truncation" if converged
            else "not L1-convergent at this truncation"}


# --------------------------------------------------------------------------
# Sign diagnostics on closed manifolds

@dataclass
class Hypothesis:
    name: str
    holds: bool
    value: float | None = None
    witness: list | None = None
    tolerance: float | None = None


@dataclass
class Conclusion:
    name: str
    value: float
    tolerance: float
    holds: bool


@dataclass
class Assessment:
    """Outcome of checking one assertion's hypotheses and conclusions.

    ``status`` is ``"applies"`` (all hypotheses hold, conclusions match),
    ``"contradiction"`` (hypotheses hold but the data contradicts the
    assertion), or ``"not applicable"``.
    """

    name: str
    hypotheses: list[Hypothesis]
    conclusions: list[Conclusion]
    status: str
    note: str = ""

    @property
    def sound(self) -> bool:
        return self.status != "applies" or all(h.holds for h in self.hypotheses)


def decide(name: str, hypotheses: list[Hypothesis], conclusions: list[Conclusion],
           note_na: str = "", note_ok: str = "", note_bad: str = "") -> Assessment:
    """Only ever report ``applies`` when every hypothesis holds."""
    if not all(h.holds for h in hypotheses):
        failed = ", ".join(h.name for h in hypotheses if not h.holds)
        return Assessment(name, hypotheses, conclusions, "not applicable",
                          f"hypothesis failed: {failed}" + (f"; {note_na}" if note_na else ""))
    if all(c.holds for c in conclusions):
        return Assessment(name, hypotheses, conclusions, "applies", note_ok)
    return Assessment(name, hypotheses, conclusions, "contradiction", note_bad)


def _witness(points: np.ndarray, values: np.ndarray, pick) -> tuple[float, list]:
    k = int(pick(values))
    return float(values[k]), points[k].tolist()


def flow_sign_diagnostics(chart: Chart, g: MetricSpec, xi: VectorFieldSpec, grid: GridSpec,
                          tol: float = 1e-9, conclusion_tol: float = 1e-6) -> list[Assessment]:
    """Sign-based assertions for a flow on a closed chart.

    * monotone volume: ``div xi`` of one sign forces ``div xi = 0``;
    * monotone expansion rate: a one-signed acceleration coefficient forces
      it to vanish, and ``xi(div xi) >= 0`` forces ``div xi = 0``;
    * no accelerating flow: ``xi(div xi) >= 0`` everywhere with a strict
      point cannot occur on a closed manifold.
    """
    region = Region.whole(chart)
    _require_closed(region)

    def fn(pts):
        geo = LocalGeometry(chart, g, pts).prefetch(2)
        X, dX, ddX = xi.jets(geo, 2)
        theta = divergence_from_jets(geo, X, dX)
        lie = np.einsum("pm,pm->p", X, grad_divergence(geo, X, dX, ddX))
        return {"theta": theta, "lie": lie, "pts": pts.copy()}

    _, v = sample_grid(region, grid, fn)
    theta, lie, pts = v["theta"], v["lie"], v["pts"]
    accel = lie + theta * theta
    out = []

    lo, w_lo = _witness(pts, theta, np.argmin)
    hi, w_hi = _witness(pts, theta, np.argmax)
    signed = lo >= -tol or hi <= tol
    out.append(decide(
        "monotone_volume_forces_incompressible",
        [Hypothesis("divergence_one_signed", signed, lo if lo < -tol else hi,
                    w_lo if lo < -tol else w_hi, tol)],
        [Conclusion("max_abs_divergence", float(np.max(np.abs(theta))), conclusion_tol,
                    float(np.max(np.abs(theta))) <= conclusion_tol)],
        note_ok="flow is incompressible", note_bad="one-signed divergence with nonzero values"))

    a_lo, wa_lo = _witness(pts, accel, np.argmin)
    a_hi, wa_hi = _witness(pts, accel, np.argmax)
    a_signed = a_lo >= -tol or a_hi <= tol
    out.append(decide(
        "monotone_rate_forces_constant_rate",
        [Hypothesis("acceleration_one_signed", a_signed, a_lo if a_lo < -tol else a_hi,
                    wa_lo if a_lo < -tol else wa_hi, tol)],
        [Conclusion("max_abs_acceleration", float(np.max(np.abs(accel))), conclusion_tol,
                    float(np.max(np.abs(accel))) <= conclusion_tol)],
        note_ok="rate of volumetric expansion is constant"))

    l_lo, wl_lo = _witness(pts, lie, np.argmin)
    l_hi, wl_hi = _witness(pts, lie, np.argmax)
    nonneg = Hypothesis("lie_divergence_nonnegative", l_lo >= -tol, l_lo, wl_lo, tol)
    out.append(decide(
        "nondecreasing_rate_forces_incompressible", [nonneg],
        [Conclusion("max_abs_divergence", float(np.max(np.abs(theta))), conclusion_tol,
                    float(np.max(np.abs(theta))) <= conclusion_tol)]))
    strict = Hypothesis("lie_divergence_positive_somewhere", l_hi > tol, l_hi, wl_hi, tol)
    # on a closed manifold both hypotheses together are impossible
    out.append(decide(
        "no_accelerating_flow_on_closed_manifold", [nonneg, strict],
        [Conclusion("hypotheses_jointly_satisfiable", 1.0, 0.0, False)],
        note_bad="data satisfy hypotheses that cannot hold on a closed manifold"))
    return out
