"""Pointwise tensor calculus on a coordinate chart.

All operations accept a single point ``(n,)`` or a batch ``(P, n)`` and
return correspondingly shaped arrays.  Index conventions for stored arrays:

* ``dg[..., i, j, k] = d_k g_ij`` and ``ddg[..., i, j, k, l] = d_k d_l g_ij``
* ``gamma[..., k, i, j] = Gamma^k_ij`` and ``dgamma[..., k, i, j, m] = d_m Gamma^k_ij``
* vector fields: ``dX[..., k, m] = d_m X^k``, ``ddX[..., k, m, l] = d_m d_l X^k``

Curvature follows ``R^a_bcd = d_c Gamma^a_db - d_d Gamma^a_cb + Gamma^a_ce Gamma^e_db
- Gamma^a_de Gamma^e_cb`` and ``Ric_bd = R^a_bad``, which makes the unit sphere
positively curved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import permutations
from typing import Sequence

import numpy as np

from . import exprdsl
from .errors import SchemaError, SignatureMismatch, SingularMetric
from .exprdsl import Expr, Jet2

RIEMANNIAN = "riemannian"
LORENTZIAN = "lorentzian"
DET_TOL = 1e-14


@dataclass(frozen=True)
class Chart:
    """Coordinate chart: names and signature plus per-axis periodicity/bounds.

    Each coordinate is periodic (``periods[k]`` set, range ``[0, period)``),
    bounded (``bounds[k]`` a closed interval) or unbounded (both ``None``).
    """

    names: tuple[str, ...]
    signature: str = RIEMANNIAN
    periods: tuple[float | None, ...] = ()
    bounds: tuple[tuple[float, float] | None, ...] = ()

    def __post_init__(self):
        n = len(self.names)
        object.__setattr__(self, "names", tuple(self.names))
        if not self.periods:
            object.__setattr__(self, "periods", (None,) * n)
        if not self.bounds:
            object.__setattr__(self, "bounds", (None,) * n)
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "bounds", tuple(None if b is None else (float(b[0]), float(b[1]))
                                                 for b in self.bounds))
        if n < 2:
            raise SchemaError("chart dimension must be at least 2", "chart")
        if len(set(self.names)) != n:
            raise SchemaError("duplicate coordinate names", "chart.coordinates")
        for name in self.names:
            if name in exprdsl.RESERVED:
                raise SchemaError(f"coordinate name {name!r} is reserved", "chart.coordinates")
        if self.signature not in (RIEMANNIAN, LORENTZIAN):
            raise SchemaError(f"unknown signature {self.signature!r}", "chart.signature")
        if len(self.periods) != n or len(self.bounds) != n:
            raise SchemaError("periods/bounds length differs from dimension", "chart")
        for k, (per, b) in enumerate(zip(self.periods, self.bounds)):
            if per is not None and b is not None:
                raise SchemaError("a coordinate is periodic or bounded, not both",
                                  f"chart.{self.names[k]}")
            if per is not None and not per > 0:
                raise SchemaError("period must be positive", f"chart.periodic.{self.names[k]}")
            if b is not None and not b[0] < b[1]:
                raise SchemaError("bounds must satisfy lo < hi", f"chart.bounds.{self.names[k]}")

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def compact(self) -> bool:
        return all(p is not None or b is not None for p, b in zip(self.periods, self.bounds))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def wrap(self, points: np.ndarray) -> np.ndarray:
        """Reduce periodic coordinates into ``[0, period)``."""
        out = np.array(points, dtype=float)
        for k, per in enumerate(self.periods):
            if per is not None:
                out[..., k] = np.mod(out[..., k], per)
        return out

    def sample(self, rng: np.random.Generator, count: int, margin: float = 0.0,
               box: Sequence[tuple[float, float] | None] | None = None) -> np.ndarray:
        """Uniform random points in the chart domain.

        Unbounded axes use ``box[k]`` if given, else ``[-1, 1]``.  ``margin``
        shrinks bounded intervals by that fraction on each side.
        """
        pts = np.empty((count, self.n))
        for k in range(self.n):
            per, b = self.periods[k], self.bounds[k]
            if per is not None:
                lo, hi = 0.0, per
            else:
                if b is None:
                    b = box[k] if box is not None and box[k] is not None else (-1.0, 1.0)
                lo, hi = b
                pad = margin * (hi - lo)
                lo, hi = lo + pad, hi - pad
            pts[:, k] = rng.uniform(lo, hi, size=count)
        return pts


@dataclass(frozen=True)
class MetricSpec:
    """Symmetric matrix of component expressions (lower triangle is authoritative)."""

    components: tuple[tuple[Expr, ...], ...]

    @classmethod
    def from_strings(cls, chart: Chart, rows) -> "MetricSpec":
        """Build from a full ``n x n`` list of strings or a diagonal list."""
        n = chart.n
        if len(rows) == n and all(isinstance(r, str) for r in rows):
            rows = [[rows[i] if i == j else "0" for j in range(n)] for i in range(n)]
        comps = [[exprdsl.parse(rows[i][j], chart) for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(i):
                if comps[i][j] != comps[j][i]:
                    raise SchemaError("metric is not symmetric", f"metric[{i}][{j}]")
        return cls(tuple(tuple(comps[max(i, j)][min(i, j)] for j in range(n)) for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.components)

    def unique(self):
        """Index pairs ``(i, j)`` with ``i >= j``."""
        return [(i, j) for i in range(self.n) for j in range(i + 1)]


@dataclass(frozen=True)
class VectorFieldSpec:
    components: tuple[Expr, ...]

    @classmethod
    def from_strings(cls, chart: Chart, comps: Sequence[str]) -> "VectorFieldSpec":
        if len(comps) != chart.n:
            raise SchemaError(f"vector field needs {chart.n} components")
        return cls(tuple(exprdsl.parse(c, chart) for c in comps))

    @classmethod
    def zero(cls, n: int) -> "VectorFieldSpec":
        return cls(tuple(exprdsl.Num(0.0) for _ in range(n)))

    def is_zero(self) -> bool:
        return all(isinstance(c, exprdsl.Num) and c.value == 0.0 for c in self.components)

    def jets(self, geo: "LocalGeometry", order: int = 2):
        """Component values and derivatives at ``geo.points``."""
        P, n = geo.points.shape
        env = exprdsl.seed_jets(geo.points, order)
        vals = np.empty((P, n))
        d1 = np.zeros((P, n, n)) if order >= 1 else None
        d2 = np.zeros((P, n, n, n)) if order >= 2 else None
        for k, e in enumerate(self.components):
            if isinstance(e, exprdsl.Num):
                vals[:, k] = e.value
                continue
            j = exprdsl.evaluate_env(e, env)
            vals[:, k] = j.value
            if order >= 1:
                d1[:, k] = j.grad
            if order >= 2:
                d2[:, k] = 0.5 * (j.hess + np.swapaxes(j.hess, -1, -2))
        return vals, d1, d2


@dataclass(frozen=True)
class CurvaturePack:
    gamma: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray


def _det_jets(m: list[list[Jet2]]) -> Jet2:
    """Determinant of a matrix of order-1 jets by permutation expansion."""
    n = len(m)
    total = None
    for perm in permutations(range(n)):
        inv = sum(1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b])
        term = m[0][perm[0]]
        for r in range(1, n):
            term = exprdsl._mul(term, m[r][perm[r]])
        if total is None:
            total = term if inv % 2 == 0 else exprdsl._scale(term, -1.0)
        else:
            total = exprdsl._add(total, term, -1.0 if inv % 2 else 1.0)
    return total


class LocalGeometry:
    """Metric data and derived tensors at a batch of points, computed lazily."""

    def __init__(self, chart: Chart, metric: MetricSpec, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.shape[1] != chart.n or metric.n != chart.n:
            raise ValueError("point/metric dimension does not match the chart")
        self.chart = chart
        self.metric = metric
        self.points = pts
        self._order = -1
        self._g = self._dg = self._ddg = None

    def _ensure(self, order: int) -> None:
        if self._order >= order:
            return
        P, n = self.points.shape
        env = exprdsl.seed_jets(self.points, order)
        g = np.empty((P, n, n))
        dg = np.zeros((P, n, n, n)) if order >= 1 else None
        ddg = np.zeros((P, n, n, n, n)) if order >= 2 else None
        for i, j in self.metric.unique():
            e = self.metric.components[i][j]
            if isinstance(e, exprdsl.Num):
                g[:, i, j] = g[:, j, i] = e.value
                continue
            jet = exprdsl.evaluate_env(e, env)
            g[:, i, j] = g[:, j, i] = jet.value
            if order >= 1:
                dg[:, i, j] = dg[:, j, i] = jet.grad
            if order >= 2:
                h = 0.5 * (jet.hess + np.swapaxes(jet.hess, -1, -2))
                ddg[:, i, j] = ddg[:, j, i] = h
        self._g, self._dg, self._ddg, self._order = g, dg, ddg, order
        self._check_det()

    def prefetch(self, order: int) -> "LocalGeometry":
        """Evaluate metric jets up to ``order`` now, so that later requests for
        lower orders do not trigger a second pass."""
        self._ensure(order)
        return self

    def _check_det(self) -> None:
        det = np.linalg.det(self._g)
        bad = ~(np.abs(det) >= DET_TOL)
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise SingularMetric(f"|det g| = {abs(det[k]):.3e} < {DET_TOL:g} at {self.points[k].tolist()}")
        self._det = det

    # -- metric ------------------------------------------------------------

    @property
    def g(self) -> np.ndarray:
        self._ensure(0)
        return self._g

    @property
    def dg(self) -> np.ndarray:
        self._ensure(1)
        return self._dg

    @property
    def ddg(self) -> np.ndarray:
        self._ensure(2)
        return self._ddg

    @property
    def det(self) -> np.ndarray:
        self._ensure(0)
        return self._det

    @cached_property
    def sqrt_abs_det(self) -> np.ndarray:
        return np.sqrt(np.abs(self.det))

    @cached_property
    def ginv(self) -> np.ndarray:
        return np.linalg.inv(self.g)

    @cached_property
    def dginv(self) -> np.ndarray:
        # d_k g^ij = -g^ia d_k g_ab g^bj
        gi = self.ginv[:, None]
        dgk = np.moveaxis(self.dg, -1, 1)
        return -np.moveaxis(gi @ dgk @ gi, 1, -1)

    def check_signature(self) -> None:
        eig = np.linalg.eigvalsh(self.g)
        neg = np.sum(eig < 0, axis=-1)
        want = 1 if self.chart.signature == LORENTZIAN else 0
        bad = neg != want
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise SignatureMismatch(
                f"metric has {neg[k]} negative eigenvalue(s) at {self.points[k].tolist()}, "
                f"{self.chart.signature} signature needs {want}")

    # -- connection and curvature -------------------------------------------

    @cached_property
    def gamma(self) -> np.ndarray:
        dg = self.dg
        # lowered: Gamma_{l i j} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        low = 0.5 * (np.einsum("pjli->plij", dg) + np.einsum("pilj->plij", dg)
                     - np.einsum("pijl->plij", dg))
        P, n = dg.shape[:2]
        gam = (self.ginv @ low.reshape(P, n, n * n)).reshape(P, n, n, n)
        return 0.5 * (gam + np.swapaxes(gam, -1, -2))

    @cached_property
    def dgamma(self) -> np.ndarray:
        dg, ddg = self.dg, self.ddg
        low = 0.5 * (np.einsum("pjli->plij", dg) + np.einsum("pilj->plij", dg)
                     - np.einsum("pijl->plij", dg))
        dlow = 0.5 * (np.einsum("pjlim->plijm", ddg) + np.einsum("piljm->plijm", ddg)
                      - np.einsum("pijlm->plijm", ddg))
        # batched matmuls over the contracted index l; much faster than einsum here
        P, n = dg.shape[:2]
        dginv_m = np.moveaxis(self.dginv, 3, 1).reshape(P, n * n, n)  # [(m, k), l]
        first = np.moveaxis((dginv_m @ low.reshape(P, n, n * n)).reshape(P, n, n, n, n), 1, 4)
        dgam = first + (self.ginv @ dlow.reshape(P, n, n ** 3)).reshape(P, n, n, n, n)
        return 0.5 * (dgam + np.swapaxes(dgam, 2, 3))

    @cached_property
    def ricci(self) -> np.ndarray:
        gam, dgam = self.gamma, self.dgamma
        # Ric_bd = d_a Gamma^a_db - d_d Gamma^a_ab + Gamma^a_ae Gamma^e_db - Gamma^a_de Gamma^e_ab
        P, n = gam.shape[:2]
        trace = np.einsum("paae->pe", gam)
        # quad[d, b] = Gamma^a_de Gamma^e_ab
        left = np.transpose(gam, (0, 2, 1, 3)).reshape(P, n, n * n)   # [d, (a, e)]
        right = np.transpose(gam, (0, 2, 1, 3)).reshape(P, n * n, n)  # [(a, e), b]
        quad = left @ right
        ric = (np.einsum("padba->pbd", dgam) - np.einsum("paabd->pbd", dgam)
               + np.einsum("pe,pedb->pbd", trace, gam) - np.swapaxes(quad, 1, 2))
        return 0.5 * (ric + np.swapaxes(ric, -1, -2))

    @cached_property
    def scalar(self) -> np.ndarray:
        return np.einsum("pij,pij->p", self.ginv, self.ricci)

    # -- volume ------------------------------------------------------------

    @cached_property
    def logvol_grad(self) -> np.ndarray:
        """``d_k log sqrt|det g| = 1/2 g^ij d_k g_ij``."""
        return 0.5 * np.einsum("pij,pijk->pk", self.ginv, self.dg)

    @cached_property
    def dlogvol_grad(self) -> np.ndarray:
        """``[k, m] = d_m d_k log sqrt|det g|``.

        Uses ``d_m g^ij d_k g_ij = -tr(g^-1 d_m g g^-1 d_k g)``.
        """
        P, n = self.points.shape
        A = self.ginv[:, None] @ np.moveaxis(self.dg, -1, 1)  # [p, m] = g^-1 d_m g
        # first[k, m] = -sum_ij A[m]_ij A[k]_ji, as one batched matmul
        At = np.swapaxes(A, -1, -2).reshape(P, n, n * n)
        first = -(At @ np.swapaxes(A.reshape(P, n, n * n), 1, 2))
        second = (self.ginv.reshape(P, 1, n * n) @ self.ddg.reshape(P, n * n, n * n)).reshape(P, n, n)
        d = 0.5 * (first + second)
        return 0.5 * (d + np.swapaxes(d, -1, -2))

    def sqrt_abs_det_jet(self) -> Jet2:
        """Order-1 jet of ``sqrt|det g|`` via explicit determinant expansion."""
        n = self.chart.n
        m = [[Jet2(self.g[:, i, j], self.dg[:, i, j], None) for j in range(n)] for i in range(n)]
        det = _det_jets(m)
        sign = np.sign(det.value)
        root = np.sqrt(np.abs(det.value))
        return Jet2(root, det.grad * (sign / (2.0 * root))[:, None], None)


# --------------------------------------------------------------------------
# Field-dependent quantities (array level, batched)

def divergence_from_jets(geo: LocalGeometry, X: np.ndarray, dX: np.ndarray) -> np.ndarray:
    """``d_k X^k + X^k d_k log sqrt|g|``."""
    return np.einsum("pkk->p", dX) + np.einsum("pk,pk->p", X, geo.logvol_grad)


def grad_divergence(geo: LocalGeometry, X, dX, ddX) -> np.ndarray:
    """``d_m (div X)`` from second-order field jets."""
    return (np.einsum("pkkm->pm", ddX) + np.einsum("pkm,pk->pm", dX, geo.logvol_grad)
            + np.einsum("pk,pkm->pm", X, geo.dlogvol_grad))


def acceleration_from_jets(geo: LocalGeometry, X, dX) -> np.ndarray:
    return np.einsum("pki,pi->pk", dX, X) + np.einsum("pkij,pi,pj->pk", geo.gamma, X, X, optimize=True)


def acceleration_jacobian(geo: LocalGeometry, X, dX, ddX) -> np.ndarray:
    """``[k, m] = d_m (nabla_X X)^k``."""
    gam, dgam = geo.gamma, geo.dgamma
    return (np.einsum("pim,pki->pkm", dX, dX) + np.einsum("pi,pkim->pkm", X, ddX)
            + np.einsum("pkijm,pi,pj->pkm", dgam, X, X, optimize=True)
            + 2.0 * np.einsum("pkij,pim,pj->pkm", gam, dX, X, optimize=True))


def lie_metric_from_jets(geo: LocalGeometry, X, dX) -> np.ndarray:
    g = geo.g
    return (np.einsum("pk,pijk->pij", X, geo.dg) + np.einsum("pkj,pki->pij", g, dX)
            + np.einsum("pik,pkj->pij", g, dX))


class LogRateField:
    """The field ``(div xi) xi`` built from a base field, exposed through
    the same ``jets`` protocol as :class:`VectorFieldSpec` (order <= 1)."""

    def __init__(self, base: VectorFieldSpec):
        self.base = base

    def jets(self, geo: LocalGeometry, order: int = 1):
        if order > 1:
            raise ValueError("second derivatives of (div xi) xi need third-order jets")
        geo.prefetch(2 if order >= 1 else 1)
        X, dX, ddX = self.base.jets(geo, 2)
        theta = divergence_from_jets(geo, X, dX)
        vals = theta[:, None] * X
        if order == 0:
            return vals, None, None
        dtheta = grad_divergence(geo, X, dX, ddX)
        d1 = X[:, :, None] * dtheta[:, None, :] + theta[:, None, None] * dX
        return vals, d1, None


# --------------------------------------------------------------------------
# Public point operations

def _geo(chart: Chart, g: MetricSpec, p) -> tuple[LocalGeometry, bool]:
    arr = np.asarray(p, dtype=float)
    return LocalGeometry(chart, g, arr), arr.ndim == 1


def _out(x: np.ndarray, single: bool):
    if single:
        x = x[0]
        return float(x) if np.ndim(x) == 0 else x
    return x


@dataclass(frozen=True)
class MetricAt:
    matrix: np.ndarray
    inverse: np.ndarray
    det: np.ndarray | float
    sqrt_abs_det: np.ndarray | float


def metric_at(chart: Chart, g: MetricSpec, p) -> MetricAt:
    """Metric matrix, inverse, determinant and volume density at ``p``.

    Raises :class:`SingularMetric` if ``|det g| < 1e-14`` and
    :class:`SignatureMismatch` if eigenvalue signs disagree with the chart.
    """
    geo, single = _geo(chart, g, p)
    geo.check_signature()
    return MetricAt(_out(geo.g, single), _out(geo.ginv, single),
                    _out(geo.det, single), _out(geo.sqrt_abs_det, single))


def christoffel(chart: Chart, g: MetricSpec, p) -> np.ndarray:
    """Levi-Civita symbols, ``out[k, i, j] = Gamma^k_ij``."""
    geo, single = _geo(chart, g, p)
    return _out(geo.gamma, single)


def curvature(chart: Chart, g: MetricSpec, p) -> CurvaturePack:
    """Connection and curvature (Ricci with its trace) at ``p``.

    Second metric derivatives come from the jets, so the Ricci tensor is
    exact to roundoff.
    """
    geo, single = _geo(chart, g, p)
    return CurvaturePack(_out(geo.gamma, single), _out(geo.ricci, single), _out(geo.scalar, single))


def divergence(chart: Chart, g: MetricSpec, X, p):
    """``(1/sqrt|g|) d_k (sqrt|g| X^k)``, via an explicit determinant jet."""
    geo, single = _geo(chart, g, p)
    vals, d1, _ = X.jets(geo, 1)
    vol = geo.sqrt_abs_det_jet()
    flux_div = np.einsum("pk,pk->p", vol.grad, vals) + vol.value * np.einsum("pkk->p", d1)
    return _out(flux_div / vol.value, single)


def lie_volume_rate(chart: Chart, g: MetricSpec, xi, p):
    """Coefficient of ``L_xi omega = (div xi) omega`` for ``omega = dv``.

    Uses ``d_k xi^k + xi^k d_k log sqrt|g|``, an independent route from
    :func:`divergence`.
    """
    geo, single = _geo(chart, g, p)
    vals, d1, _ = xi.jets(geo, 1)
    return _out(divergence_from_jets(geo, vals, d1), single)


def expansion_acceleration(chart: Chart, g: MetricSpec, xi: VectorFieldSpec, p):
    """``(xi(div xi), xi(div xi) + (div xi)^2)``: rate of change of the
    logarithmic expansion rate and the acceleration coefficient."""
    geo, single = _geo(chart, g, p)
    X, dX, ddX = xi.jets(geo, 2)
    theta = divergence_from_jets(geo, X, dX)
    lie = np.einsum("pm,pm->p", X, grad_divergence(geo, X, dX, ddX))
    return _out(lie, single), _out(lie + theta * theta, single)


def lie_metric(chart: Chart, g: MetricSpec, xi, p) -> np.ndarray:
    """``(L_xi g)_ij = xi^k d_k g_ij + g_kj d_i xi^k + g_ik d_j xi^k``."""
    geo, single = _geo(chart, g, p)
    X, dX, _ = xi.jets(geo, 1)
    return _out(lie_metric_from_jets(geo, X, dX), single)


def acceleration_vector(chart: Chart, g: MetricSpec, xi, p) -> np.ndarray:
    """``nabla_xi xi``."""
    geo, single = _geo(chart, g, p)
    X, dX, _ = xi.jets(geo, 1)
    return _out(acceleration_from_jets(geo, X, dX), single)


def scalar_curvature_derivative(chart: Chart, g: MetricSpec, points: np.ndarray,
                                step: float = 1e-5) -> np.ndarray:
    """``d_k s`` by central differences of the (jet-exact) scalar curvature.

    The step is scaled by ``max(1, |x_k|)`` per coordinate.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    P, n = pts.shape
    out = np.empty((P, n))
    for k in range(n):
        h = step * np.maximum(1.0, np.abs(pts[:, k]))
        plus, minus = pts.copy(), pts.copy()
        plus[:, k] += h
        minus[:, k] -= h
        sp = LocalGeometry(chart, g, plus).prefetch(2).scalar
        sm = LocalGeometry(chart, g, minus).prefetch(2).scalar
        out[:, k] = (sp - sm) / (2.0 * h)
    return out


def metric_compatibility(chart: Chart, g: MetricSpec, p) -> np.ndarray:
    """``nabla_k g_ij`` built from the stored symbols; vanishes identically."""
    geo, single = _geo(chart, g, p)
    cov = (np.einsum("pijk->pijk", geo.dg)
           - np.einsum("plki,plj->pijk", geo.gamma, geo.g)
           - np.einsum("plkj,pil->pijk", geo.gamma, geo.g))
    return _out(cov, single)
