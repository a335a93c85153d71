"""Ricci soliton checks: the defining equation, the log-rate divergence
identity, and the monotone-scalar-curvature diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .flow import FlowPath, classify, MONOTONE_TOL
from .geometry import (RIEMANNIAN, Chart, LocalGeometry, LogRateField, MetricSpec,
                       VectorFieldSpec, divergence_from_jets, lie_metric_from_jets,
                       scalar_curvature_derivative)
from .integrate import Conclusion, GridSpec, Hypothesis, Region, decide, l1_convergence

SOLITON_TOL = 1e-6


@dataclass(frozen=True)
class SolitonSpec:
    """Triple ``(g, xi, lambda)`` meant to satisfy ``-2 Ric = L_xi g + 2 lambda g``."""

    chart: Chart
    g: MetricSpec
    xi: VectorFieldSpec
    lam: float

    def __post_init__(self):
        if self.chart.signature != RIEMANNIAN:
            raise SchemaError("solitons need a Riemannian chart", "chart.signature")


def _pts(p):
    arr = np.asarray(p, dtype=float)
    return np.atleast_2d(arr), arr.ndim == 1


def soliton_residual(s: SolitonSpec, p) -> tuple[np.ndarray, np.ndarray | float]:
    """``2 Ric + L_xi g + 2 lambda g`` and its max-abs entry at ``p``."""
    pts, single = _pts(p)
    geo = LocalGeometry(s.chart, s.g, pts).prefetch(2)
    X, dX, _ = s.xi.jets(geo, 1)
    res = 2.0 * geo.ricci + lie_metric_from_jets(geo, X, dX) + 2.0 * s.lam * geo.g
    mx = np.max(np.abs(res), axis=(1, 2))
    if single:
        return res[0], float(mx[0])
    return res, mx


@dataclass(frozen=True)
class IdentityResult:
    lhs: np.ndarray | float
    rhs: np.ndarray | float
    residual: np.ndarray | float
    hypothesis_met: bool
    soliton_residual: float


def lie_scalar_curvature(s: SolitonSpec, pts: np.ndarray, X: np.ndarray) -> np.ndarray:
    if not np.any(X):
        return np.zeros(len(pts))
    ds = scalar_curvature_derivative(s.chart, s.g, pts)
    return np.einsum("pk,pk->p", X, ds)


def log_rate_identity(s: SolitonSpec, p, tol: float = SOLITON_TOL) -> IdentityResult:
    """Compare ``div((div xi) xi)`` with ``-xi(s) + (s + n lambda)^2``.

    The two sides agree on genuine solitons.  ``hypothesis_met`` is False if
    the soliton equation itself fails beyond ``tol`` at some sample, in which
    case the comparison carries no meaning.
    """
    pts, single = _pts(p)
    geo = LocalGeometry(s.chart, s.g, pts).prefetch(2)
    V, dV, _ = LogRateField(s.xi).jets(geo, 1)
    lhs = divergence_from_jets(geo, V, dV)
    X = s.xi.jets(geo, 0)[0]
    scal = geo.scalar
    rhs = -lie_scalar_curvature(s, pts, X) + (scal + s.chart.n * s.lam) ** 2
    _, sres = soliton_residual(s, pts)
    worst = float(np.max(sres))
    met = worst <= tol
    if single:
        return IdentityResult(float(lhs[0]), float(rhs[0]), float(lhs[0] - rhs[0]), met, worst)
    return IdentityResult(lhs, rhs, lhs - rhs, met, worst)


def soliton_flow_diagnostic(s: SolitonSpec, path: FlowPath, tol: float = MONOTONE_TOL,
                            conclusion_tol: float = SOLITON_TOL,
                            l1_boxes: tuple[float, ...] = (4.0, 6.0, 8.0), l1_grid: int = 64):
    """Monotone scalar curvature along the flow of a complete soliton.

    If ``s`` does not increase along trajectories and ``|(div xi) xi|`` is
    integrable, then ``s = -n lambda`` and ``div xi = 0``.  Samples ``s`` and
    ``xi(s)`` along ``path``; integrability is taken for granted on compact
    charts and monitored on nested boxes ``[-L, L]^n`` otherwise, where it
    can never be confirmed (so the assertion is never reported as applying).
    """
    chart = s.chart
    geo = LocalGeometry(chart, s.g, path.points).prefetch(2)
    X, dX, _ = s.xi.jets(geo, 1)
    scal = geo.scalar
    lie_s = lie_scalar_curvature(s, path.points, X)
    theta = divergence_from_jets(geo, X, dX)
    prof = classify(scal, tol)
    hyps = [
        Hypothesis("scalar_curvature_nonincreasing", prof["nonincreasing"],
                   float(np.max(lie_s)), path.points[int(np.argmax(lie_s))].tolist(), tol),
    ]
    telemetry = {"scalar_curvature": prof, "lie_scalar_curvature_max": float(np.max(lie_s))}
    if chart.compact:
        hyps.append(Hypothesis("log_rate_field_integrable", True, None, None, None))
        telemetry["integrability"] = "compact chart"
    else:
        boxes = []
        for L in l1_boxes:
            bounds = tuple(None if chart.periods[k] is not None or chart.bounds[k] is not None
                           else (-L, L) for k in range(chart.n))
            boxes.append(Region(chart, bounds))
        conv = l1_convergence(chart, s.g, LogRateField(s.xi), boxes,
                              GridSpec.uniform(chart.n, l1_grid))
        telemetry["integrability"] = conv
        # a truncation never proves integrability on a noncompact chart
        hyps.append(Hypothesis("log_rate_field_integrable", False,
                               conv["values"][-1], None, None))
    gap = float(np.max(np.abs(scal + chart.n * s.lam)))
    div_max = float(np.max(np.abs(theta)))
    concl = [Conclusion("max_abs_scalar_plus_n_lambda", gap, conclusion_tol, gap <= conclusion_tol),
             Conclusion("max_abs_divergence", div_max, conclusion_tol, div_max <= conclusion_tol)]
    a = decide("soliton_monotone_curvature_forces_incompressible", hyps, concl,
               note_na="sign data recorded only",
               note_ok="s = -n lambda and the flow is incompressible",
               note_bad="hypotheses hold but conclusions fail")
    return a, telemetry
