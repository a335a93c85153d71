"""Trajectories of a vector field and a flow-pullback oracle for Lie derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprdsl
from .errors import LeftDomain, NonFinite
from .exprdsl import Expr, Jet2
from .geometry import (Chart, LocalGeometry, MetricSpec, VectorFieldSpec,
                       divergence_from_jets, grad_divergence)

MONOTONE_TOL = 1e-9


@dataclass(frozen=True)
class FlowPath:
    times: np.ndarray
    points: np.ndarray


def _field_values(xi: VectorFieldSpec, pts: np.ndarray) -> np.ndarray:
    env = exprdsl.seed_jets(pts, 0)
    out = np.empty_like(pts)
    for k, e in enumerate(xi.components):
        out[:, k] = exprdsl.evaluate_env(e, env).value
    return out


def rk4_step(xi: VectorFieldSpec, x: np.ndarray, dt: float) -> np.ndarray:
    """One classic Runge-Kutta step for a batch ``(P, n)`` of points."""
    k1 = _field_values(xi, x)
    k2 = _field_values(xi, x + 0.5 * dt * k1)
    k3 = _field_values(xi, x + 0.5 * dt * k2)
    k4 = _field_values(xi, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _outside(chart: Chart, x: np.ndarray) -> np.ndarray:
    """Per-point mask of bound violations."""
    bad = np.zeros(x.shape[0], dtype=bool)
    for k, b in enumerate(chart.bounds):
        if b is not None:
            bad |= (x[:, k] < b[0]) | (x[:, k] > b[1])
    return bad


def _exit_time(chart: Chart, x_prev: np.ndarray, x_new: np.ndarray, t_prev: float, dt: float) -> float:
    """Linear estimate of the time the segment crosses a bound."""
    frac = 1.0
    for k, b in enumerate(chart.bounds):
        if b is None:
            continue
        for edge in b:
            a, c = x_prev[k] - edge, x_new[k] - edge
            if a * c < 0 or (c == 0 and a != 0):
                frac = min(frac, a / (a - c))
    return t_prev + frac * dt


def integrate_trajectory(chart: Chart, xi: VectorFieldSpec, x0, t_final: float, steps: int) -> FlowPath:
    """Fixed-step RK4 trajectory of ``xi`` from ``x0`` over ``[0, t_final]``.

    Periodic coordinates are wrapped into ``[0, period)`` after every step.

    Raises
    ------
    LeftDomain
        The trajectory crossed a coordinate bound; ``exit_time`` estimates
        when.
    NonFinite
        The field blew up along the way.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not t_final > 0:
        raise ValueError("t_final must be positive")
    dt = t_final / steps
    x = chart.wrap(np.asarray(x0, dtype=float)[None, :])
    if _outside(chart, x)[0]:
        raise LeftDomain(f"start point {x[0].tolist()} is outside the chart bounds", exit_time=0.0)
    times = dt * np.arange(steps + 1)
    points = np.empty((steps + 1, chart.n))
    points[0] = x[0]
    for s in range(steps):
        new = rk4_step(xi, x, dt)
        if not np.all(np.isfinite(new)):
            raise NonFinite(f"trajectory became non-finite at t = {times[s + 1]:g}")
        if _outside(chart, new)[0]:
            te = _exit_time(chart, x[0], new[0], times[s], dt)
            raise LeftDomain(f"trajectory left the chart near t = {te:.6g}", exit_time=te)
        x = chart.wrap(new)
        points[s + 1] = x[0]
    return FlowPath(times, points)


def _rk4_step_jets(xi: VectorFieldSpec, x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """RK4 step map and its Jacobian, by pushing order-1 jets through it."""
    env = exprdsl.seed_jets(x, 1)

    def field(state: list[Jet2]) -> list[Jet2]:
        return [exprdsl.evaluate_env(e, state) for e in xi.components]

    def shifted(base: list[Jet2], k: list[Jet2], c: float) -> list[Jet2]:
        return [exprdsl._add(b, exprdsl._scale(kk, c)) for b, kk in zip(base, k)]

    k1 = field(env)
    k2 = field(shifted(env, k1, 0.5 * dt))
    k3 = field(shifted(env, k2, 0.5 * dt))
    k4 = field(shifted(env, k3, dt))
    out = []
    for i in range(len(env)):
        incr = exprdsl._add(exprdsl._add(k1[i], exprdsl._scale(k2[i], 2.0)),
                            exprdsl._add(exprdsl._scale(k3[i], 2.0), k4[i]))
        out.append(exprdsl._add(env[i], exprdsl._scale(incr, dt / 6.0)))
    vals = np.stack([j.value for j in out], axis=-1)
    jac = np.stack([j.grad for j in out], axis=-2)
    return vals, jac


def lie_pullback_estimate(chart: Chart, g: MetricSpec, xi: VectorFieldSpec, quantity: str,
                          p, h: float, scalar: Expr | None = None):
    """Central difference of the pulled-back quantity along the flow.

    ``quantity="volume"`` estimates the coefficient ``div xi`` of
    ``L_xi dv`` from ``sqrt|g|(phi_t p) det(D phi_t)`` at ``t = +-h``,
    normalized by ``sqrt|g|(p)``.  ``quantity="scalar"`` estimates
    ``xi(f)`` for the expression ``scalar``.  Each ``phi_{+-h}`` is one RK4
    step whose Jacobian is obtained with jets.
    """
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if quantity not in ("volume", "scalar"):
        raise ValueError(f"unknown quantity {quantity!r}")
    if quantity == "scalar" and scalar is None:
        raise ValueError("scalar quantity needs an expression")
    if xi.is_zero():
        out = np.zeros(pts.shape[0])
        return float(out[0]) if single else out
    vals = {}
    for sign in (1.0, -1.0):
        moved, jac = _rk4_step_jets(xi, pts, sign * h)
        if np.any(_outside(chart, moved)):
            raise LeftDomain(f"flow by {sign * h:g} leaves the chart bounds")
        if quantity == "volume":
            q = LocalGeometry(chart, g, moved).sqrt_abs_det * np.linalg.det(jac)
        else:
            q = exprdsl.eval_jet(scalar, moved, order=0).value
        vals[sign] = q
    est = (vals[1.0] - vals[-1.0]) / (2.0 * h)
    if quantity == "volume":
        est = est / LocalGeometry(chart, g, pts).sqrt_abs_det
    return float(est[0]) if single else est


def classify(values: np.ndarray, tol: float = MONOTONE_TOL) -> dict:
    """Monotonicity of a sampled sequence along a path."""
    values = np.asarray(values, dtype=float)
    d = np.diff(values)
    nondec = bool(np.all(d >= -tol))
    noninc = bool(np.all(d <= tol))
    label = ("constant" if nondec and noninc else "nondecreasing" if nondec
             else "nonincreasing" if noninc else "mixed")
    return {"label": label, "nondecreasing": nondec, "nonincreasing": noninc,
            "min": float(values.min()), "max": float(values.max())}


@dataclass(frozen=True)
class MonotonicityReport:
    divergence: dict
    lie_of_divergence: dict
    samples_div: np.ndarray
    samples_lie_div: np.ndarray


def monotonicity_profile(chart: Chart, g: MetricSpec, xi: VectorFieldSpec, path: FlowPath,
                         tol: float = MONOTONE_TOL) -> MonotonicityReport:
    """Sample ``div xi`` and ``xi(div xi)`` along a path and classify both."""
    geo = LocalGeometry(chart, g, path.points).prefetch(2)
    X, dX, ddX = xi.jets(geo, 2)
    theta = divergence_from_jets(geo, X, dX)
    lie = np.einsum("pm,pm->p", X, grad_divergence(geo, X, dX, ddX))
    return MonotonicityReport(classify(theta, tol), classify(lie, tol), theta, lie)
