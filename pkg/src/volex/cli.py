"""Command line front end: validate scenarios and run analyses on them.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for bad
input, 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, geometry, lorentz
from .errors import InputError, NumericalError, SchemaError, VolexError
from .flow import integrate_trajectory, lie_pullback_estimate, monotonicity_profile
from .geometry import RIEMANNIAN, LogRateField
from .integrate import (Assessment, boundary_check, flow_sign_diagnostics, green_check,
                        log_rate_green_check, total_volume)
from .scenario import ANALYSES, Scenario, catalog, load_scenario
from .soliton import log_rate_identity, soliton_flow_diagnostic, soliton_residual

DEFAULT_TOL = {
    "green": 1e-10,
    "eq4": 1e-10,
    "volume": 1e-4,
    "flow": 1e-9,
    "soliton": 1e-6,
    "raychaudhuri": 1e-6,
    "eq7": 1e-6,
    "energy": 1e-7,
    "boundary": 1e-6,
    "diagnose": 1e-9,
}
DUAL_PATH_TOL = 1e-12
PULLBACK_H = 1e-3
THETA_TOL = 1e-10
SHEAR_FLOOR = -1e-12


def _num(v):
    if isinstance(v, (bool, str)) or v is None:
        return v
    v = float(v)
    return v if math.isfinite(v) else None


def entry(quantity: str, value, tolerance: float | None = None, passed: bool | None = None) -> dict:
    """One reported number with the tolerance it was judged against (``None``
    marks telemetry that is not judged)."""
    return {"quantity": quantity, "value": _num(value), "tolerance": tolerance,
            "passed": passed}


def check(quantity: str, value: float, tolerance: float, ok: bool) -> dict:
    return entry(quantity, value, tolerance, bool(ok))


def assessment_dict(a: Assessment) -> dict:
    return {
        "name": a.name, "status": a.status, "note": a.note,
        "hypotheses": [{"name": h.name, "holds": bool(h.holds), "value": _num(h.value),
                        "witness": None if h.witness is None else [_num(x) for x in h.witness],
                        "tolerance": h.tolerance} for h in a.hypotheses],
        "conclusions": [{"name": c.name, "value": _num(c.value), "tolerance": c.tolerance,
                         "holds": bool(c.holds)} for c in a.conclusions],
    }


@dataclass
class Record:
    analysis: str
    tolerance: float
    grid: int | None
    checks: list = field(default_factory=list)
    telemetry: list = field(default_factory=list)
    assessments: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    rows: list = field(default_factory=list)  # (coords, quantity, value)

    @property
    def passed(self) -> bool:
        ok = all(c["passed"] for c in self.checks)
        return ok and all(a["status"] != "contradiction" for a in self.assessments)

    def add_rows(self, pts: np.ndarray, quantity: str, values) -> None:
        for p, v in zip(np.atleast_2d(pts), np.atleast_1d(values)):
            self.rows.append(([float(x) for x in p], quantity, float(v)))

    def as_dict(self) -> dict:
        return {"analysis": self.analysis, "passed": self.passed, "tolerance": self.tolerance,
                "grid": self.grid, "checks": self.checks, "telemetry": self.telemetry,
                "assessments": self.assessments, "notes": self.notes,
                "samples": len(self.rows)}


@dataclass
class Report:
    scenario: Scenario
    records: list[Record]
    workers: int = 1

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def as_dict(self) -> dict:
        s = self.scenario
        return {"tool": "volex", "version": __version__, "scenario": s.name,
                "dimension": s.chart.n, "signature": s.chart.signature,
                "coordinates": list(s.chart.names), "passed": self.passed,
                "analyses": [r.as_dict() for r in self.records]}

    def to_json(self) -> str:
        # no timestamps or worker counts: identical inputs give identical bytes
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write_csv(self, path) -> int:
        names = list(self.scenario.chart.names)
        count = 0
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "analysis", *names, "quantity", "value"])
            for r in self.records:
                for coords, q, v in r.rows:
                    w.writerow([self.scenario.name, r.analysis, *map(repr, coords), q, repr(v)])
                    count += 1
        return count


# --------------------------------------------------------------------------
# Analyses

def _closed(s: Scenario) -> bool:
    return all(p is not None for p in s.chart.periods)


def _need_closed(s: Scenario, what: str) -> None:
    if not _closed(s):
        raise SchemaError(f"{what} needs every coordinate periodic (a closed chart)", "chart.periodic")


def _green_like(s: Scenario, rec: Record, fn, label: str, workers: int) -> None:
    _need_closed(s, label)
    res = fn(s.chart, s.metric, s.field, s.grid(rec.analysis, rec.grid), workers=workers)
    bound = rec.tolerance * (1.0 + res.abs_integral)
    rec.checks.append(check("residual", res.residual, rec.tolerance, res.passes(rec.tolerance)))
    rec.telemetry += [entry("abs_integral", res.abs_integral), entry("integrand_min", res.integrand_min),
                      entry("integrand_max", res.integrand_max), entry("residual_bound", bound)]


def run_green(s, rec, workers):
    _green_like(s, rec, green_check, "green", workers)


def run_eq4(s, rec, workers):
    _green_like(s, rec, log_rate_green_check, "eq4", workers)
    lo, hi = rec.telemetry[1]["value"], rec.telemetry[2]["value"]
    if max(abs(lo), abs(hi)) > 1e-12:
        rec.notes.append("integrand changes sign" if lo < 0 < hi
                         else "integrand is one-signed and nonzero")


def run_volume(s, rec, workers):
    pts = s.sample_points()
    div = geometry.divergence(s.chart, s.metric, s.field, pts)
    alt = geometry.lie_volume_rate(s.chart, s.metric, s.field, pts)
    gap = float(np.max(np.abs(div - alt) / (1.0 + np.abs(div))))
    rec.checks.append(check("dual_path_max_rel_gap", gap, DUAL_PATH_TOL, gap <= DUAL_PATH_TOL))
    est = lie_pullback_estimate(s.chart, s.metric, s.field, "volume", pts, PULLBACK_H)
    err = float(np.max(np.abs(est - div)))
    rec.checks.append(check("pullback_max_abs_gap", err, rec.tolerance, err <= rec.tolerance))
    rec.telemetry.append(entry("pullback_step", PULLBACK_H))
    rec.add_rows(pts, "divergence", div)
    rec.add_rows(pts, "pullback_estimate", est)
    if s.chart.compact:
        vol = total_volume(s.chart, s.metric, s.grid("volume", rec.grid), s.region, workers=workers)
        rec.checks.append(check("total_volume_positive", vol, 0.0, vol > 0))


def run_flow(s, rec, workers):
    if s.flow is None:
        raise SchemaError("the flow analysis needs a flow setup", "flow")
    path = integrate_trajectory(s.chart, s.field, s.flow.start, s.flow.t_final, s.flow.steps)
    prof = monotonicity_profile(s.chart, s.metric, s.field, path, rec.tolerance)
    for key, d in (("divergence", prof.divergence), ("lie_of_divergence", prof.lie_of_divergence)):
        rec.telemetry += [entry(f"{key}_trend", d["label"], rec.tolerance),
                          entry(f"{key}_min", d["min"]), entry(f"{key}_max", d["max"])]
    rec.telemetry.append(entry("endpoint", None))
    rec.telemetry[-1]["value"] = [float(x) for x in path.points[-1]]
    rec.add_rows(path.points, "divergence", prof.samples_div)
    rec.add_rows(path.points, "lie_of_divergence", prof.samples_lie_div)


def run_soliton(s, rec, workers):
    spec = s.soliton_spec()
    pts = s.sample_points()
    _, worst = soliton_residual(spec, pts)
    wmax = float(np.max(worst))
    rec.checks.append(check("soliton_residual_max", wmax, rec.tolerance, wmax <= rec.tolerance))
    idr = log_rate_identity(spec, pts)
    r = float(np.max(np.abs(idr.residual)))
    rec.checks.append(check("identity_residual_max", r, rec.tolerance, r <= rec.tolerance))
    rec.telemetry += [entry("lhs_mean", float(np.mean(idr.lhs))),
                      entry("rhs_mean", float(np.mean(idr.rhs)))]
    rec.add_rows(pts, "identity_lhs", idr.lhs)
    rec.add_rows(pts, "identity_rhs", idr.rhs)


def _slice_points(s: Scenario) -> np.ndarray:
    pts = s.sample_points()
    t, c = s.slice_at
    pts[:, t] = c
    return pts


def run_raychaudhuri(s, rec, workers):
    sl = s.slice_spec()
    pts = _slice_points(s)
    T = lorentz.slice_terms(sl, pts)
    r = float(np.max(np.abs(T.residual)))
    rec.checks.append(check("residual_max", r, rec.tolerance, r <= rec.tolerance))
    gap = float(np.max(np.abs(T.theta - T.theta_extrinsic)))
    rec.checks.append(check("expansion_vs_divergence_gap", gap, THETA_TOL, gap <= THETA_TOL))
    smin = float(np.min(T.shear))
    rec.checks.append(check("shear_norm_min", smin, SHEAR_FLOOR, smin >= SHEAR_FLOOR))
    for name in ("lhs", "ricci", "shear", "expansion", "lie_expansion"):
        rec.telemetry.append(entry(f"{name}_mean", float(np.mean(getattr(T, name)))))
    rec.add_rows(pts, "residual", T.residual)
    for name in ("ricci", "shear", "expansion", "lie_expansion"):
        rec.add_rows(pts, name, getattr(T, name))


def run_eq7(s, rec, workers):
    sl = s.slice_spec()
    S = lorentz.sample_slice(sl, s.grid("eq7", rec.grid), workers)
    I = lorentz.closed_slice_integral(sl, None, S)
    rec.checks.append(check("integral_over_volume", I.integral / I.volume, rec.tolerance,
                            I.passes(rec.tolerance)))
    rec.telemetry += [entry("integral", I.integral), entry("slice_volume", I.volume),
                      entry("integrand_min", I.integrand_min), entry("integrand_max", I.integrand_max),
                      entry("acceleration_norm2_integral", I.accel_norm2_integral)]
    rec.telemetry += [entry(f"{k}_integral", v) for k, v in I.terms.items()]


def run_energy(s, rec, workers):
    sl = s.slice_spec()
    scan = lorentz.energy_condition_scan(sl, s.grid("energy", rec.grid))
    rec.telemetry += [entry("ricci_min", scan["min"], scan["threshold"]),
                      entry("ricci_max", scan["max"]),
                      entry("violation_fraction", scan["violation_fraction"], scan["threshold"]),
                      entry("energy_condition_holds", scan["satisfied"], scan["threshold"])]
    if s.fluid is not None:
        pts = s.sample_points()
        cmp = lorentz.perfect_fluid_ricci(s.chart, s.metric, s.fluid, pts, sl.time_index)
        gap = float(np.max(np.abs(cmp.gap)))
        rec.checks.append(check("fluid_ricci_gap_max", gap, rec.tolerance, gap <= rec.tolerance))
        rec.add_rows(pts, "fluid_model", cmp.fluid)
        rec.add_rows(pts, "ricci_normal", cmp.ricci)


def run_boundary(s, rec, workers):
    if s.region is None:
        raise SchemaError("the boundary analysis needs a region", "region")
    X = LogRateField(s.field) if s.region_field == "log_rate" else s.field
    res = boundary_check(s.region, s.metric, X, s.grid("boundary", rec.grid), workers)
    scale = max(1.0, abs(res.bulk), abs(res.boundary))
    rec.checks.append(check("relative_residual", res.residual / scale, rec.tolerance,
                            res.passes(rec.tolerance)))
    rec.telemetry += [entry("bulk", res.bulk), entry("boundary", res.boundary)]
    rec.telemetry += [entry(f"face_flux[{k}]", v) for k, v in sorted(res.faces.items())]


def run_diagnose(s, rec, workers):
    grid = s.grid("diagnose", rec.grid)
    found = []
    if s.chart.signature == RIEMANNIAN and _closed(s):
        found += flow_sign_diagnostics(s.chart, s.metric, s.field, grid, tol=rec.tolerance)
    if s.slice_at is not None:
        sl = s.slice_spec()
        window = None
        if s.region is not None and s.region.bounds[sl.time_index] is not None:
            window = s.region.bounds[sl.time_index]
        d = lorentz.theorem_diagnostics(sl, grid, window, rec.tolerance)
        found += d["assessments"]
        if "closed_slice_integral" in d:
            rec.telemetry.append(entry("closed_slice_integral", d["closed_slice_integral"].integral))
        if "region_balance" in d:
            b = d["region_balance"]
            rec.telemetry += [entry("region_bulk", b.bulk), entry("region_boundary", b.boundary)]
    if s.lam is not None and s.flow is not None:
        path = integrate_trajectory(s.chart, s.field, s.flow.start, s.flow.t_final, s.flow.steps)
        a, _ = soliton_flow_diagnostic(s.soliton_spec(), path, tol=rec.tolerance)
        found.append(a)
    if not found:
        rec.notes.append("no assertion has hypotheses that this scenario can express")
    rec.assessments += [assessment_dict(a) for a in found]
    bad = [a.name for a in found if not a.sound]
    rec.checks.append(check("unsound_assessments", float(len(bad)), 0.0, not bad))


RUNNERS = {
    "green": run_green, "eq4": run_eq4, "volume": run_volume, "flow": run_flow,
    "soliton": run_soliton, "raychaudhuri": run_raychaudhuri, "eq7": run_eq7,
    "energy": run_energy, "boundary": run_boundary, "diagnose": run_diagnose,
}
_GRIDDED = {"green", "eq4", "volume", "eq7", "energy", "boundary", "diagnose"}


def run_analysis(s: Scenario, which: str, grid: int | None = None, tol: float | None = None,
                 workers: int = 1) -> Record:
    """Run one analysis and return its record."""
    if which not in RUNNERS:
        raise InputError(f"unknown analysis {which!r}")
    t = tol if tol is not None else s.tolerances.get(which, DEFAULT_TOL[which])
    g = (grid or s.grid_count(which)) if which in _GRIDDED else None
    rec = Record(which, t, g)
    RUNNERS[which](s, rec, workers)
    return rec


def run_scenario(s: Scenario, analyses: list[str] | None = None, grid: int | None = None,
                 tol: float | None = None, workers: int = 1) -> Report:
    todo = analyses or s.analyses
    if not todo:
        raise InputError(f"scenario {s.name!r} declares no analyses; pass --analysis")
    return Report(s, [run_analysis(s, a, grid, tol, workers) for a in todo], workers)


# --------------------------------------------------------------------------
# Entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volex", description="Volumetric expansion checks on charts.")
    p.add_argument("--version", action="version", version=f"volex {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="load and validate a scenario")
    v.add_argument("scenario", help="scenario file or catalog name")
    r = sub.add_parser("run", help="run analyses on a scenario")
    r.add_argument("scenario", help="scenario file or catalog name")
    r.add_argument("--analysis", action="append", choices=ANALYSES,
                   help="analysis to run (repeatable); default: the scenario's list")
    r.add_argument("--grid", type=int, help="nodes per axis, overriding the scenario")
    r.add_argument("--tol", type=float, help="tolerance override for the chosen analyses")
    r.add_argument("--out", help="write the JSON report here")
    r.add_argument("--csv", help="write per-sample rows here")
    r.add_argument("--workers", type=int, default=1, help="threads for grid evaluation")
    sub.add_parser("list", help="list the shipped scenarios")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            print("\n".join(catalog()))
            return 0
        s = load_scenario(args.scenario)
        if args.command == "validate":
            print(f"ok: {s.name} (dimension {s.chart.n}, {s.chart.signature})")
            return 0
        if args.grid is not None and args.grid < 4:
            raise InputError("--grid must be at least 4")
        if args.workers < 1:
            raise InputError("--workers must be at least 1")
        report = run_scenario(s, args.analysis, args.grid, args.tol, args.workers)
        for rec in report.records:
            status = "PASS" if rec.passed else "FAIL"
            detail = ", ".join(f"{c['quantity']}={c['value']:.3e}" for c in rec.checks
                               if isinstance(c["value"], float))
            print(f"{status} {rec.analysis}: {detail}")
        try:
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(report.to_json())
            if args.csv:
                report.write_csv(args.csv)
        except OSError as exc:
            raise InputError(f"cannot write output: {exc}") from exc
        return 0 if report.passed else 1
    except VolexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code if isinstance(exc, (InputError, NumericalError)) else 3


if __name__ == "__main__":
    sys.exit(main())
