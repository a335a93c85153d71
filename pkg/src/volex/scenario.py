"""Scenario files: JSON descriptions of a metric and a vector field on a chart.

Every problem found while loading is raised with the key path of the
offending entry (``metric[1][1]``, ``chart.bounds.t`` and so on).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import exprdsl
from .errors import InputError, ParseError, SchemaError
from .geometry import (LORENTZIAN, RIEMANNIAN, Chart, LocalGeometry, MetricSpec,
                       VectorFieldSpec)
from .integrate import Face, GridSpec, Region
from .lorentz import FluidParams, SliceSpec
from .soliton import SolitonSpec

ANALYSES = ("green", "eq4", "volume", "flow", "soliton", "raychaudhuri", "eq7", "energy",
            "boundary", "diagnose")
SIGNATURE_SAMPLES = 20
_KNOWN_KEYS = {"name", "description", "chart", "metric", "vector_field", "soliton", "fluid",
               "slice", "region", "grid", "flow", "sample_box", "samples", "seed", "analyses",
               "tolerances"}


@dataclass
class FlowSetup:
    start: list[float]
    t_final: float
    steps: int


@dataclass
class Scenario:
    name: str
    chart: Chart
    metric: MetricSpec
    field: VectorFieldSpec
    lam: float | None = None
    fluid: FluidParams | None = None
    slice_at: tuple[int, float] | None = None
    region: Region | None = None
    region_field: str = "log_rate"
    grids: dict = field(default_factory=lambda: {"default": 16})
    flow: FlowSetup | None = None
    sample_box: tuple | None = None
    samples: int = 50
    seed: int = 0
    analyses: list[str] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    description: str = ""

    def grid_count(self, analysis: str) -> int:
        return int(self.grids.get(analysis, self.grids["default"]))

    def grid(self, analysis: str, count: int | None = None) -> GridSpec:
        return GridSpec.uniform(self.chart.n, count or self.grid_count(analysis))

    def slice_spec(self) -> SliceSpec:
        if self.slice_at is None:
            raise SchemaError("this analysis needs a slice", "slice")
        return SliceSpec(self.chart, self.metric, self.slice_at[0], self.slice_at[1])

    def soliton_spec(self) -> SolitonSpec:
        if self.lam is None:
            raise SchemaError("this analysis needs a soliton constant", "soliton.lambda")
        return SolitonSpec(self.chart, self.metric, self.field, self.lam)

    def sample_points(self, count: int | None = None, margin: float = 0.05) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        return self.chart.sample(rng, count or self.samples, margin=margin, box=self.sample_box)


# --------------------------------------------------------------------------
# Validation helpers

def _req(d: dict, key: str, path: str):
    if not isinstance(d, dict):
        raise SchemaError("expected an object", path)
    if key not in d:
        raise SchemaError("missing required key", f"{path}.{key}" if path else key)
    return d[key]


def _number(v, path: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError("expected a number", path)
    return float(v)


def _expr(src, chart: Chart, path: str) -> exprdsl.Expr:
    if not isinstance(src, str):
        if isinstance(src, (int, float)) and not isinstance(src, bool):
            src = repr(float(src))
        else:
            raise SchemaError("expected an expression string", path)
    try:
        return exprdsl.parse(src, chart)
    except ParseError as exc:
        exc.key = path
        exc.args = (f"{path}: {exc.args[0]}",)
        raise


def _interval(v, path: str) -> tuple[float, float]:
    if not isinstance(v, list) or len(v) != 2:
        raise SchemaError("expected [lo, hi]", path)
    lo, hi = _number(v[0], f"{path}[0]"), _number(v[1], f"{path}[1]")
    if not lo < hi:
        raise SchemaError("bounds must satisfy lo < hi", path)
    return lo, hi


def _per_axis(d, names, path: str, conv) -> list:
    out = [None] * len(names)
    if d is None:
        return out
    if not isinstance(d, dict):
        raise SchemaError("expected an object keyed by coordinate name", path)
    for k, v in d.items():
        if k not in names:
            raise SchemaError(f"unknown coordinate {k!r}", f"{path}.{k}")
        out[names.index(k)] = conv(v, f"{path}.{k}")
    return out


def _chart(d) -> Chart:
    names = _req(d, "coordinates", "chart")
    if not isinstance(names, list) or not all(isinstance(s, str) for s in names):
        raise SchemaError("expected a list of names", "chart.coordinates")
    sig = d.get("signature", RIEMANNIAN)
    if sig not in (RIEMANNIAN, LORENTZIAN):
        raise SchemaError(f"expected {RIEMANNIAN!r} or {LORENTZIAN!r}", "chart.signature")
    periods = _per_axis(d.get("periodic"), names, "chart.periodic", _number)
    bounds = _per_axis(d.get("bounds"), names, "chart.bounds", _interval)
    return Chart(tuple(names), sig, tuple(periods), tuple(bounds))


def _metric(v, chart: Chart) -> MetricSpec:
    n = chart.n
    if isinstance(v, dict):
        diag = _req(v, "diag", "metric")
        if not isinstance(diag, list) or len(diag) != n:
            raise SchemaError(f"expected {n} diagonal entries", "metric.diag")
        rows = [[diag[i] if i == j else "0" for j in range(n)] for i in range(n)]
    elif isinstance(v, list) and len(v) == n and all(isinstance(r, list) and len(r) == n for r in v):
        rows = v
    else:
        raise SchemaError(f"expected an {n}x{n} matrix or {{\"diag\": [...]}}", "metric")
    comps = [[_expr(rows[i][j], chart, f"metric[{i}][{j}]") for j in range(n)] for i in range(n)]
    for i in range(n):
        for j in range(i):
            if comps[i][j] != comps[j][i]:
                raise SchemaError("metric is not symmetric", f"metric[{i}][{j}]")
    return MetricSpec(tuple(tuple(comps[max(i, j)][min(i, j)] for j in range(n))
                            for i in range(n)))


def _field(v, chart: Chart) -> VectorFieldSpec:
    if v is None:
        return VectorFieldSpec.zero(chart.n)
    if not isinstance(v, list) or len(v) != chart.n:
        raise SchemaError(f"expected {chart.n} components", "vector_field")
    return VectorFieldSpec(tuple(_expr(c, chart, f"vector_field[{k}]") for k, c in enumerate(v)))


def _grids(v) -> dict:
    if v is None:
        return {"default": 16}
    if isinstance(v, int) and not isinstance(v, bool):
        v = {"default": v}
    if not isinstance(v, dict):
        raise SchemaError("expected an integer or an object of integers", "grid")
    out = {"default": 16}
    for k, n in v.items():
        if k != "default" and k not in ANALYSES:
            raise SchemaError(f"unknown analysis {k!r}", f"grid.{k}")
        if isinstance(n, bool) or not isinstance(n, int) or n < 4:
            raise SchemaError("grid counts must be integers >= 4", f"grid.{k}")
        out[k] = n
    return out


def check_signature(chart: Chart, g: MetricSpec, box=None, seed: int = 0,
                    count: int = SIGNATURE_SAMPLES) -> None:
    """Eigenvalue signs of ``g`` at random chart points must match the chart."""
    pts = chart.sample(np.random.default_rng(seed), count, box=box)
    LocalGeometry(chart, g, pts).check_signature()


def build(data: dict) -> Scenario:
    """Validate a decoded scenario object and build a :class:`Scenario`."""
    if not isinstance(data, dict):
        raise SchemaError("scenario must be a JSON object", "")
    for k in data:
        if k not in _KNOWN_KEYS:
            raise SchemaError("unknown key", k)
    name = _req(data, "name", "")
    if not isinstance(name, str) or not name:
        raise SchemaError("expected a non-empty string", "name")
    chart = _chart(_req(data, "chart", ""))
    names = list(chart.names)
    g = _metric(_req(data, "metric", ""), chart)
    xi = _field(data.get("vector_field"), chart)
    box = data.get("sample_box")
    box = tuple(_per_axis(box, names, "sample_box", _interval)) if box is not None else None
    seed = int(data.get("seed", 0))
    check_signature(chart, g, box, seed)

    lam = None
    if "soliton" in data:
        lam = _number(_req(data["soliton"], "lambda", "soliton"), "soliton.lambda")
    fluid = None
    if "fluid" in data:
        fl = data["fluid"]
        fluid = FluidParams(_expr(_req(fl, "mu", "fluid"), chart, "fluid.mu"),
                            _expr(_req(fl, "rho", "fluid"), chart, "fluid.rho"))
    slice_at = None
    if "slice" in data:
        sd = data["slice"]
        coord = _req(sd, "coordinate", "slice")
        if coord not in names:
            raise SchemaError(f"unknown coordinate {coord!r}", "slice.coordinate")
        slice_at = (names.index(coord), _number(_req(sd, "value", "slice"), "slice.value"))
    region, region_field = None, "log_rate"
    if "region" in data:
        rd = data["region"]
        rb = _per_axis(_req(rd, "bounds", "region"), names, "region.bounds", _interval)
        faces = None
        if "faces" in rd:
            fl = rd["faces"]
            if not isinstance(fl, list):
                raise SchemaError("expected a list of faces", "region.faces")
            faces = []
            for i, f in enumerate(fl):
                axis = _req(f, "coordinate", f"region.faces[{i}]")
                if axis not in names:
                    raise SchemaError(f"unknown coordinate {axis!r}", f"region.faces[{i}].coordinate")
                faces.append(Face(names.index(axis), _req(f, "side", f"region.faces[{i}]")))
            faces = tuple(faces)
        region = Region(chart, tuple(rb), faces)
        region_field = rd.get("field", "log_rate")
        if region_field not in ("log_rate", "vector_field"):
            raise SchemaError("expected 'log_rate' or 'vector_field'", "region.field")
    flow = None
    if "flow" in data:
        fd = data["flow"]
        start = _req(fd, "start", "flow")
        if not isinstance(start, list) or len(start) != chart.n:
            raise SchemaError(f"expected {chart.n} coordinates", "flow.start")
        steps = _req(fd, "steps", "flow")
        if isinstance(steps, bool) or not isinstance(steps, int) or steps < 1:
            raise SchemaError("expected a positive integer", "flow.steps")
        flow = FlowSetup([_number(x, f"flow.start[{i}]") for i, x in enumerate(start)],
                         _number(_req(fd, "t_final", "flow"), "flow.t_final"), steps)
    analyses = data.get("analyses", [])
    if not isinstance(analyses, list):
        raise SchemaError("expected a list", "analyses")
    for i, a in enumerate(analyses):
        if a not in ANALYSES:
            raise SchemaError(f"unknown analysis {a!r}", f"analyses[{i}]")
    tols = data.get("tolerances", {})
    if not isinstance(tols, dict):
        raise SchemaError("expected an object", "tolerances")
    tols = {k: _number(v, f"tolerances.{k}") for k, v in tols.items()}
    samples = data.get("samples", 50)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise SchemaError("expected a positive integer", "samples")
    s = Scenario(name=name, chart=chart, metric=g, field=xi, lam=lam, fluid=fluid,
                 slice_at=slice_at, region=region, region_field=region_field,
                 grids=_grids(data.get("grid")), flow=flow, sample_box=box, samples=samples,
                 seed=seed, analyses=list(analyses), tolerances=tols,
                 description=str(data.get("description", "")))
    if lam is not None and chart.signature != RIEMANNIAN:
        raise SchemaError("soliton scenarios need a Riemannian chart", "soliton")
    if slice_at is not None:
        s.slice_spec()
    return s


def catalog() -> list[str]:
    """Names of the shipped scenarios."""
    root = resources.files("volex") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve(path_or_name: str):
    p = Path(path_or_name)
    if p.exists():
        return p
    cand = resources.files("volex") / "scenarios" / f"{path_or_name}.json"
    if cand.is_file():
        return cand
    raise InputError(f"no scenario file or catalog entry named {path_or_name!r}")


def load_scenario(path_or_name) -> Scenario:
    """Load and validate a scenario file (or a catalog name)."""
    src = resolve(str(path_or_name))
    try:
        text = src.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path_or_name}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
                          "") from exc
    return build(data)
