import json
import math
from pathlib import Path

import numpy as np
import pytest

from volex.geometry import LORENTZIAN, Chart, MetricSpec, VectorFieldSpec

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())
TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


def flrw_chart(t_bounds=(0.5, 2.5), period=1.0):
    return Chart(("t", "x", "y", "z"), LORENTZIAN, (None, period, period, period),
                 (t_bounds, None, None, None))


def flrw_metric(chart, a2):
    return MetricSpec.from_strings(chart, ["-1", a2, a2, a2])


def field(chart, *comps):
    return VectorFieldSpec.from_strings(chart, list(comps))


def plane():
    return Chart(("x", "y"))


def torus(period=TWO_PI):
    return Chart(("x", "y"), periods=(period, period))


def flat(chart):
    return MetricSpec.from_strings(chart, ["1"] * chart.n)


def sphere(delta=1e-3):
    c = Chart(("theta", "phi"), periods=(None, TWO_PI), bounds=((delta, math.pi - delta), None))
    return c, MetricSpec.from_strings(c, ["1", "sin(theta)^2"])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
