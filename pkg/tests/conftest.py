from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from projcalc.tensorcalc import Chart, MetricField


@pytest.fixture
def chart2():
    return Chart(("x", "y"), ((-1.0, 1.0), (-1.0, 1.0)))


@pytest.fixture
def chart3():
    return Chart(("x", "y", "z"), ((-1.0, 1.0),) * 3)


@pytest.fixture
def flat_metric2(chart2):
    return MetricField(chart2, [["1", "0"], ["0", "1"]])


def random_polynomial_metric(chart, rng, scale=0.15, degree=2):
    """Euclidean metric plus a small random polynomial perturbation."""
    n = chart.dim
    comps = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            terms = ["1" if i == j else "0"]
            for _ in range(3):
                c = rng.uniform(-scale, scale)
                exps = rng.integers(0, degree + 1, size=n)
                while exps.sum() > degree or exps.sum() == 0:
                    exps = rng.integers(0, degree + 1, size=n)
                mono = "*".join(
                    [f"{c:.6f}"] + [name for name, k in zip(chart.coords, exps) for _ in range(int(k))]
                )
                terms.append(mono)
            comps[i][j] = comps[j][i] = " + ".join(terms)
    return MetricField(chart, comps)


def random_polynomial_connection(chart, rng, scale=0.4, degree=2):
    from projcalc.tensorcalc import ConnectionField

    n = chart.dim
    comps = np.empty((n, n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            for k in range(j, n):
                terms = []
                for _ in range(2):
                    c = rng.uniform(-scale, scale)
                    exps = rng.integers(0, degree + 1, size=n)
                    while exps.sum() > degree:
                        exps = rng.integers(0, degree + 1, size=n)
                    mono = "*".join(
                        [f"{c:.6f}"]
                        + [name for name, e in zip(chart.coords, exps) for _ in range(int(e))]
                    )
                    terms.append(mono)
                comps[i, j, k] = comps[i, k, j] = " + ".join(terms)
    return ConnectionField(chart, comps)


def random_polynomial_oneform(chart, rng, scale=0.4, degree=2):
    from projcalc.tensorcalc import OneForm

    n = chart.dim
    comps = []
    for _ in range(n):
        terms = []
        for _ in range(2):
            c = rng.uniform(-scale, scale)
            exps = rng.integers(0, degree + 1, size=n)
            while exps.sum() > degree:
                exps = rng.integers(0, degree + 1, size=n)
            mono = "*".join(
                [f"{c:.6f}"] + [name for name, e in zip(chart.coords, exps) for _ in range(int(e))]
            )
            terms.append(mono)
        comps.append(" + ".join(terms))
    return OneForm(chart, comps)
