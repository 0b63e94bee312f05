"""Factories for the named model geometries.

Flat space, Dini pairs of projectively equivalent surface metrics, block
Levi-Civita metrics with their diagonal endomorphism, the round sphere in
gnomonic coordinates (where geodesics are straight chart lines), and the
fractional-linear projective transformations of that chart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exprjet import Call, Num, ScalarField, add, div, mul, neg, parse_expression, powx, sub
from .sampling import sample_points
from .tensorcalc import Chart, ChartMap, ConnectionField, MetricField

__all__ = [
    "DiniData",
    "LeviCivitaData",
    "BeltramiMap",
    "dini_pair",
    "levi_civita_model",
    "sphere_gnomonic_model",
    "beltrami_transform",
    "flat_model",
    "COORD_NAMES",
]

COORD_NAMES = ("x", "y", "z", "w", "x5", "x6", "x7", "x8")


def _coords(n):
    return COORD_NAMES[:n]


@dataclass
class DiniData:
    """A normal-form pair of projectively equivalent surface metrics.

    g = (X - Y) (dx^2 + dy^2) and gbar = (X - Y) diag(1/(X^2 Y), 1/(X Y^2))
    for one-variable profiles X(x) > Y(y) > 0; the shared endomorphism is
    diag(X, Y).
    """

    chart: Chart
    X: ScalarField
    Y: ScalarField
    g: MetricField
    gbar: MetricField
    a_diag: tuple


@dataclass
class LeviCivitaData:
    """Inputs for the block normal form.

    ``lam`` is a function of the first coordinate with values avoiding 0 and
    1; ``h`` is an m x m block in the next m coordinates and ``hbar`` an
    mbar x mbar block in the remaining ones.  ``sign`` fixes the first
    diagonal entry lam (1 - lam) dx1^2 up to overall sign.
    """

    lam: object
    h: object
    hbar: object
    sign: int = 1


@dataclass
class BeltramiMap:
    """A projective transformation of the sphere in gnomonic coordinates."""

    matrix: np.ndarray
    chart_map: ChartMap

    def __call__(self, point):
        return self.chart_map(point)


def flat_model(n=2, extent=1.0):
    """Flat connection and Euclidean metric; geodesics are straight lines."""
    chart = Chart(_coords(n), ((-extent, extent),) * n)
    gamma = ConnectionField(chart, np.full((n, n, n), "0", dtype=object))
    delta = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
    return gamma, MetricField(chart, delta)


def dini_pair(X, Y, domain=((-1.0, 1.0), (-1.0, 1.0))):
    """Build the metric pair from profiles X(x) and Y(y).

    Raises with a witness point when positivity of X, Y or X - Y fails on the
    requested domain.
    """
    chart = Chart(("x", "y"), domain)
    Xf = X if isinstance(X, ScalarField) else ScalarField(parse_expression(str(X), ["x"]), chart.coords)
    Yf = Y if isinstance(Y, ScalarField) else ScalarField(parse_expression(str(Y), ["y"]), chart.coords)

    for p in sample_points(chart, 40, seed=17, margin=0.0):
        xv, yv = Xf(p), Yf(p)
        if not (xv > 0 and yv > 0 and xv - yv > 0):
            raise ValueError(
                f"Dini positivity fails at {tuple(np.round(p, 6))}: X={xv:.6g}, Y={yv:.6g}"
            )

    diff = sub(Xf.expression, Yf.expression)
    zero = Num(0.0)
    g = MetricField(chart, np.array([[diff, zero], [zero, diff]], dtype=object))
    g11 = div(diff, mul(mul(Xf.expression, Xf.expression), Yf.expression))
    g22 = div(diff, mul(Xf.expression, mul(Yf.expression, Yf.expression)))
    gbar = MetricField(chart, np.array([[g11, zero], [zero, g22]], dtype=object))
    return DiniData(chart, Xf, Yf, g, gbar, (Xf, Yf))


def levi_civita_model(data, domain_extent=0.8):
    """Metric and endomorphism fields of the block normal form.

    Returns (chart, metric, a_comps) where a_comps is the diagonal (1,1)
    endomorphism field diag(lam, 0 block, 1 block).  The metric carries the
    factor lam on the h block (the 0 eigendirections) and 1 - lam on the
    hbar block (the 1 eigendirections); composing the metric's mobility
    solution with the endomorphism then solves the metrisability equation
    exactly, which fixes the pairing.
    """
    h = np.asarray(data.h, dtype=object)
    hbar = np.asarray(data.hbar, dtype=object)
    m = h.shape[0] if h.size else 0
    mbar = hbar.shape[0] if hbar.size else 0
    n = 1 + m + mbar
    coords = _coords(n)
    chart = Chart(coords, ((-domain_extent, domain_extent),) * n)

    lam = data.lam if isinstance(data.lam, str) else data.lam
    lam_expr = parse_expression(lam, [coords[0]]) if isinstance(lam, str) else lam.expression
    lam_field = ScalarField(lam_expr, coords)

    for p in sample_points(chart, 30, seed=19, margin=0.0):
        lv = lam_field(p)
        if lv * (1.0 - lv) == 0.0:
            raise ValueError(f"lambda hits {{0, 1}} at {tuple(p)}")
        if data.sign * lv * (1.0 - lv) < 0:
            raise ValueError(f"sign choice makes the x1-block nonpositive at {tuple(p)}")

    one = Num(1.0)
    zero = Num(0.0)
    comps = np.full((n, n), zero, dtype=object)
    comps[0, 0] = mul(Num(float(data.sign)), mul(lam_expr, sub(one, lam_expr)))
    block_coords = coords[1 : m + 1]
    for i in range(m):
        for j in range(m):
            e = h[i, j]
            e = parse_expression(str(e), block_coords) if not isinstance(e, ScalarField) else e.expression
            comps[1 + i, 1 + j] = mul(sub(one, lam_expr), e)
    bar_coords = coords[m + 1 :]
    for i in range(mbar):
        for j in range(mbar):
            e = hbar[i, j]
            e = parse_expression(str(e), bar_coords) if not isinstance(e, ScalarField) else e.expression
            comps[1 + m + i, 1 + m + j] = mul(lam_expr, e)
    metric = MetricField(chart, comps)

    a_comps = np.full((n, n), zero, dtype=object)
    a_comps[0, 0] = lam_expr
    for i in range(mbar):
        a_comps[1 + m + i, 1 + m + i] = one
    return chart, metric, a_comps


def sphere_gnomonic_model(n=2, radius_of_chart=1.0):
    """Round unit sphere pulled back to the central-projection chart.

    g_ij = ((1 + |u|^2) d_ij - u_i u_j) / (1 + |u|^2)^2; great circles project
    to straight chart lines, so the projective class is the flat one.  The
    chart covers one open hemisphere.
    """
    if not 2 <= n <= 4:
        raise ValueError("gnomonic model supports dimensions 2 to 4")
    coords = _coords(n)
    chart = Chart(coords, ((-radius_of_chart, radius_of_chart),) * n)
    u = [parse_expression(c, coords) for c in coords]
    norm2 = Num(0.0)
    for ui in u:
        norm2 = add(norm2, mul(ui, ui))
    denom_lin = add(Num(1.0), norm2)
    denom = mul(denom_lin, denom_lin)
    comps = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            num = mul(neg(u[i]), u[j]) if i != j else sub(denom_lin, mul(u[i], u[j]))
            comps[i, j] = comps[j, i] = div(num, denom)
    return MetricField(chart, comps)


def beltrami_transform(A, n=2, radius_of_chart=1.0, source_extent=None):
    """Fractional-linear chart map induced by A in SL(n+1).

    In homogeneous coordinates the sphere map x -> Ax/|Ax| acts on the
    gnomonic chart as u_i -> (sum_j A_ij u_j + A_i,n+1) / (sum_j A_n+1,j u_j
    + A_n+1,n+1).  Straight lines go to straight lines.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (n + 1, n + 1):
        raise ValueError(f"matrix must be {(n + 1, n + 1)} for dimension {n}")
    if abs(np.linalg.det(A) - 1.0) > 1e-12:
        raise ValueError("matrix must have determinant one")
    coords = _coords(n)
    extent = source_extent if source_extent is not None else radius_of_chart
    source = Chart(coords, ((-extent, extent),) * n)
    target = Chart(coords, ((-radius_of_chart, radius_of_chart),) * n)

    def row_expr(row):
        e = Num(float(A[row, n]))
        for j in range(n):
            e = add(e, mul(Num(float(A[row, j])), parse_expression(coords[j], coords)))
        return e

    denom = row_expr(n)
    for p in sample_points(source, 40, seed=23, margin=0.0):
        dv = ScalarField(denom, coords)(p)
        if abs(dv) < 1e-9:
            raise ValueError(f"map leaves the chart: denominator vanishes at {tuple(p)}")
    comps = [div(row_expr(i), denom) for i in range(n)]
    return BeltramiMap(A, ChartMap(source, target, comps))
