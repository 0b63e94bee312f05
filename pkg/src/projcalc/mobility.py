"""Solutions of the metrisability equation and what they generate.

A nondegenerate symmetric weight-2 field sigma in the kernel of the
trace-free derivative operator corresponds to a metric whose Levi-Civita
connection lies in the projective class.  This module converts between the
two pictures, finds the kernel numerically on a polynomial ansatz by
singular-value collocation, and builds the derived objects: the (1,1)
endomorphism of a pair of solutions, the gradient form of the equation with
its lambda vector, Killing tensors of projectively equivalent pairs, frames
adapted to the endomorphism, and the matrix by which a projective
transformation acts on a solution basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exprjet import Call, Num, ScalarField, add, div, mul, neg, powx, sub
from .projinv import ProjectiveClass2D, class_connection, metrisability_residual
from .sampling import grid_points, sample_points
from .tensorcalc import (
    ChartMap,
    ConnectionField,
    MetricField,
    WeightedTensorField,
    christoffel,
    pullback_weighted,
    sym_det,
    sym_inverse,
    weighted_covariant_derivative,
)

__all__ = [
    "MobilitySolution",
    "MobilityResult",
    "SinjukovForm",
    "ATensor",
    "EigenStructure",
    "KillingTensor",
    "TransformationMatrix",
    "sigma_from_metric",
    "metric_from_sigma",
    "solve_mobility",
    "a_tensor",
    "sinjukov_form",
    "killing_tensor_from_pair",
    "adapted_frame",
    "transformation_matrix",
]


@dataclass
class MobilitySolution:
    """A symmetric (2,0) weight-2 field with its verification data."""

    sigma: WeightedTensorField
    residual_norm: float
    singular_value: float | None = None
    degenerate: bool = False

    @property
    def chart(self):
        return self.sigma.chart


@dataclass
class MobilityResult:
    """Numerical nullspace of the assembled collocation system."""

    solutions: list
    singular_values: np.ndarray
    threshold: float
    ambiguous: bool

    @property
    def dimension(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)


def sigma_from_metric(g, check_points=None):
    """sigma^ij = g^ij |det g|^(1/(n+1)), the solution a metric contributes."""
    chart = g.chart
    n = g.dim
    inv, det = sym_inverse(chart, g.comps)
    factor = powx(Call("abs", det), Num(1.0 / (n + 1.0)))
    comps = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            comps[i, j] = comps[j, i] = mul(inv[i, j].expression, factor)
    sigma = WeightedTensorField(chart, (2, 0), 2.0, comps, symmetric=True)
    gamma = g._lc if g._lc is not None else christoffel(g)
    g._lc = gamma
    pts = check_points if check_points is not None else sample_points(chart, 6, seed=29)
    res = max(
        float(np.max(np.abs(metrisability_residual(sigma, gamma, p).components))) for p in pts
    )
    return MobilitySolution(sigma, res)


def metric_from_sigma(sol, check_points=None):
    """Invert the correspondence: g^ij = |det sigma| sigma^ij.

    Fails with the witness point when sigma degenerates there, matching the
    nondegeneracy hypothesis of the correspondence.
    """
    sigma = sol.sigma if isinstance(sol, MobilitySolution) else sol
    chart = sigma.chart
    n = sigma.dim
    pts = check_points if check_points is not None else sample_points(chart, 12, seed=31)
    for p in pts:
        if abs(np.linalg.det(sigma.values(p))) < 1e-12:
            raise ValueError(f"degenerate sigma at {tuple(np.round(p, 6))}")
    det = sym_det(sigma.comps)
    up = np.empty((n, n), dtype=object)
    absdet = Call("abs", det)
    for i in range(n):
        for j in range(i, n):
            up[i, j] = up[j, i] = mul(absdet, sigma.comps[i, j].expression)
    low, _ = sym_inverse(chart, up)
    comps = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            comps[i, j] = comps[j, i] = low[i, j].expression
    return MetricField(chart, comps)


def _monomials(n, degree):
    out = []

    def rec(prefix, rest, budget):
        if rest == 0:
            out.append(tuple(prefix))
            return
        for k in range(budget + 1):
            rec(prefix + [k], rest - 1, budget - k)

    rec([], n, degree)
    return sorted(out, key=lambda mi: (sum(mi), mi))


def _monomial_values(points, mono):
    vals = np.ones(len(points))
    for axis, k in enumerate(mono):
        if k:
            vals = vals * points[:, axis] ** k
    return vals


def _monomial_gradients(points, mono):
    n = points.shape[1]
    grads = np.zeros((len(points), n))
    for axis, k in enumerate(mono):
        if k == 0:
            continue
        g = k * np.ones(len(points))
        for a2, k2 in enumerate(mono):
            e = k2 - 1 if a2 == axis else k2
            if e:
                g = g * points[:, a2] ** e
        grads[:, axis] = g
    return grads


def _residual_rows(gam, tr, pairs, n, val, grad, a, b):
    """Stack of T^{ij}_k over (i<=j, k) for the basis field sigma^{ab}=mono."""
    sig = np.zeros((n, n))
    sig[a, b] = sig[b, a] = val
    dsig = np.zeros((n, n, n))
    dsig[a, b] = dsig[b, a] = grad
    nabla = (
        dsig
        + np.einsum("iks,sj->ijk", gam.transpose(0, 2, 1), sig)
        + np.einsum("jks,is->ijk", gam.transpose(0, 2, 1), sig)
        - (2.0 / (n + 1.0)) * np.einsum("k,ij->ijk", tr, sig)
    )
    u = np.einsum("iss->i", nabla)
    eye = np.eye(n)
    T = nabla - (np.einsum("i,jk->ijk", u, eye) + np.einsum("j,ik->ijk", u, eye)) / (n + 1.0)
    return np.array([T[i, j, k] for (i, j) in pairs for k in range(n)])


def solve_mobility(source, ansatz_degree, grid=15, sv_threshold=1e-8):
    """Nullspace of the metrisability system on a polynomial ansatz.

    ``source`` is a 2D projective class or a connection in any dimension;
    ``grid`` is a per-axis collocation count or an explicit point array.  The
    returned basis is orthonormal in coefficient space and ordered from the
    smallest singular value up; a singular value within a factor ten of the
    threshold on either side triggers an ambiguity warning carrying the full
    spectrum.
    """
    if isinstance(source, ProjectiveClass2D):
        conn = class_connection(source)
    elif isinstance(source, ConnectionField):
        conn = source
    else:
        raise TypeError("expected a ProjectiveClass2D or ConnectionField")
    if ansatz_degree < 1:
        raise ValueError("ansatz degree must be at least 1")
    chart = conn.chart
    n = chart.dim
    points = grid if isinstance(grid, np.ndarray) else grid_points(chart, int(grid))
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    monos = _monomials(n, ansatz_degree)
    ncols = len(pairs) * len(monos)
    rows_per_point = len(pairs) * n
    if len(points) * rows_per_point < ncols:
        raise ValueError(
            f"grid too small: {len(points)} points give {len(points) * rows_per_point} "
            f"equations for {ncols} coefficients"
        )

    mono_vals = np.stack([_monomial_values(points, m) for m in monos], axis=1)
    mono_grads = np.stack([_monomial_gradients(points, m) for m in monos], axis=1)

    A = np.empty((len(points) * rows_per_point, ncols))
    for pi, p in enumerate(points):
        gam = conn.values(p)
        tr = np.einsum("sjs->j", gam)
        for ci, (a, b) in enumerate(pairs):
            for mi in range(len(monos)):
                col = ci * len(monos) + mi
                rows = _residual_rows(
                    gam, tr, pairs, n, mono_vals[pi, mi], mono_grads[pi, mi], a, b
                )
                A[pi * rows_per_point : (pi + 1) * rows_per_point, col] = rows

    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0.0] = 1.0
    _, svals, Vh = np.linalg.svd(A / norms[:, None], full_matrices=False)
    svals = svals[::-1]  # ascending
    Vh = Vh[::-1]
    dim = int(np.searchsorted(svals, sv_threshold))
    ambiguous = bool(np.any((svals > sv_threshold / 10.0) & (svals < sv_threshold * 10.0)))
    if ambiguous:
        warnings.warn(
            "singular values near the mobility threshold; spectrum: "
            + np.array2string(svals[: max(dim + 3, 8)], precision=3),
            RuntimeWarning,
        )

    solutions = []
    for r in range(dim):
        coeffs = Vh[r]
        comps = np.empty((n, n), dtype=object)
        for ci, (a, b) in enumerate(pairs):
            e = Num(0.0)
            for mi, mono in enumerate(monos):
                c = coeffs[ci * len(monos) + mi]
                if c == 0.0:
                    continue
                term = Num(float(c))
                for axis, k in enumerate(mono):
                    for _ in range(k):
                        term = mul(term, ScalarField(chart.coords[axis], chart.coords).expression)
                e = add(e, term)
            comps[a, b] = comps[b, a] = e
        sigma = WeightedTensorField(chart, (2, 0), 2.0, comps, symmetric=True)
        raw = A @ coeffs
        dets = [np.linalg.det(sigma.values(p)) for p in points[:: max(1, len(points) // 25)]]
        scale = max(np.max(np.abs(sigma.values(points[0]))), 1e-30)
        solutions.append(
            MobilitySolution(
                sigma,
                residual_norm=float(np.max(np.abs(raw))),
                singular_value=float(svals[r]),
                degenerate=bool(np.min(np.abs(dets)) < 1e-10 * scale**n),
            )
        )
    return MobilityResult(solutions, svals, sv_threshold, ambiguous)


class ATensor:
    """(1,1) endomorphism sigma_bar . sigma^{-1} of a pair of solutions."""

    def __init__(self, chart, comps):
        self.chart = chart
        n = chart.dim
        self.comps = np.empty((n, n), dtype=object)
        for i, j in np.ndindex(n, n):
            c = comps[i, j]
            self.comps[i, j] = c if isinstance(c, ScalarField) else ScalarField(c, chart.coords)

    @property
    def dim(self):
        return self.chart.dim

    def values(self, point):
        out = np.empty((self.dim, self.dim))
        for i, j in np.ndindex(out.shape):
            out[i, j] = self.comps[i, j](point)
        return out

    def eigenvalues(self, point):
        return np.sort(np.linalg.eigvals(self.values(point)).real)


def a_tensor(sigma, sigma_bar):
    """Compose the second solution with the inverse of the first.

    The weights cancel, so the result is an honest (1,1) tensor field; for
    solutions coming from metrics it reproduces the determinant-weighted
    metric composition, which the tests check both ways.
    """
    s = sigma.sigma if isinstance(sigma, MobilitySolution) else sigma
    sb = sigma_bar.sigma if isinstance(sigma_bar, MobilitySolution) else sigma_bar
    chart = s.chart
    n = s.dim
    inv, _ = sym_inverse(chart, s.comps)
    comps = np.empty((n, n), dtype=object)
    for i, j in np.ndindex(n, n):
        total = Num(0.0)
        for k in range(n):
            total = add(total, mul(sb.comps[i, k].expression, inv[k, j].expression))
        comps[i, j] = total
    return ATensor(chart, comps)


@dataclass
class SinjukovForm:
    """Gradient form of the metrisability equation for a metric background.

    ``a`` is the plain symmetric (2,0) tensor sigma^ij |det g|^(-1/(n+1)) and
    ``lambda_vec`` is half the g-gradient of its g-trace; the defining
    residual a^ij_k - lambda^i d^j_k - lambda^j d^i_k vanishes on solutions.
    """

    chart: object
    a: np.ndarray
    lambda_vec: np.ndarray
    metric: MetricField
    connection: ConnectionField

    def a_values(self, point):
        out = np.empty((self.chart.dim,) * 2)
        for i, j in np.ndindex(out.shape):
            out[i, j] = self.a[i, j](point)
        return out

    def lambda_values(self, point):
        return np.array([f(point) for f in self.lambda_vec])

    def residual(self, point):
        n = self.chart.dim
        a_field = WeightedTensorField(self.chart, (2, 0), 0.0, self.a, symmetric=True)
        nabla = weighted_covariant_derivative(a_field, self.connection, point).components
        lam = self.lambda_values(point)
        eye = np.eye(n)
        return nabla - np.einsum("i,jk->ijk", lam, eye) - np.einsum("j,ik->ijk", lam, eye)

    def max_residual(self, points):
        return max(float(np.max(np.abs(self.residual(p)))) for p in points)


def sinjukov_form(sol, g, check_tol=1e-6):
    """Strip the weight with the metric volume and extract the lambda vector."""
    sigma = sol.sigma if isinstance(sol, MobilitySolution) else sol
    chart = sigma.chart
    n = chart.dim
    gamma = g._lc if g._lc is not None else christoffel(g)
    g._lc = gamma

    pts = sample_points(chart, 5, seed=37)
    worst = max(
        float(np.max(np.abs(metrisability_residual(sigma, gamma, p).components))) for p in pts
    )
    if worst > check_tol:
        raise ValueError(
            f"sigma is not a mobility solution for this class: residual {worst:.3e}"
        )

    det = sym_det(g.comps)
    strip = powx(Call("abs", det), Num(-1.0 / (n + 1.0)))
    a = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            e = ScalarField(mul(sigma.comps[i, j].expression, strip), chart.coords)
            a[i, j] = a[j, i] = e

    trace = Num(0.0)
    for p_, q_ in np.ndindex(n, n):
        trace = add(trace, mul(a[p_, q_].expression, g.comps[p_, q_].expression))
    ginv = g.inverse_comps()
    lam = np.empty(n, dtype=object)
    for i in range(n):
        total = Num(0.0)
        for s in range(n):
            total = add(total, mul(ginv[i, s].expression, trace.diff(chart.coords[s])))
        lam[i] = ScalarField(mul(Num(0.5), total), chart.coords)
    return SinjukovForm(chart, a, lam, g, gamma)


@dataclass
class KillingTensor:
    """Plain (0,2) quadratic integral with its Killing residual."""

    chart: object
    comps: np.ndarray
    residual: float

    def values(self, point):
        out = np.empty((self.chart.dim,) * 2)
        for i, j in np.ndindex(out.shape):
            out[i, j] = self.comps[i, j](point)
        return out

    def quadratic(self, point, xi):
        return float(np.asarray(xi) @ self.values(point) @ np.asarray(xi))


def killing_tensor_from_pair(g, g_bar, points=None):
    """K_ij = |det g / det gbar|^(2/(n+1)) gbar_ij with its Killing residual.

    For a projectively equivalent pair the symmetrized derivative vanishes;
    an inequivalent pair simply reports a large residual.
    """
    if g.chart.coords != g_bar.chart.coords:
        raise ValueError("metrics must share a chart")
    chart = g.chart
    n = g.dim
    ratio = powx(
        div(Call("abs", sym_det(g.comps)), Call("abs", sym_det(g_bar.comps))),
        Num(2.0 / (n + 1.0)),
    )
    comps = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            e = ScalarField(mul(ratio, g_bar.comps[i, j].expression), chart.coords)
            comps[i, j] = comps[j, i] = e
    gamma = g._lc if g._lc is not None else christoffel(g)
    g._lc = gamma
    field = WeightedTensorField(chart, (0, 2), 0.0, comps, symmetric=True)
    pts = points if points is not None else sample_points(chart, 8, seed=41)
    worst = 0.0
    for p in pts:
        nabla = weighted_covariant_derivative(field, gamma, p).components
        cyc = nabla + nabla.transpose(1, 2, 0) + nabla.transpose(2, 0, 1)
        worst = max(worst, float(np.max(np.abs(cyc))))
    return KillingTensor(chart, comps, worst)


@dataclass
class EigenStructure:
    """Eigenvalues of the endomorphism at a point, with the block pattern."""

    eigenvalues: np.ndarray
    m: int | None = None
    mbar: int | None = None
    lam: float | None = None

    @property
    def pattern(self):
        return self.m is not None


def adapted_frame(g, a, point, selfadj_tol=1e-8, cluster_tol=1e-6):
    """g-orthonormal basis diagonalizing the endomorphism at a point.

    Returns (frame, eigenvalues, structure); frame columns are the basis
    vectors.  When the eigenvalues split as one simple value plus clusters at
    0 and 1, the simple value is listed first, then the 0 block, then the 1
    block; otherwise ascending order.
    """
    from scipy.linalg import eigh

    avals = a.values(point) if hasattr(a, "values") else np.asarray(a, dtype=float)
    G = g.matrix(point)
    GA = G @ avals
    if np.max(np.abs(GA - GA.T)) > selfadj_tol * max(1.0, np.max(np.abs(GA))):
        raise ValueError("endomorphism is not self-adjoint for the metric at this point")
    w, V = eigh((GA + GA.T) / 2.0, G)

    near0 = np.abs(w) < cluster_tol
    near1 = np.abs(w - 1.0) < cluster_tol
    rest = ~(near0 | near1)
    if rest.sum() == 1 and (near0.sum() + near1.sum() + 1 == len(w)):
        order = np.concatenate(
            [np.where(rest)[0], np.where(near0)[0], np.where(near1)[0]]
        )
        structure = EigenStructure(
            np.sort(w), m=int(near0.sum()), mbar=int(near1.sum()), lam=float(w[rest][0])
        )
    else:
        order = np.argsort(w)
        structure = EigenStructure(np.sort(w))
    return V[:, order], w[order], structure


@dataclass
class TransformationMatrix:
    """Action of a chart self-map on a solution basis, in coefficients.

    Column j holds the expansion of the pullback of basis element j, so the
    matrix acts on coefficient vectors and composition reverses order.
    """

    matrix: np.ndarray
    residual: float


def transformation_matrix(cmap, basis, points=None, tol=1e-6):
    """Least-squares expansion of pulled-back basis elements in the basis."""
    if cmap.source.coords != cmap.target.coords:
        raise ValueError("transformation matrices need a self-map of the chart")
    sigmas = [b.sigma if isinstance(b, MobilitySolution) else b for b in basis]
    chart = cmap.source
    pts = points if points is not None else sample_points(chart, 40, seed=43)

    def vec(field):
        return np.concatenate([field.values(p).ravel() for p in pts])

    B = np.stack([vec(s) for s in sigmas], axis=1)
    if np.linalg.matrix_rank(B, tol=1e-10) < len(sigmas):
        raise ValueError("basis solutions are not linearly independent on the sample")
    T = np.empty((len(sigmas), len(sigmas)))
    worst = 0.0
    for j, s in enumerate(sigmas):
        v = vec(pullback_weighted(s, cmap))
        coeffs, _, _, _ = np.linalg.lstsq(B, v, rcond=None)
        T[:, j] = coeffs
        worst = max(worst, float(np.linalg.norm(B @ coeffs - v) / max(np.linalg.norm(v), 1e-30)))
    if worst > tol:
        raise ValueError(f"map is not projective for this class (fit residual {worst:.3e})")
    return TransformationMatrix(T, worst)
