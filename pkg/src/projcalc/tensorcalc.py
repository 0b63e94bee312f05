"""Charts, metrics, connections and projectively weighted tensor fields.

All field components are closed-form :class:`~projcalc.exprjet.ScalarField`
objects, so derived objects (Christoffel symbols, curvature, covariant
derivatives) are computed through exact jets rather than finite differences.
Weighted tensors are kept in the trivialization relative to the coordinate
volume form: a weight-k field picks up an extra ``-(k/(n+1)) * trace(Gamma)``
term in its covariant derivative and a ``|det J|^(k/(n+1))`` factor under
chart maps.  Charts are assumed positively oriented and determinant powers
always go through absolute values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exprjet import (
    Call,
    EvalError,
    ExprError,
    Expression,
    Num,
    ScalarField,
    add,
    as_expr,
    div,
    mul,
    neg,
    parse_expression,
    powx,
    sub,
)
from .sampling import sample_points

__all__ = [
    "Chart",
    "MetricField",
    "ConnectionField",
    "OneForm",
    "WeightedTensorField",
    "PointTensor",
    "ChartMap",
    "christoffel",
    "projective_shift",
    "curvature_tensor",
    "ricci_tensor",
    "weighted_covariant_derivative",
    "volume_weight_field",
    "pullback_weighted",
    "compose_maps",
]


@dataclass(frozen=True)
class Chart:
    """A single rectangular coordinate chart."""

    coords: tuple
    domain: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "domain", tuple((float(a), float(b)) for a, b in self.domain))
        n = len(self.coords)
        if not 2 <= n <= 8:
            raise ValueError(f"chart dimension must be between 2 and 8, got {n}")
        if len(self.domain) != n:
            raise ValueError("one domain interval per coordinate required")
        for a, b in self.domain:
            if not a < b:
                raise ValueError(f"empty domain interval ({a}, {b})")

    @property
    def dim(self):
        return len(self.coords)

    def contains(self, point):
        return all(a <= x <= b for x, (a, b) in zip(point, self.domain))

    def center(self):
        return np.array([(a + b) / 2 for a, b in self.domain])

    def field(self, source):
        return ScalarField(source, self.coords)

    def const(self, value):
        return ScalarField(Num(float(value)), self.coords)


def _as_field(chart, item):
    if isinstance(item, ScalarField):
        if item.coords != chart.coords:
            raise ExprError("field declared over different coordinates")
        return item
    if isinstance(item, Expression):
        return ScalarField(item, chart.coords)
    if isinstance(item, str):
        return ScalarField(item, chart.coords)
    return chart.const(item)


def _field_array(chart, comps, shape):
    arr = np.empty(shape, dtype=object)
    src = np.asarray(comps, dtype=object)
    if src.shape != shape:
        raise ValueError(f"expected component array of shape {shape}, got {src.shape}")
    for idx in np.ndindex(shape):
        arr[idx] = _as_field(chart, src[idx])
    return arr


def _values(comp_array, point):
    out = np.empty(comp_array.shape)
    for idx in np.ndindex(comp_array.shape):
        out[idx] = comp_array[idx](point)
    return out


def _jets(comp_array, point, order):
    """Jets of every component, sharing one evaluation memo across the array.

    Components of derived fields reference common subgraphs (determinants,
    substituted coordinates), so a shared memo collapses the cost.
    """
    from .exprjet import jet_space, variable_jets

    first = comp_array.flat[0]
    space = jet_space(first.dim, order)
    var_jets = variable_jets(space, first.coords, point)
    memo = {}
    out = np.empty(comp_array.shape, dtype=object)
    for idx in np.ndindex(comp_array.shape):
        jet = comp_array[idx].expression.eval_jet(space, var_jets, memo)
        if not np.all(np.isfinite(jet.coeffs)):
            raise EvalError("non-finite jet", comp_array[idx].expression)
        out[idx] = jet
    return out


def sym_det(comps):
    """Determinant of a small matrix of expressions, by Laplace expansion."""
    n = comps.shape[0]
    if n == 1:
        return comps[0, 0].expression if isinstance(comps[0, 0], ScalarField) else comps[0, 0]
    exprs = np.empty(comps.shape, dtype=object)
    for i, j in np.ndindex(comps.shape):
        c = comps[i, j]
        exprs[i, j] = c.expression if isinstance(c, ScalarField) else as_expr(c)

    def det(rows, cols):
        if len(rows) == 1:
            return exprs[rows[0], cols[0]]
        total = Num(0.0)
        r = rows[0]
        for k, c in enumerate(cols):
            minor = det(rows[1:], cols[:k] + cols[k + 1 :])
            term = mul(exprs[r, c], minor)
            total = add(total, term) if k % 2 == 0 else sub(total, term)
        return total

    return det(tuple(range(n)), tuple(range(n)))


def sym_inverse(chart, comps):
    """Symbolic inverse via the adjugate; returns (inverse array, det expr)."""
    n = comps.shape[0]
    d = sym_det(comps)
    inv = np.empty((n, n), dtype=object)
    idx = tuple(range(n))
    for i in range(n):
        for j in range(n):
            rows = tuple(r for r in idx if r != j)
            cols = tuple(c for c in idx if c != i)
            minor = sym_det(comps[np.ix_(rows, cols)])
            cof = minor if (i + j) % 2 == 0 else neg(minor)
            inv[i, j] = ScalarField(div(cof, d), chart.coords)
    return inv, d


class MetricField:
    """Symmetric nondegenerate metric g_ij given by scalar fields."""

    def __init__(self, chart, comps, signature=None):
        self.chart = chart
        n = chart.dim
        self.comps = _field_array(chart, comps, (n, n))
        for i in range(n):
            for j in range(i + 1, n):
                if self.comps[i, j].expression != self.comps[j, i].expression:
                    raise ValueError(f"metric is not symmetric in components ({i},{j})")
        self.signature = signature if signature is not None else (n, 0)
        self._inv = None
        self._det = None
        self._lc = None

    @property
    def dim(self):
        return self.chart.dim

    def matrix(self, point):
        return _values(self.comps, point)

    def jets(self, point, order):
        return _jets(self.comps, point, order)

    def det_field(self):
        if self._det is None:
            self._det = ScalarField(sym_det(self.comps), self.chart.coords)
        return self._det

    def inverse_comps(self):
        if self._inv is None:
            self._inv, _ = sym_inverse(self.chart, self.comps)
        return self._inv

    def inner(self, point, u, v):
        return float(u @ self.matrix(point) @ v)

    def validate(self, points=None, seed=0):
        """Check nondegeneracy and the declared signature at sample points."""
        if points is None:
            points = sample_points(self.chart, 12, seed=seed)
        npos, nneg = self.signature
        for p in points:
            w = np.linalg.eigvalsh(self.matrix(p))
            if np.any(np.abs(w) < 1e-12):
                raise ValueError(f"metric is singular at {tuple(p)}")
            if (w > 0).sum() != npos or (w < 0).sum() != nneg:
                raise ValueError(
                    f"metric signature at {tuple(p)} does not match declared {self.signature}"
                )
        return self


class ConnectionField:
    """Torsion-free affine connection with components Gamma^i_jk."""

    def __init__(self, chart, comps):
        self.chart = chart
        n = chart.dim
        self.comps = _field_array(chart, comps, (n, n, n))
        for i, j, k in np.ndindex(n, n, n):
            if j < k and self.comps[i, j, k].expression != self.comps[i, k, j].expression:
                raise ValueError(f"connection has torsion in component ({i},{j},{k})")

    @property
    def dim(self):
        return self.chart.dim

    def values(self, point):
        return _values(self.comps, point)

    def jets(self, point, order):
        return _jets(self.comps, point, order)

    def trace_values(self, point):
        """Gamma^s_js as a vector over j."""
        g = self.values(point)
        return np.einsum("sjs->j", g)


class OneForm:
    def __init__(self, chart, comps):
        self.chart = chart
        self.comps = _field_array(chart, comps, (chart.dim,))

    def values(self, point):
        return _values(self.comps, point)

    def jets(self, point, order):
        return _jets(self.comps, point, order)


class WeightedTensorField:
    """(p,q)-tensor of projective weight k in the coordinate trivialization.

    The component array carries upper indices first, then lower indices.
    Weight-0 fields are ordinary tensors.
    """

    def __init__(self, chart, valence, weight, comps, symmetric=False):
        self.chart = chart
        self.valence = (int(valence[0]), int(valence[1]))
        self.weight = float(weight)
        p, q = self.valence
        shape = (chart.dim,) * (p + q)
        self.comps = _field_array(chart, comps, shape) if shape else np.asarray(comps, dtype=object)
        if not shape:
            self.comps = np.empty((), dtype=object)
            self.comps[()] = _as_field(chart, comps)
        self.symmetric = symmetric
        if symmetric:
            if p + q != 2:
                raise ValueError("symmetry flag only supported for two-index fields")
            n = chart.dim
            for i in range(n):
                for j in range(i + 1, n):
                    if self.comps[i, j].expression != self.comps[j, i].expression:
                        raise ValueError("declared symmetric field has asymmetric components")

    @property
    def dim(self):
        return self.chart.dim

    def values(self, point):
        if self.comps.shape == ():
            return np.array(self.comps[()](point))
        return _values(self.comps, point)

    def jets(self, point, order):
        if self.comps.shape == ():
            out = np.empty((), dtype=object)
            out[()] = self.comps[()].eval_jet(point, order)
            return out
        return _jets(self.comps, point, order)


@dataclass
class PointTensor:
    """Numeric tensor components at a single point."""

    valence: tuple
    components: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        extents = set(self.components.shape)
        if len(extents) > 1:
            raise ValueError("all tensor extents must equal the chart dimension")


class ChartMap:
    """Smooth map between charts, given componentwise by scalar fields.

    Components are functions of the source coordinates; ``jacobian`` is the
    matrix d(target)/d(source) obtained by jet evaluation.
    """

    def __init__(self, source, target, comps):
        self.source = source
        self.target = target
        self.comps = _field_array(source, comps, (target.dim,))

    def __call__(self, point):
        return _values(self.comps, point)

    def jacobian(self, point):
        n, m = self.target.dim, self.source.dim
        J = np.empty((n, m))
        for t in range(n):
            J[t] = self.comps[t].eval_jet(point, 1).gradient()
        return J

    def validate(self, points=None, seed=0):
        if points is None:
            points = sample_points(self.source, 12, seed=seed)
        for p in points:
            if abs(np.linalg.det(self.jacobian(p))) < 1e-12:
                raise ValueError(f"chart map has singular Jacobian at {tuple(p)}")
        return self

    def substitution(self):
        return {name: f.expression for name, f in zip(self.target.coords, self.comps)}


def compose_maps(outer, inner):
    """The map ``outer o inner`` (apply ``inner`` first)."""
    if inner.target.coords != outer.source.coords:
        raise ValueError("chart maps do not compose: intermediate charts differ")
    sub_map = inner.substitution()
    comps = [f.expression.substitute(sub_map) for f in outer.comps]
    return ChartMap(inner.source, outer.target, comps)


def identity_map(chart):
    return ChartMap(chart, chart, [chart.field(c) for c in chart.coords])


# ---------------------------------------------------------------------------
# Connection and curvature operations
# ---------------------------------------------------------------------------


def christoffel(g):
    """Levi-Civita connection of ``g``, built symbolically.

    The result annihilates the metric: the weighted covariant derivative of g
    vanishes identically, which the test suite checks pointwise.
    """
    chart = g.chart
    n = g.dim
    for p in sample_points(chart, 6, seed=1):
        if abs(np.linalg.det(g.matrix(p))) < 1e-12:
            raise ValueError(f"metric is singular at sample point {tuple(p)}")
    inv = g.inverse_comps()
    coords = chart.coords
    diff_memos = [dict() for _ in range(n)]  # keep derivative subgraphs shared
    dg = np.empty((n, n, n), dtype=object)  # dg[k][i][j] = d_k g_ij
    for k, i, j in np.ndindex(n, n, n):
        dg[k, i, j] = g.comps[i, j].expression.diff(coords[k], diff_memos[k])
    gamma = np.empty((n, n, n), dtype=object)
    for i, j, k in np.ndindex(n, n, n):
        if k < j:
            gamma[i, j, k] = gamma[i, k, j]
            continue
        total = Num(0.0)
        for s in range(n):
            bracket = sub(add(dg[j, s, k], dg[k, s, j]), dg[s, j, k])
            total = add(total, mul(inv[i, s].expression, bracket))
        gamma[i, j, k] = mul(Num(0.5), total)
    return ConnectionField(chart, gamma)


def projective_shift(conn, phi):
    """Reparameterize the geodesics: Gamma^i_jk + phi_k d^i_j + phi_j d^i_k."""
    if phi.chart.coords != conn.chart.coords:
        raise ValueError("connection and one-form live on different charts")
    n = conn.dim
    comps = np.empty((n, n, n), dtype=object)
    for i, j, k in np.ndindex(n, n, n):
        e = conn.comps[i, j, k].expression
        if i == j:
            e = add(e, phi.comps[k].expression)
        if i == k:
            e = add(e, phi.comps[j].expression)
        comps[i, j, k] = e
    return ConnectionField(conn.chart, comps)


def curvature_point(conn, point, order=0):
    """Jets (or values for order 0) of R^h_ijk at a point.

    Index convention: R^h_ijk = d_j Gamma^h_ik - d_k Gamma^h_ij
    + Gamma^a_ik Gamma^h_aj - Gamma^a_ij Gamma^h_ak, antisymmetric in (j,k).
    """
    n = conn.dim
    gjets = conn.jets(point, order + 1)
    out = np.empty((n, n, n, n), dtype=object)
    for h, i, j, k in np.ndindex(n, n, n, n):
        if k < j:
            continue
        if j == k:
            out[h, i, j, k] = gjets[h, i, k].truncate(order) * 0.0
            continue
        term = gjets[h, i, k].derivative(j).truncate(order) - gjets[h, i, j].derivative(k).truncate(order)
        for a in range(n):
            term = term + (gjets[a, i, k].truncate(order) * gjets[h, a, j].truncate(order)
                           - gjets[a, i, j].truncate(order) * gjets[h, a, k].truncate(order))
        out[h, i, j, k] = term
    for h, i, j, k in np.ndindex(n, n, n, n):
        if k < j:
            out[h, i, j, k] = -out[h, i, k, j]
    return out


def curvature_tensor(conn, point):
    jets = curvature_point(conn, point, order=0)
    vals = np.empty(jets.shape)
    for idx in np.ndindex(jets.shape):
        vals[idx] = jets[idx].value
    return PointTensor((1, 3), vals)


def ricci_point(conn, point, order=0):
    """Jets of R_ij := R^a_ija (first upper against last lower)."""
    n = conn.dim
    R = curvature_point(conn, point, order)
    out = np.empty((n, n), dtype=object)
    for i, j in np.ndindex(n, n):
        total = R[0, i, j, 0]
        for a in range(1, n):
            total = total + R[a, i, j, a]
        out[i, j] = total
    return out

def ricci_tensor(conn, point):
    jets = ricci_point(conn, point, order=0)
    vals = np.empty(jets.shape)
    for idx in np.ndindex(jets.shape):
        vals[idx] = jets[idx].value
    return PointTensor((0, 2), vals)


def weighted_covariant_derivative(T, conn, point):
    """Pointwise covariant derivative of a weighted tensor, extra index last.

    For weight 0 this is the ordinary covariant derivative; the weight enters
    only through the ``-(k/(n+1)) Gamma^s_ks`` term of the coordinate
    trivialization.
    """
    if T.chart.coords != conn.chart.coords:
        raise ValueError("tensor and connection live on different charts")
    n = T.dim
    p, q = T.valence
    gam = conn.values(point)
    trace = np.einsum("sjs->j", gam)
    tj = T.jets(point, 1)
    shape = (n,) * (p + q)
    vals = np.empty(shape) if shape else np.empty(())
    grads = np.empty(shape + (n,))
    for idx in np.ndindex(tj.shape):
        vals[idx] = tj[idx].value
        grads[idx] = tj[idx].gradient()

    out = np.empty(shape + (n,))
    wfac = T.weight / (n + 1)
    for idx in np.ndindex(shape):
        for k in range(n):
            total = grads[idx + (k,)] if shape else grads[(k,)]
            for a in range(p):  # upper slots
                for s in range(n):
                    swapped = idx[:a] + (s,) + idx[a + 1 :]
                    total += gam[idx[a], k, s] * vals[swapped]
            for b in range(q):  # lower slots
                pos = p + b
                for s in range(n):
                    swapped = idx[:pos] + (s,) + idx[pos + 1 :]
                    total -= gam[s, idx[pos], k] * vals[swapped]
            total -= wfac * trace[k] * (vals[idx] if shape else vals[()])
            out[idx + (k,)] = total
    return PointTensor((p, q + 1), out)


def volume_weight_field(g, beta):
    """(Vol_g)^beta as a weight-((n+1) beta) scalar, component |det g|^(beta/2)."""
    n = g.dim
    det = sym_det(g.comps)
    comp = powx(Call("abs", det), Num(beta / 2.0)) if beta != 0 else Num(1.0)
    return WeightedTensorField(g.chart, (0, 0), (n + 1) * beta, ScalarField(comp, g.chart.coords))


def pullback_weighted(T, cmap):
    """Pull a weighted tensor on the target chart back along the map.

    Tensor slots transform classically through the Jacobian; the weight
    contributes ``|det J|^(k/(n+1))``.  The identity map returns identical
    components.
    """
    if T.chart.coords != cmap.target.coords:
        raise ValueError("tensor does not live on the map's target chart")
    if T.dim != cmap.source.dim:
        raise ValueError("weighted pullback requires equal chart dimensions")
    n = T.dim
    p, q = T.valence
    source = cmap.source
    sub_map = cmap.substitution()

    diff_memos = [dict() for _ in range(n)]
    jac = np.empty((n, n), dtype=object)  # J[t][s] = d target_t / d source_s
    for t, s in np.ndindex(n, n):
        jac[t, s] = ScalarField(
            cmap.comps[t].expression.diff(source.coords[s], diff_memos[s]), source.coords
        )
    jac_inv, det = sym_inverse(source, jac)

    weight_expr = None
    if T.weight != 0:
        weight_expr = powx(Call("abs", det), Num(T.weight / (n + 1.0)))

    shape = (n,) * (p + q)
    sub_memo = {}
    pulled_old = np.empty(shape if shape else (), dtype=object)
    if shape:
        for idx in np.ndindex(shape):
            pulled_old[idx] = T.comps[idx].expression.substitute(sub_map, sub_memo)
    else:
        pulled_old[()] = T.comps[()].expression.substitute(sub_map, sub_memo)

    out = np.empty(shape if shape else (), dtype=object)
    for new_idx in np.ndindex(shape) if shape else [()]:
        total = Num(0.0)
        for old_idx in np.ndindex(shape) if shape else [()]:
            factor = pulled_old[old_idx]
            for a in range(p):  # v_new^i = (J^-1)^i_a v_old^a
                factor = mul(factor, jac_inv[new_idx[a], old_idx[a]].expression)
            for b in range(q):  # w^new_j = J^a_j w^old_a
                factor = mul(factor, jac[old_idx[p + b], new_idx[p + b]].expression)
            total = add(total, factor)
        if weight_expr is not None:
            total = mul(weight_expr, total)
        out[new_idx] = total

    if not shape:
        return WeightedTensorField(source, (0, 0), T.weight, ScalarField(out[()], source.coords))
    if T.symmetric:
        for i in range(n):
            for j in range(i + 1, n):
                out[j, i] = out[i, j]
    return WeightedTensorField(source, (p, q), T.weight, out, symmetric=T.symmetric)
