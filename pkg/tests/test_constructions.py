from __future__ import annotations

import numpy as np
import pytest

from projcalc.constructions import (
    BeltramiMap,
    LeviCivitaData,
    beltrami_transform,
    dini_pair,
    flat_model,
    levi_civita_model,
    sphere_gnomonic_model,
)
from projcalc.exprjet import ScalarField
from projcalc.mobility import a_tensor, adapted_frame, sigma_from_metric
from projcalc.projinv import (
    constant_curvature_test,
    k_coefficients,
    liouville_tensor,
    metrisability_residual,
)
from projcalc.sampling import sample_points
from projcalc.tensorcalc import (
    ChartMap,
    WeightedTensorField,
    christoffel,
    compose_maps,
    curvature_tensor,
    pullback_weighted,
)


def test_dini_constants():
    d = dini_pair("3", "1")
    p = (0.2, -0.4)
    assert np.allclose(d.g.matrix(p), 2.0 * np.eye(2))
    assert np.allclose(d.gbar.matrix(p), np.diag([2.0 / 9.0, 2.0 / 3.0]))


def test_dini_positivity_error():
    with pytest.raises(ValueError, match="positivity"):
        dini_pair("1", "2")


def test_dini_equivalence_k_match():
    d = dini_pair("3 + 0.5*sin(x)", "1 + 0.5*cos(y)")
    kg = k_coefficients(christoffel(d.g))
    kbar = k_coefficients(christoffel(d.gbar))
    for p in sample_points(d.chart, 25, seed=3):
        assert np.max(np.abs(kg.values(p) - kbar.values(p))) < 1e-9


def test_dini_random_profiles():
    rng = np.random.default_rng(51)
    for _ in range(10):
        a = rng.uniform(2.5, 4.0)
        b = rng.uniform(0.1, 0.45)
        c = rng.uniform(0.5, 1.2)
        e = rng.uniform(0.1, 0.4)
        d = dini_pair(f"{a:.4f} + {b:.4f}*sin(x)", f"{c:.4f} + {e:.4f}*cos(y)")
        kg = k_coefficients(christoffel(d.g))
        kbar = k_coefficients(christoffel(d.gbar))
        A = a_tensor(sigma_from_metric(d.g), sigma_from_metric(d.gbar))
        for p in sample_points(d.chart, 5, seed=4):
            assert np.max(np.abs(kg.values(p) - kbar.values(p))) < 1e-9
            expected = np.diag([d.X(p), d.Y(p)])
            assert np.max(np.abs(A.values(p) - expected)) < 1e-9


def test_sphere_center_is_euclidean():
    g = sphere_gnomonic_model(2, 1.0)
    assert np.allclose(g.matrix((0.0, 0.0)), np.eye(2))


def test_sphere_matches_embedding_pullback():
    # oracle: parameterize the sphere by u -> (u, 1)/sqrt(1+|u|^2) and pull
    # back the ambient Euclidean metric
    for n in (2, 3):
        g = sphere_gnomonic_model(n, 0.8)
        coords = g.chart.coords
        norm = "1 + " + " + ".join(f"{c}^2" for c in coords)
        ambient = [ScalarField(f"{c}/sqrt({norm})", coords) for c in coords]
        ambient.append(ScalarField(f"1/sqrt({norm})", coords))
        for p in sample_points(g.chart, 6, seed=5):
            J = np.array([f.eval_jet(p, 1).gradient() for f in ambient])
            assert np.max(np.abs(J.T @ J - g.matrix(p))) < 1e-12


def test_sphere_unit_curvature_and_liouville():
    g = sphere_gnomonic_model(2, 0.9)
    ok, c, res = constant_curvature_test(g, sample_points(g.chart, 10, seed=6))
    assert ok and c == pytest.approx(1.0, abs=1e-9)
    for p in sample_points(g.chart, 5, seed=7):
        assert liouville_tensor(g, p).max_abs() < 1e-9


def test_sphere_projectively_flat():
    g = sphere_gnomonic_model(2, 0.9)
    cls = k_coefficients(christoffel(g))
    for p in sample_points(g.chart, 8, seed=8):
        assert np.max(np.abs(cls.values(p))) < 1e-12


def test_beltrami_identity():
    bmap = beltrami_transform(np.eye(3), 2)
    p = (0.3, -0.2)
    assert np.allclose(bmap(p), p)


def test_beltrami_diagonal_example():
    A = np.diag([2.0, 1.0, 0.5])
    bmap = beltrami_transform(A, 2, source_extent=0.2)
    p = np.array([0.05, -0.08])
    assert np.allclose(bmap(p), [4 * p[0], 2 * p[1]])
    # lines map to lines: three collinear points stay collinear
    line = np.array([[0.0, 0.01], [0.05, 0.06], [0.10, 0.11]])
    images = np.array([bmap(q) for q in line])
    d1 = images[1] - images[0]
    d2 = images[2] - images[0]
    assert abs(d1[0] * d2[1] - d1[1] * d2[0]) < 1e-12


def _random_sl(rng, size):
    M = np.eye(size) + 0.25 * rng.uniform(-1.0, 1.0, size=(size, size))
    return M / np.linalg.det(M) ** (1.0 / size)


def test_beltrami_composition_closure():
    rng = np.random.default_rng(53)
    A = _random_sl(rng, 3)
    B = _random_sl(rng, 3)
    small = 0.15
    mapA = beltrami_transform(A, 2, source_extent=small)
    mapB = beltrami_transform(B, 2, source_extent=small)
    mapAB = beltrami_transform(A @ B, 2, source_extent=small)
    composed = compose_maps(mapA.chart_map, mapB.chart_map)
    for p in sample_points(mapB.chart_map.source, 6, seed=9):
        assert np.max(np.abs(composed(p) - mapAB(p))) < 1e-12


def test_beltrami_pullback_keeps_constant_curvature():
    rng = np.random.default_rng(57)
    sphere = sphere_gnomonic_model(2, 1.0)
    sigma = sigma_from_metric(sphere).sigma
    A = _random_sl(rng, 3)
    bmap = beltrami_transform(A, 2, source_extent=0.3)
    pulled = pullback_weighted(sigma, bmap.chart_map)

    from projcalc.mobility import metric_from_sigma

    g2 = metric_from_sigma(pulled)
    for p in sample_points(bmap.chart_map.source, 5, seed=10):
        assert liouville_tensor(g2, p).max_abs() < 1e-9
    cls = k_coefficients(christoffel(g2))
    for p in sample_points(bmap.chart_map.source, 5, seed=11):
        assert np.max(np.abs(cls.values(p))) < 1e-9


def test_beltrami_rejects_bad_matrix():
    with pytest.raises(ValueError, match="determinant"):
        beltrami_transform(2.0 * np.eye(3), 2)


def test_flat_model():
    gamma, g = flat_model(2)
    assert np.allclose(curvature_tensor(gamma, (0.3, 0.1)).components, 0.0)
    assert np.allclose(k_coefficients(gamma).values((0.2, 0.2)), 0.0)
    assert np.allclose(g.matrix((0.5, -0.5)), np.eye(2))


def test_levi_civita_minimal_model():
    data = LeviCivitaData(lam="0.5 + 0.25*sin(x)", h=[["1"]], hbar=[["1"]])
    chart, g, a_comps = levi_civita_model(data, domain_extent=0.7)
    assert chart.dim == 3
    point = (0.2, -0.3, 0.4)
    lam = ScalarField("0.5 + 0.25*sin(x)", chart.coords)(point)
    assert np.allclose(
        g.matrix(point), np.diag([lam * (1 - lam), 1 - lam, lam]), atol=1e-14
    )

    sigma = sigma_from_metric(g)
    assert sigma.residual_norm < 1e-9

    # sigma composed with the endomorphism is again a solution
    from projcalc.exprjet import Num, add, mul
    from projcalc.tensorcalc import christoffel as lc

    n = 3
    comps = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            total = Num(0.0)
            for s in range(n):
                total = add(total, mul(a_comps[i, s], sigma.sigma.comps[s, j].expression))
            comps[i, j] = comps[j, i] = total
    sigma_bar = WeightedTensorField(chart, (2, 0), 2.0, comps, symmetric=True)
    gamma = lc(g)
    for p in sample_points(chart, 5, seed=12):
        assert np.max(np.abs(metrisability_residual(sigma_bar, gamma, p).components)) < 1e-9

    # endomorphism of the pair diagonalizes as (lambda, 0, 1) in a g-frame
    A = a_tensor(sigma, sigma_bar)
    frame, evals, structure = adapted_frame(g, A, point)
    assert structure.pattern
    assert structure.m == 1 and structure.mbar == 1
    assert structure.lam == pytest.approx(lam, abs=1e-10)
    assert np.allclose(frame.T @ g.matrix(point) @ frame, np.eye(3), atol=1e-10)
    assert np.allclose(
        np.diag([structure.lam, 0.0, 1.0]),
        np.linalg.inv(frame) @ A.values(point) @ frame,
        atol=1e-9,
    )


def test_levi_civita_lambda_guard():
    data = LeviCivitaData(lam="x", h=[["1"]], hbar=[["1"]])
    with pytest.raises(ValueError):
        levi_civita_model(data, domain_extent=0.9)
