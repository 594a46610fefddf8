import numpy as np
import pytest

from gaplab.jacobi import (ConjugatePointError, GeodesicData, build_KNM,
                           riccati_A, solve_jacobi)


def _noncommuting_geo(scale=1.5):
    """Symmetric R(t) whose values at different t do not commute."""
    R0 = scale * np.array([[1.0, 0.3], [0.3, 0.5]])
    R1 = scale * np.array([[0.4, -0.6], [-0.6, 1.2]])
    return GeodesicData(n=2, d=1.0,
                        R=lambda t: (1 - t) * R0 + t * R1)


def test_constant_curvature_closed_form_positive():
    s = 2.5  # kappa * d^2
    geo = GeodesicData.constant_curvature(s, 1.0, n=2)
    sol = solve_jacobi(geo, steps=1024)
    t = sol.t
    w = np.sqrt(s)
    assert np.allclose(sol.W[:, 0, 0], t, atol=1e-10)
    assert np.allclose(sol.W[:, 1, 1], np.sin(w * t) / w, atol=1e-8)
    assert np.allclose(sol.Wp[:, 1, 1], np.cos(w * t), atol=1e-8)


def test_constant_curvature_closed_form_negative():
    s = -3.0
    geo = GeodesicData.constant_curvature(s, 1.0, n=2)
    sol = solve_jacobi(geo, steps=1024)
    w = np.sqrt(-s)
    assert np.allclose(sol.W[:, 1, 1], np.sinh(w * sol.t) / w, atol=1e-7)


def test_riccati_closed_form():
    s = 2.5
    geo = GeodesicData.constant_curvature(s, 1.0, n=2)
    sol = riccati_A(geo, steps=2048)
    t = sol.t[1:]
    w = np.sqrt(s)
    expect = t * w / np.tan(w * t)
    assert np.allclose(sol.A[1:, 1, 1], expect, atol=1e-7)
    assert np.allclose(sol.A[:, 0, 0], 1.0, atol=1e-8)


def test_riccati_matches_direct_jacobi():
    geo = _noncommuting_geo()
    direct = solve_jacobi(geo, steps=2048)
    ric = riccati_A(geo, steps=2048)
    t = direct.t
    keep = t >= 0.05
    A_direct = np.einsum(
        "s,sij,sjk->sik", t[keep],
        direct.Wp[keep], np.linalg.inv(direct.W[keep]))
    err = np.abs(A_direct - ric.A[keep]).max()
    assert err < 1e-6


def test_A_symmetry_noncommuting():
    geo = _noncommuting_geo()
    sol = riccati_A(geo, steps=2048)
    asym = np.abs(sol.A - np.transpose(sol.A, (0, 2, 1))).max()
    assert asym < 1e-8


def test_conjugate_point_detected():
    # Riccati blow-up past the first conjugate point
    geo = GeodesicData.constant_curvature(30.0, 1.0, n=2)
    with pytest.raises(ConjugatePointError):
        riccati_A(geo, steps=1024)
    # W degenerate exactly at t=1 (kappa d^2 = pi^2)
    geo = GeodesicData.constant_curvature(np.pi**2, 1.0, n=2)
    with pytest.raises(ConjugatePointError):
        solve_jacobi(geo, steps=1024)


def test_K_flat_closed_form():
    geo = GeodesicData.constant_curvature_block(0.0, 1.0, n=1)
    jac = build_KNM(geo, steps=512)
    for t in (0.1, 0.5, 0.9):
        assert jac.K_at(t)[0, 0] == pytest.approx(-1.0 / (1.0 - t),
                                                  rel=1e-8)


def test_build_KNM_consistency_and_boundary():
    geo = GeodesicData.constant_curvature(-1.0, 1.0, n=3)
    jac = build_KNM(geo, steps=512)
    assert jac.m_consistency < 1e-6
    assert np.allclose(jac.N[0], np.eye(3))
    assert np.allclose(jac.M[0], np.eye(3))
    assert np.allclose(jac.M[-1], 0.0)
    # M(t) = (1-t) N(t) by construction, also through the spline
    t = 0.37
    assert np.allclose(jac.M_at(t), (1 - t) * jac.N_at(t), atol=1e-10)


def test_step_validation():
    geo = GeodesicData.constant_curvature_block(0.0, 1.0)
    with pytest.raises(ValueError):
        solve_jacobi(geo, steps=64)
    with pytest.raises(ValueError):
        riccati_A(geo, steps=64)


def test_csv_rows_shape():
    geo = GeodesicData.constant_curvature(-1.0, 1.0, n=2)
    jac = build_KNM(geo, steps=256)
    rows = jac.csv_rows()
    assert len(rows) == 257
    # t + four 2x2 matrices (A, K, N, M)
    assert len(rows[0]) == 1 + 4 * 4
