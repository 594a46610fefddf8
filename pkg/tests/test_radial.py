import numpy as np
import pytest

from gaplab.radial import (build_profile, validate_assumption_c, hessian_k,
                           radial_curvature, h3_heat_kernel,
                           h3_normalization, h3_kernel_asymptotics)


def test_flat_profile_trivial():
    p = build_profile("flat")
    r = np.linspace(0.0, 5.0, 11)
    assert np.all(p.phi(r) == 0)
    assert np.all(p.f(r) == r)
    for k in range(1, 5):
        assert np.all(p.phi_deriv(k, r) == 0)


def test_hyperbolic_profile_matches_sinh():
    a = 2.0
    p = build_profile("hyperbolic", a=a)
    r = np.linspace(0.1, 4.0, 40)
    f_expect = np.sinh(np.sqrt(a) * r) / np.sqrt(a)
    assert np.allclose(p.f(r), f_expect, rtol=1e-12)
    # phi' = sqrt(a) coth(sqrt(a) r) - 1/r, against finite differences
    h = 1e-6
    fd = (p.phi(r + h) - p.phi(r - h)) / (2 * h)
    assert np.allclose(p.phi_deriv(1, r), fd, atol=1e-7)


def test_hyperbolic_series_near_zero_finite():
    p = build_profile("hyperbolic", a=1.0)
    r = np.array([0.0, 1e-10, 1e-6, 1e-3])
    vals = p.phi_deriv(1, r)
    assert np.all(np.isfinite(vals))
    # phi'(r) ~ a r / 3 near zero
    assert vals[3] == pytest.approx(1e-3 / 3, rel=1e-3)


def test_mixture_profile_weights():
    p1 = build_profile("flat")
    p2 = build_profile("hyperbolic", a=1.0)
    mix = build_profile("mixture", components=[p1, p2],
                        weights=[0.25, 0.75])
    r = np.linspace(0.1, 2.0, 7)
    assert np.allclose(mix.phi(r), 0.75 * p2.phi(r))
    with pytest.raises(ValueError):
        build_profile("mixture", components=[p1, p2], weights=[0.5, 0.6])


def test_custom_profile_finite_differences():
    p = build_profile("custom", phi=lambda r: 0.1 * np.asarray(r) ** 2,
                      fd_step=1e-3)
    r = np.linspace(0.2, 2.0, 5)
    assert np.allclose(p.phi_deriv(1, r), 0.2 * r, atol=1e-6)
    assert np.allclose(p.phi_deriv(2, r), 0.2, atol=1e-5)


def test_assumption_c_presets():
    flat = validate_assumption_c(build_profile("flat"), r_max=5.0)
    assert flat.all_ok()
    assert flat.inf_r_phi_prime == 0.0
    hyp = validate_assumption_c(build_profile("hyperbolic", a=1.0),
                                r_max=5.0)
    assert hyp.all_ok()
    # r phi' >= 0 for hyperbolic (up to the grid sampling floor)
    assert hyp.inf_r_phi_prime > -1e-4


def test_assumption_c_violation():
    # phi with strongly negative r*phi': f develops a waist
    bad = build_profile("custom", phi=lambda r: -2.0 * np.log(
        1.0 + np.asarray(r) ** 2), fd_step=1e-4)
    rep = validate_assumption_c(bad, r_max=5.0)
    assert not rep.c3_inf_ok
    assert rep.inf_r_phi_prime < -0.5


def test_hessian_k_values():
    p = build_profile("hyperbolic", a=1.0)
    rad, tan = hessian_k(p, 1.0)
    assert rad == 1.0
    assert tan == pytest.approx(1.0 / np.tanh(1.0), rel=1e-10)
    assert hessian_k(p, 0.0) == (1.0, 1.0)


def test_radial_curvature_constant_for_hyperbolic():
    p = build_profile("hyperbolic", a=2.0)
    for r in (0.0, 0.3, 1.0, 3.0):
        assert radial_curvature(p, r) == pytest.approx(-2.0, abs=1e-8)
    assert radial_curvature(build_profile("flat"), 1.0) == 0.0


def test_h3_kernel_normalization():
    for t in (0.02, 0.2, 1.0):
        assert abs(h3_normalization(t) - 1.0) < 1e-8


def test_h3_kernel_small_time_gaussian():
    # as t -> 0 the kernel approaches the flat Gaussian
    t, r = 1e-3, 0.05
    flat = (2 * np.pi * t) ** -1.5 * np.exp(-r * r / (2 * t))
    assert h3_heat_kernel(t, r) == pytest.approx(flat, rel=5e-3)


def test_h3_asymptotics_residuals_decay_linearly():
    t_list = [0.2, 0.1, 0.05, 0.025]
    rows = h3_kernel_asymptotics(t_list, [1.0])
    for key in ("grad_resid", "hess_rad_resid", "hess_tan_resid"):
        vals = [row[key] for row in rows]
        for a, b in zip(vals, vals[1:]):
            assert 1.7 <= a / b <= 2.3


def test_h3_asymptotics_rejects_bad_inputs():
    with pytest.raises(ValueError):
        h3_kernel_asymptotics([-0.1], [1.0])
    with pytest.raises(ValueError):
        h3_kernel_asymptotics([0.1], [0.0])
