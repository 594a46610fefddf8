import numpy as np
import pytest

from gaplab.semiclassical import (build_potential, choose_box,
                                  gap_asymptotics, gns_check, ims_check,
                                  laplace_constant, smooth_partition,
                                  spectral_gap, tail_mass,
                                  trial_upper_bound)


def test_build_potential_presets():
    ou = build_potential("ou", N=2)
    assert ou.sigma1 == 1.0
    q = build_potential("quartic")
    assert q.hess0[0, 0] == 1.0
    an = build_potential("aniso", N=2, diag=[1.0, 3.0])
    assert an.sigma1 == 1.0
    poly = build_potential("poly", coeffs={2: 0.5, 6: 0.1})
    assert poly.sigma1 == 1.0
    with pytest.raises(ValueError):
        build_potential("quartic", N=2)
    with pytest.raises(ValueError):
        build_potential("aniso", N=2, diag=[1.0, -1.0])
    with pytest.raises(ValueError):
        build_potential("poly", coeffs={1: 1.0})
    with pytest.raises(ValueError):
        build_potential("nope")


def test_validate_rejects_double_well():
    pot = build_potential("poly", coeffs={2: -0.5, 4: 1.0})
    with pytest.raises(ValueError):
        pot.validate(2.0)


def test_choose_box_shrinks_with_lambda():
    pot = build_potential("ou")
    L1 = choose_box(pot, 1.0)
    L2 = choose_box(pot, 100.0)
    assert L2 < L1
    # box keeps lambda * E on the boundary large enough for 1e-8 mass
    assert 100.0 * float(pot.E(np.array([[L2]]))[0]) > 40.0


def test_ou_gap_exact():
    pot = build_potential("ou")
    for lam in (1.0, 10.0):
        g = spectral_gap(pot, lam)
        assert g.e2_over_lambda == pytest.approx(1.0, rel=1e-2)
        assert abs(g.lowest) <= 1e-8 * lam


def test_realizations_agree():
    pot = build_potential("quartic")
    lam = 50.0
    g1 = spectral_gap(pot, lam, realization="divergence")
    g2 = spectral_gap(pot, lam, realization="schrodinger")
    assert abs(g1.e2 - g2.e2) / g1.e2 < 5e-3


def test_gap_asymptotics_quartic():
    pot = build_potential("quartic")
    out = gap_asymptotics(pot, [10.0, 30.0, 100.0])
    r = out["ratios"]
    # ratios approach sigma1 = 1 monotonically from above
    assert np.all(np.diff(r) < 0)
    assert abs(r[-1] - 1.0) < 0.1
    assert abs(out["extrapolated"] - out["sigma1"]) < 0.05
    with pytest.raises(ValueError):
        gap_asymptotics(pot, [10.0, 100.0])


def test_spectral_gap_validation():
    pot = build_potential("ou")
    with pytest.raises(ValueError):
        spectral_gap(pot, -1.0)
    with pytest.raises(ValueError):
        spectral_gap(pot, 1.0, realization="bogus")


def test_laplace_constant():
    pot = build_potential("quartic")
    # Z * (lam/2pi)^{1/2} -> det(D^2 E(0))^{-1/2} = 1
    v100 = laplace_constant(pot, 100.0)
    v10 = laplace_constant(pot, 10.0)
    assert abs(v100 - 1.0) < 0.02
    assert abs(v100 - 1.0) < abs(v10 - 1.0)


def test_tail_mass_gaussian_oracle():
    from scipy.stats import norm
    pot = build_potential("ou")
    lam, r = 25.0, 0.8
    oracle = 2 * norm.sf(r * np.sqrt(lam))
    assert tail_mass(pot, lam, r) == pytest.approx(oracle, rel=1e-6)


def test_gns_check_holds():
    pot = build_potential("ou")
    out = gns_check(pot, 20.0, V=lambda x: 0.3 * np.cos(x))
    assert out["skipped"] is None
    assert out["C"] == pytest.approx(2.0, rel=1e-8)
    assert out["lhs"] >= out["rhs"] - 1e-10


def test_gns_check_skips_nonconvex():
    pot = build_potential("poly", coeffs={2: 0.5, 4: -0.01, 6: 0.05})
    out = gns_check(pot, 20.0, V=lambda x: np.zeros_like(x))
    if out["skipped"] is not None:
        assert out["C"] is None
    else:
        assert out["lhs"] >= out["rhs"] - 1e-10


def test_smooth_partition_and_ims():
    chi0, chi1 = smooth_partition(0.5, 1.0)
    x = np.linspace(-3, 3, 1001)
    assert np.max(np.abs(chi0(x) ** 2 + chi1(x) ** 2 - 1.0)) < 1e-12
    pot = build_potential("quartic")
    resid = ims_check(lambda x: np.sin(x), (chi0, chi1), pot, 50.0)
    assert resid < 1e-8
    with pytest.raises(ValueError):
        smooth_partition(1.0, 0.5)
    bad = (lambda x: np.ones_like(x), lambda x: np.ones_like(x))
    with pytest.raises(ValueError):
        ims_check(lambda x: x, bad, pot, 50.0)


def test_trial_upper_bound_quartic():
    pot = build_potential("quartic")
    out = trial_upper_bound(pot, 200.0)
    assert out["sigma1"] == 1.0
    # upper bound: quotient >= sigma1, tight as lambda grows
    assert 1.0 <= out["quotient_over_lambda"] < 1.05
    assert abs(out["mean"]) < 1e-8
