"""Rotationally symmetric metrics given by a radial warping profile.

A metric of the form dr^2 + f(r)^2 dTheta^2 around a pole is encoded by
phi(r) = log(f(r)/r), so f(r) = r * exp(phi(r)) with f(0)=0, f'(0)=1
automatic.  Presets cover the flat and constant-negative-curvature cases
plus convex mixtures; custom profiles are supported through sampled phi
values differentiated by centered finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

__all__ = [
    "RadialProfile",
    "AssumptionReport",
    "build_profile",
    "validate_assumption_c",
    "hessian_k",
    "radial_curvature",
    "h3_heat_kernel",
    "h3_kernel_asymptotics",
    "h3_normalization",
]

# Below this value of sqrt(a)*r the closed-form hyperbolic derivatives
# lose digits to cancellation; switch to the Taylor series of
# log(sinh(u)/u) = u^2/6 - u^4/180 + u^6/2835 - u^8/37800 + ...
_SERIES_CUT = 1e-2
_C = (1.0 / 6.0, -1.0 / 180.0, 1.0 / 2835.0, -1.0 / 37800.0)


def _hyp_phi(a, r):
    u = np.sqrt(a) * np.asarray(r, dtype=float)
    small = u < _SERIES_CUT
    u_safe = np.where(small, 1.0, u)
    out = np.log(np.sinh(u_safe) / u_safe)
    u2 = u * u
    ser = u2 * (_C[0] + u2 * (_C[1] + u2 * (_C[2] + u2 * _C[3])))
    return np.where(small, ser, out)


def _hyp_phi_deriv(a, k, r):
    r = np.asarray(r, dtype=float)
    sa = np.sqrt(a)
    u = sa * r
    small = u < _SERIES_CUT
    u_safe = np.where(small | (u == 0), 1.0, u)
    coth = 1.0 / np.tanh(u_safe)
    csch2 = 1.0 / np.sinh(u_safe) ** 2
    r_safe = np.where(r == 0, 1.0, r)
    if k == 1:
        closed = sa * coth - 1.0 / r_safe
        ser = (2 * _C[0] * a * r + 4 * _C[1] * a**2 * r**3
               + 6 * _C[2] * a**3 * r**5 + 8 * _C[3] * a**4 * r**7)
    elif k == 2:
        closed = -a * csch2 + 1.0 / r_safe**2
        ser = (2 * _C[0] * a + 12 * _C[1] * a**2 * r**2
               + 30 * _C[2] * a**3 * r**4 + 56 * _C[3] * a**4 * r**6)
    elif k == 3:
        closed = 2 * a * sa * csch2 * coth - 2.0 / r_safe**3
        ser = (24 * _C[1] * a**2 * r + 120 * _C[2] * a**3 * r**3
               + 336 * _C[3] * a**4 * r**5)
    elif k == 4:
        closed = -2 * a**2 * csch2 * (2 * coth**2 + csch2) + 6.0 / r_safe**4
        ser = (24 * _C[1] * a**2 + 360 * _C[2] * a**3 * r**2
               + 1680 * _C[3] * a**4 * r**4)
    else:
        raise ValueError(f"derivative order {k} not supported (need 1..4)")
    return np.where(small, ser, closed)


@dataclass
class RadialProfile:
    """Warping data f(r) = r*exp(phi(r)) of a rotationally symmetric metric.

    phi and its derivatives up to order four are evaluated through the
    attached callables; presets use closed forms, custom profiles finite
    differences.
    """

    preset: str
    params: dict = field(default_factory=dict)
    _phi: callable = None
    _deriv: callable = None  # (k, r) -> value

    def phi(self, r):
        return self._phi(np.asarray(r, dtype=float))

    def phi_deriv(self, k, r):
        if k not in (1, 2, 3, 4):
            raise ValueError("derivative order must be in 1..4")
        return self._deriv(k, np.asarray(r, dtype=float))

    def f(self, r):
        r = np.asarray(r, dtype=float)
        return r * np.exp(self.phi(r))

    def to_dict(self):
        doc = {"preset": self.preset, "parameters": dict(self.params)}
        if "custom_grid" in self.params:
            doc["custom_grid"] = [list(p) for p in self.params["custom_grid"]]
            doc["parameters"] = {
                k: v for k, v in self.params.items() if k != "custom_grid"
            }
        return doc


def build_profile(preset, **params):
    """Construct a RadialProfile from a preset tag.

    Presets: "flat"; "hyperbolic" with curvature parameter a > 0;
    "mixture" with components (list of profiles) and probability weights;
    "custom" with either a callable phi (and fd_step) or a uniform grid of
    (r, phi) samples.
    """
    if preset == "flat":
        return RadialProfile(
            "flat", {},
            _phi=lambda r: np.zeros_like(r),
            _deriv=lambda k, r: np.zeros_like(r),
        )
    if preset == "hyperbolic":
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise ValueError("hyperbolic preset needs a > 0")
        return RadialProfile(
            "hyperbolic", {"a": a},
            _phi=lambda r, a=a: _hyp_phi(a, r),
            _deriv=lambda k, r, a=a: _hyp_phi_deriv(a, k, r),
        )
    if preset == "mixture":
        comps = params["components"]
        weights = np.asarray(params["weights"], dtype=float)
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("mixture weights must be positive and sum to 1")
        if len(comps) != len(weights):
            raise ValueError("components/weights length mismatch")

        def phi(r, comps=comps, w=weights):
            return sum(wi * c.phi(r) for wi, c in zip(w, comps))

        def deriv(k, r, comps=comps, w=weights):
            return sum(wi * c.phi_deriv(k, r) for wi, c in zip(w, comps))

        return RadialProfile(
            "mixture",
            {"weights": list(weights),
             "component_presets": [c.preset for c in comps]},
            _phi=phi, _deriv=deriv,
        )
    if preset == "custom":
        if "phi" in params:
            fun = params["phi"]
            h = float(params.get("fd_step", 1e-3))
            meta = {"fd_step": h}
        else:
            grid = np.asarray(params["grid"], dtype=float)
            r_g, phi_g = grid[:, 0], grid[:, 1]
            h = float(params.get("fd_step", r_g[1] - r_g[0]))

            def fun(r, r_g=r_g, phi_g=phi_g):
                return np.interp(np.abs(r), r_g, phi_g)

            meta = {"fd_step": h, "custom_grid": [list(p) for p in grid]}

        # centered second-order stencils; |r| extension makes phi even so
        # the stencils remain usable down to r = 0
        def deriv(k, r, fun=fun, h=h):
            r = np.asarray(r, dtype=float)
            if k == 1:
                return (fun(r + h) - fun(r - h)) / (2 * h)
            if k == 2:
                return (fun(r + h) - 2 * fun(r) + fun(r - h)) / h**2
            if k == 3:
                return (fun(r + 2 * h) - 2 * fun(r + h)
                        + 2 * fun(r - h) - fun(r - 2 * h)) / (2 * h**3)
            return (fun(r + 2 * h) - 4 * fun(r + h) + 6 * fun(r)
                    - 4 * fun(r - h) + fun(r - 2 * h)) / h**4

        return RadialProfile("custom", meta, _phi=fun, _deriv=deriv)
    raise ValueError(f"unknown preset {preset!r}")


@dataclass
class AssumptionReport:
    """Grid-sampled check of the profile regularity/convexity conditions."""

    c1_bounded_derivs: bool
    c2_even_proxy: bool
    c3_inf_ok: bool
    inf_r_phi_prime: float
    r_max: float
    grid_size: int

    def all_ok(self):
        return self.c1_bounded_derivs and self.c2_even_proxy and self.c3_inf_ok

    def csv_row(self, preset):
        return [preset, self.r_max, int(self.c1_bounded_derivs),
                int(self.c2_even_proxy), int(self.c3_inf_ok),
                self.inf_r_phi_prime]


_DERIV_BOUND = 1e8


def validate_assumption_c(profile, r_max, grid_size=256):
    """Check the three admissibility conditions on a geometric grid.

    (1) derivatives of phi up to order four stay bounded, (2) phi behaves
    as a function of r^2 near 0 (checked via boundedness of |phi'(r)|/r),
    (3) inf r*phi'(r) > -1/2.  Deterministic for fixed inputs.
    """
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    grid = np.geomspace(r_max * 1e-4, r_max, grid_size)

    c1 = True
    for k in range(1, 5):
        vals = profile.phi_deriv(k, grid)
        if not np.all(np.isfinite(vals)) or np.max(np.abs(vals)) > _DERIV_BOUND:
            c1 = False

    phi1 = profile.phi_deriv(1, grid)
    q = np.abs(phi1) / grid
    # evenness proxy: |phi'|/r must not blow up toward r=0; compare the
    # smallest grid point against the value one decade up
    i_dec = int(np.searchsorted(grid, grid[0] * 10.0))
    i_dec = max(1, min(i_dec, grid_size - 1))
    c2 = bool(np.isfinite(q[0]) and q[0] <= 3.0 * q[i_dec] + 1e-9)

    r_phi = grid * phi1
    inf_rphi = float(np.min(r_phi))
    c3 = inf_rphi > -0.5

    return AssumptionReport(c1, c2, c3, inf_rphi, float(r_max), int(grid_size))


def hessian_k(profile, r):
    """Eigenvalues of the Hessian of d(y0,.)^2/2 at radius r.

    Radial eigenvalue is exactly 1; the tangential one is 1 + r*phi'(r).
    At r=0 both are 1 by continuity.
    """
    r = float(r)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r == 0.0:
        return 1.0, 1.0
    return 1.0, 1.0 + r * float(profile.phi_deriv(1, r))


def radial_curvature(profile, r):
    """Radial curvature K(r) = -f''(r)/f(r).

    Expressed through phi: K = -(2 phi'/r + phi'^2 + phi''), extended at
    r=0 by the series limit K(0) = -3 phi''(0).
    """
    r = float(r)
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if r < 1e-8:
        return -3.0 * float(profile.phi_deriv(2, 0.0))
    p1 = float(profile.phi_deriv(1, r))
    p2 = float(profile.phi_deriv(2, r))
    return -(2.0 * p1 / r + p1 * p1 + p2)


# --- closed-form heat kernel on 3-dimensional hyperbolic space ----------
#
# Kernel of the semigroup exp(t*Laplacian/2); the normalization test
# against the volume element 4*pi*sinh(r)^2 dr guards this convention.

def h3_heat_kernel(t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return ((2 * np.pi * t) ** -1.5 * (r / np.sinh(r))
            * np.exp(-t / 2.0 - r * r / (2.0 * t)))


def h3_log_kernel_dr(t, r):
    """d/dr of log p(t, r)."""
    return 1.0 / r - 1.0 / np.tanh(r) - r / t


def h3_log_kernel_d2r(t, r):
    """d^2/dr^2 of log p(t, r)."""
    return -1.0 / r**2 + 1.0 / np.sinh(r) ** 2 - 1.0 / t


def h3_normalization(t):
    """Integral of the kernel against the volume element; should be 1.

    The integrand p(t,r) * 4 pi sinh(r)^2 is written with the sinh factors
    combined into exponentials so large radii do not overflow.
    """
    c = 4 * np.pi * (2 * np.pi * t) ** -1.5 * np.exp(-t / 2.0)

    def integrand(r):
        # r * sinh(r) * exp(-r^2/(2t))
        return c * r * 0.5 * (np.exp(r - r * r / (2 * t))
                              - np.exp(-r - r * r / (2 * t)))

    val, _ = quad(integrand, 0, np.inf, limit=200)
    return val


def h3_kernel_asymptotics(t_list, r_list):
    """Short-time residuals of the log-kernel derivatives against the
    geometric limits.

    Returns a list of rows (t, r, grad_resid, hess_rad_resid,
    hess_tan_resid); each residual is expected to decay linearly in t.
    """
    rows = []
    for t in np.atleast_1d(np.asarray(t_list, dtype=float)):
        if t <= 0:
            raise ValueError("t must be positive")
        for r in np.atleast_1d(np.asarray(r_list, dtype=float)):
            if r <= 0:
                raise ValueError("r must be positive")
            d1 = h3_log_kernel_dr(t, r)
            d2 = h3_log_kernel_d2r(t, r)
            coth = 1.0 / np.tanh(r)
            rows.append({
                "t": float(t),
                "r": float(r),
                "grad_resid": abs(t * d1 + r),
                "hess_rad_resid": abs(t * d2 + 1.0),
                "hess_tan_resid": abs(t * coth * d1 + r * coth),
            })
    return rows
