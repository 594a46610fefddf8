"""Jacobi and Riccati ODE systems along a minimal geodesic.

Produces the matrix Jacobi field W, the symmetric ratio A(t) = t W'(t)
W(t)^{-1}, and the derived quantities K, the regular part of K, N and M
that feed the integral-operator assembly.  Everything is integrated with
a classical fixed-step fourth-order scheme for reproducibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .radial import radial_curvature

__all__ = ["GeodesicData", "JacobiSolution", "ConjugatePointError",
           "solve_jacobi", "riccati_A", "build_KNM"]

_COND_LIMIT = 1e12


class ConjugatePointError(RuntimeError):
    """The Jacobi field degenerates on (0,1]: geodesic outside the
    small-ball regime the construction assumes."""


@dataclass
class GeodesicData:
    """Dimension, distance and curvature operator along the geodesic.

    R(t) is the (scaled, dimensionless) curvature operator d^2 *
    Rbar(c)(., xi)(xi) at parameter t; it must be symmetric.
    """

    n: int
    d: float
    R: callable  # t -> (n, n) symmetric array

    def R_rev(self, t):
        return self.R(1.0 - t)

    @classmethod
    def constant_curvature(cls, kappa, d, n=2):
        """Radial-type geodesic in constant curvature: eigenvalue 0 on the
        radial direction, kappa*d^2 on the orthogonal complement."""
        scale = kappa * d * d
        base = np.zeros((n, n))
        base[1:, 1:] = scale * np.eye(n - 1)
        return cls(n=n, d=float(d), R=lambda t, base=base: base.copy())

    @classmethod
    def constant_curvature_block(cls, kappa, d, n=1):
        """Pure orthogonal block (no radial zero mode), for scalar
        spectral studies."""
        scale = kappa * d * d
        return cls(n=n, d=float(d),
                   R=lambda t, s=scale, n=n: s * np.eye(n))

    @classmethod
    def from_profile(cls, profile, d, n=3):
        """Geodesic of length d ending at the pole of a rotationally
        symmetric metric; the path sits at radius (1-t)*d at parameter t."""
        dd = float(d)

        def R(t, profile=profile, dd=dd, n=n):
            k = radial_curvature(profile, (1.0 - t) * dd)
            out = np.zeros((n, n))
            out[1:, 1:] = dd * dd * k * np.eye(n - 1)
            return out

        return cls(n=n, d=dd, R=R)


@dataclass
class JacobiSolution:
    """Dense-grid values of the Jacobi/Riccati system.

    All arrays are indexed by the uniform grid ``t``; K is undefined at
    t=1 (stored as nan there).
    """

    geo: GeodesicData
    t: np.ndarray
    W: np.ndarray = None
    Wp: np.ndarray = None
    A: np.ndarray = None
    K: np.ndarray = None
    Ntilde: np.ndarray = None
    N: np.ndarray = None
    M: np.ndarray = None
    m_consistency: float = None
    _splines: dict = field(default_factory=dict, repr=False)

    def _spline(self, name):
        if name not in self._splines:
            arr = getattr(self, name)
            self._splines[name] = CubicSpline(self.t, arr, axis=0)
        return self._splines[name]

    def A_at(self, t):
        return self._spline("A")(t)

    def W_at(self, t):
        return self._spline("W")(t)

    def Wp_at(self, t):
        return self._spline("Wp")(t)

    def Ntilde_at(self, t):
        return self._spline("Ntilde")(t)

    def N_at(self, t):
        return self._spline("N")(t)

    def M_at(self, t):
        t = np.asarray(t)
        return (1.0 - t)[..., None, None] * self.N_at(t)

    def K_at(self, t):
        """K(t) = -A(1-t)/(1-t); valid for t < 1."""
        t = np.asarray(t, dtype=float)
        return -self.A_at(1.0 - t) / (1.0 - t)[..., None, None]

    def csv_rows(self):
        rows = []
        for i, t in enumerate(self.t):
            row = [float(t)]
            for arr in (self.A, self.K, self.N, self.M):
                if arr is not None:
                    row.extend(np.asarray(arr[i]).ravel().tolist())
            rows.append(row)
        return rows


def _rk4(f, y0, t0, t1, steps):
    """Fixed-step classical RK4 returning the whole trajectory."""
    h = (t1 - t0) / steps
    ys = np.empty((steps + 1,) + y0.shape)
    ys[0] = y0
    y = y0
    t = t0
    for i in range(steps):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
        ys[i + 1] = y
    return ys


def solve_jacobi(geo, steps=1024):
    """Integrate W'' + R_rev W = 0, W(0)=0, W'(0)=I on [0,1].

    Raises ConjugatePointError if W(t) becomes numerically singular for
    some t > 0.
    """
    if steps < 128:
        raise ValueError("steps must be at least 128")
    n = geo.n

    def rhs(t, y):
        W, Wp = y
        return np.stack([Wp, -geo.R_rev(t) @ W])

    y0 = np.stack([np.zeros((n, n)), np.eye(n)])
    traj = _rk4(rhs, y0, 0.0, 1.0, steps)
    W = traj[:, 0]
    Wp = traj[:, 1]
    t = np.linspace(0.0, 1.0, steps + 1)
    for i in range(1, steps + 1):
        if np.linalg.cond(W[i]) / t[i] > _COND_LIMIT:
            raise ConjugatePointError(
                f"W(t) numerically singular at t={t[i]:.6f}")
    return JacobiSolution(geo=geo, t=t, W=W, Wp=Wp)


def riccati_A(geo, steps=1024):
    """Integrate A' = -t R_rev(t) - (A^2 - A)/t from the series seed.

    The removable singularity at t=0 is handled by starting at
    t0 = 1/steps with A(t0) = I - t0^2 R_rev(0)/3 (from the Taylor
    expansion W(t) = t I - t^3 R_rev(0)/6 + O(t^4)).  Returns the grid
    t_i = i/steps with A[0] = I.
    """
    if steps < 128:
        raise ValueError("steps must be at least 128")
    n = geo.n
    t0 = 1.0 / steps

    def rhs(t, A):
        return -t * geo.R_rev(t) - (A @ A - A) / t

    A0 = np.eye(n) - t0 * t0 * geo.R_rev(0.0) / 3.0
    # past a conjugate point the variable blows up in finite time; let it
    # overflow silently and detect the non-finite values below
    with np.errstate(over="ignore", invalid="ignore"):
        traj = _rk4(rhs, A0, t0, 1.0, steps - 1)
    A = np.empty((steps + 1, n, n))
    A[0] = np.eye(n)
    A[1:] = traj
    if not np.all(np.isfinite(A)):
        raise ConjugatePointError("Riccati variable blew up (conjugate point)")
    t = np.linspace(0.0, 1.0, steps + 1)
    return JacobiSolution(geo=geo, t=t, A=A)


def build_KNM(geo, steps=1024):
    """Assemble K, the regular part of K, N and M on a uniform grid.

    The Riccati equation is solved at double resolution so the N-ODE can
    be stepped with RK4 on the requested grid.  The consistency of
    M(t) with W(1-t) W(1)^{-1} (two independent routes to the same
    matrix) is recorded in ``m_consistency``.
    """
    n = geo.n
    fine = riccati_A(geo, 2 * steps)
    A_half = fine.A  # grid 0, 1/(2*steps), ..., 1
    R_rev0 = geo.R_rev(0.0)

    def ntilde_idx(j):
        # j indexes the half-grid: t = j/(2*steps), s = 1-t
        s = 1.0 - j / (2.0 * steps)
        if s < 10.0 / steps:
            # series for the regular part: (I - A(s))/s = s R_rev(0)/3 + O(s^3)
            return s * R_rev0 / 3.0
        return (np.eye(n) - A_half[2 * steps - j]) / s

    # RK4 for N' = Ntilde N on the coarse grid using half-grid Ntilde values
    N = np.empty((steps + 1, n, n))
    N[0] = np.eye(n)
    h = 1.0 / steps
    for i in range(steps):
        G0 = ntilde_idx(2 * i)
        G1 = ntilde_idx(2 * i + 1)
        G2 = ntilde_idx(2 * i + 2)
        y = N[i]
        k1 = G0 @ y
        k2 = G1 @ (y + h / 2 * k1)
        k3 = G1 @ (y + h / 2 * k2)
        k4 = G2 @ (y + h * k3)
        N[i + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    t = np.linspace(0.0, 1.0, steps + 1)
    A = A_half[::2]
    Ntilde = np.array([ntilde_idx(2 * i) for i in range(steps + 1)])
    K = np.empty((steps + 1, n, n))
    K[:-1] = -A[:0:-1] / (1.0 - t[:-1])[:, None, None]
    K[-1] = np.nan
    M = (1.0 - t)[:, None, None] * N

    sol = JacobiSolution(geo=geo, t=t, A=A, K=K, Ntilde=Ntilde, N=N, M=M)
    jac_w = solve_jacobi(geo, steps)
    sol.W = jac_w.W
    sol.Wp = jac_w.Wp
    W1_inv = np.linalg.inv(jac_w.W[-1])
    ref = jac_w.W[::-1] @ W1_inv
    sol.m_consistency = float(np.max(np.abs(M - ref)))
    return sol
