"""Finite-dimensional semiclassical limit: spectral gaps of weighted
Dirichlet forms on R^N and their lambda -> infinity asymptotics.

The Dirichlet form is E(F,F) = int |grad F|^2 dnu_lambda with
nu_lambda = Z^-1 exp(-lambda E) dx.  Two independent self-adjoint
realizations are built on a truncated box: a measure-weighted
divergence-form finite-difference operator (natural Neumann boundary,
keeps the constant ground state) and the ground-state-transformed
Schrodinger operator -Delta + (lambda^2/4)|grad E|^2 - (lambda/2) Delta E
(Dirichlet boundary).  Their gap agreement is part of the test surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.sparse.linalg import eigsh

__all__ = ["WeightedPotential", "GapResult", "build_potential",
           "spectral_gap", "gap_asymptotics", "laplace_constant",
           "tail_mass", "gns_check", "ims_check", "trial_upper_bound"]

_BOX_LOG_MASS = 46.0      # lambda * min boundary E >= this => mass < 1e-8


@dataclass
class WeightedPotential:
    """Confining potential E on R^N with unique minimum at the origin."""

    N: int
    E: callable            # x (..., N) -> (...)
    grad: callable         # x (..., N) -> (..., N)
    hess: callable         # x (N,) -> (N, N)
    name: str = "custom"

    @property
    def hess0(self):
        return np.asarray(self.hess(np.zeros(self.N)))

    @property
    def sigma1(self):
        return float(np.linalg.eigvalsh(self.hess0)[0])

    def validate(self, L, samples=200, seed=0):
        """Check E(0)=0, positivity away from 0 and D^2E(0) > 0 on the box."""
        if abs(float(self.E(np.zeros(self.N)))) > 1e-12:
            raise ValueError("E(0) must be 0")
        w = np.linalg.eigvalsh(self.hess0)
        if w[0] <= 0:
            raise ValueError("D^2 E(0) must be positive definite")
        rng = np.random.default_rng(seed)
        x = rng.uniform(-L, L, size=(samples, self.N))
        x = x[np.linalg.norm(x, axis=1) > 1e-8]
        if np.any(np.asarray(self.E(x)) <= 0):
            raise ValueError("E must be positive away from the origin")
        # liminf proxy: minimum of E over the box boundary
        bdry = rng.uniform(-L, L, size=(samples, self.N))
        for row in range(bdry.shape[0]):
            j = row % self.N
            bdry[row, j] = L if row % 2 == 0 else -L
        if float(np.min(self.E(bdry))) <= 0:
            raise ValueError("E must stay positive near the box boundary")
        return True


@dataclass
class GapResult:
    """Spectral gap of the weighted form at one lambda."""

    lam: float
    e2: float
    e2_over_lambda: float
    L: float
    h: float
    lowest: float
    realization: str
    eig_residual: float = 0.0


def build_potential(preset, N=1, diag=None, coeffs=None):
    """Preset potentials: 'ou' (|x|^2/2), 'quartic' (x^2/2 + x^4/4, N=1),
    'aniso' (sum d_i x_i^2 / 2), or 'poly' with even 1-d coefficients
    {power: coeff} applied to x (N=1)."""
    if preset == "ou":
        return WeightedPotential(
            N=N,
            E=lambda x: 0.5 * np.sum(np.asarray(x) ** 2, axis=-1),
            grad=lambda x: np.asarray(x, dtype=float),
            hess=lambda x: np.eye(N),
            name="ou",
        )
    if preset == "quartic":
        if N != 1:
            raise ValueError("quartic preset is one-dimensional")

        def E(x):
            x = np.asarray(x)[..., 0]
            return 0.5 * x**2 + 0.25 * x**4

        def grad(x):
            x = np.asarray(x, dtype=float)
            return x + x**3

        def hess(x):
            return np.array([[1.0 + 3.0 * float(np.asarray(x).ravel()[0])**2]])

        return WeightedPotential(N=1, E=E, grad=grad, hess=hess,
                                 name="quartic")
    if preset == "aniso":
        d = np.asarray(diag, dtype=float)
        if d.ndim != 1 or len(d) != N or np.any(d <= 0):
            raise ValueError("aniso needs a positive diagonal of length N")
        return WeightedPotential(
            N=N,
            E=lambda x: 0.5 * np.sum(d * np.asarray(x) ** 2, axis=-1),
            grad=lambda x: d * np.asarray(x, dtype=float),
            hess=lambda x: np.diag(d),
            name="aniso",
        )
    if preset == "poly":
        if N != 1:
            raise ValueError("poly preset is one-dimensional")
        powers = {int(k): float(v) for k, v in dict(coeffs).items()}
        if any(k < 2 for k in powers):
            raise ValueError("poly powers must be >= 2 (E(0)=0, minimum at 0)")

        def E(x):
            x = np.asarray(x)[..., 0]
            return sum(c * x**k for k, c in powers.items())

        def grad(x):
            x = np.asarray(x, dtype=float)
            return sum(c * k * x ** (k - 1) for k, c in powers.items())

        def hess(x):
            x0 = float(np.asarray(x).ravel()[0])
            return np.array([[sum(c * k * (k - 1) * x0 ** (k - 2)
                                  for k, c in powers.items())]])

        return WeightedPotential(N=1, E=E, grad=grad, hess=hess, name="poly")
    raise ValueError(f"unknown potential preset {preset!r}")


def choose_box(pot, lam):
    """Half-width L with lambda * min_{boundary} E >= 46 (tail mass < 1e-8)."""
    target = _BOX_LOG_MASS / lam

    def worst_dir_E(L):
        # minimum of E over the sphere of radius L, probed on axes/diagonals
        dirs = list(np.eye(pot.N))
        dirs += [np.ones(pot.N) / np.sqrt(pot.N)]
        return min(float(np.asarray(pot.E(L * v[None, :]))[0])
                   for v in dirs)

    L = 1.0
    while worst_dir_E(L) < target:
        L *= 1.5
        if L > 1e4:
            raise RuntimeError("could not find a confining box")
    if L > 1.0:
        L = brentq(lambda s: worst_dir_E(s) - target, L / 1.5, L)
    return float(1.05 * L)


def _grid1(L, M):
    x = np.linspace(-L, L, M)
    return x, x[1] - x[0]


def _points_per_dim(pot):
    return 801 if pot.N == 1 else 121


def _divergence_gap(pot, lam, L, M):
    """Generalized eigenproblem K F = e * diag(nu) F on cell nodes with
    face-weighted stiffness; Neumann natural, constants in the kernel."""
    x, h = _grid1(L, M)
    if pot.N == 1:
        faces = 0.5 * (x[:-1] + x[1:])
        w = np.exp(-lam * np.asarray(pot.E(faces[:, None])))
        nu = np.exp(-lam * np.asarray(pot.E(x[:, None])))
        main = np.zeros(M)
        main[:-1] += w
        main[1:] += w
        K = sparse.diags([main, -w, -w], [0, -1, 1], format="csc") / h**2
        Mdiag = nu
        Kd = K.toarray() / np.sqrt(Mdiag)[:, None] / np.sqrt(Mdiag)[None, :]
        vals = np.linalg.eigvalsh((Kd + Kd.T) / 2)
        return float(vals[0]), float(vals[1] - vals[0])
    # N = 2: tensor grid, sparse assembly
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    nu = np.exp(-lam * np.asarray(pot.E(pts))).reshape(M, M)
    rows, cols, vals = [], [], []

    def idx(i, j):
        return i * M + j

    # face weights along each axis
    f0 = 0.5 * (pts.reshape(M, M, 2)[:-1] + pts.reshape(M, M, 2)[1:])
    w0 = np.exp(-lam * np.asarray(pot.E(f0.reshape(-1, 2)))).reshape(M - 1, M)
    f1 = 0.5 * (pts.reshape(M, M, 2)[:, :-1] + pts.reshape(M, M, 2)[:, 1:])
    w1 = np.exp(-lam * np.asarray(pot.E(f1.reshape(-1, 2)))).reshape(M, M - 1)
    for i in range(M - 1):
        for j in range(M):
            a, b = idx(i, j), idx(i + 1, j)
            w = w0[i, j] / h**2
            rows += [a, b, a, b]
            cols += [a, b, b, a]
            vals += [w, w, -w, -w]
    for i in range(M):
        for j in range(M - 1):
            a, b = idx(i, j), idx(i, j + 1)
            w = w1[i, j] / h**2
            rows += [a, b, a, b]
            cols += [a, b, b, a]
            vals += [w, w, -w, -w]
    K = sparse.csc_matrix((vals, (rows, cols)), shape=(M * M, M * M))
    d = 1.0 / np.sqrt(nu.ravel())
    Ksym = sparse.diags(d) @ K @ sparse.diags(d)
    v0 = np.sqrt(nu.ravel())
    v0 = v0 / np.linalg.norm(v0) + 1e-3
    w = eigsh(Ksym, k=2, sigma=-1e-10, which="LM", v0=v0,
              return_eigenvectors=False)
    w = np.sort(w)
    return float(w[0]), float(w[1] - w[0])


def _schrodinger_gap(pot, lam, L, M):
    """Gap of H = -Delta + (lam^2/4)|grad E|^2 - (lam/2) Delta E, Dirichlet."""
    x, h = _grid1(L, M)
    if pot.N == 1:
        g = np.array([float(np.ravel(pot.grad(np.array([v])))[0])
                      for v in x])
        lap = np.array([float(np.trace(pot.hess(np.array([v])))) for v in x])
        U = 0.25 * lam**2 * g**2 - 0.5 * lam * lap
        main = 2.0 / h**2 + U
        off = np.full(M - 1, -1.0 / h**2)
        from scipy.linalg import eigh_tridiagonal
        vals = eigh_tridiagonal(main, off, select="i",
                                select_range=(0, 1))[0]
        return float(vals[0]), float(vals[1] - vals[0])
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    g = np.array([pot.grad(p) for p in pts])
    lap = np.array([float(np.trace(pot.hess(p))) for p in pts])
    U = 0.25 * lam**2 * np.sum(g**2, axis=1) - 0.5 * lam * lap
    ones = np.ones(M)
    D1 = sparse.diags([2 * ones / h**2, -ones[:-1] / h**2,
                       -ones[:-1] / h**2], [0, -1, 1])
    I1 = sparse.eye(M)
    H = sparse.kron(D1, I1) + sparse.kron(I1, D1) + sparse.diags(U)
    v0 = np.exp(-0.25 * lam * np.sum(pts**2, axis=1))
    v0 = v0 / np.linalg.norm(v0) + 1e-3
    w = eigsh(H.tocsc(), k=2, sigma=float(U.min()) - 1.0, which="LM", v0=v0,
              return_eigenvectors=False)
    w = np.sort(w)
    return float(w[0]), float(w[1] - w[0])


def spectral_gap(pot, lam, realization="divergence", points=None, L=None):
    """Spectral gap e_2^lambda of the weighted Dirichlet form.

    realization 'divergence' uses the measure-weighted finite-difference
    form (lowest eigenvalue must vanish to 1e-8*lambda); 'schrodinger'
    uses the ground-state transform (gap = difference of the two lowest
    Schrodinger eigenvalues).
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if L is None:
        L = choose_box(pot, lam)
    pot.validate(L)
    M = points or _points_per_dim(pot)
    h = 2 * L / (M - 1)
    if realization == "divergence":
        lowest, gap = _divergence_gap(pot, lam, L, M)
        if abs(lowest) > 1e-8 * lam:
            raise RuntimeError(
                f"constant mode eigenvalue {lowest:.3e} exceeds 1e-8*lambda")
    elif realization == "schrodinger":
        lowest, gap = _schrodinger_gap(pot, lam, L, M)
    else:
        raise ValueError("realization must be 'divergence' or 'schrodinger'")
    return GapResult(lam=float(lam), e2=gap, e2_over_lambda=gap / lam,
                     L=float(L), h=float(h), lowest=float(lowest),
                     realization=realization)


def gap_asymptotics(pot, lam_list, realization="divergence"):
    """Table of e_2^lambda / lambda with a 1/lambda extrapolation.

    The extrapolated limit (linear in 1/lambda through the last two
    points) is compared against sigma_1 = min eig D^2 E(0).
    """
    lam_list = sorted(float(v) for v in lam_list)
    if len(lam_list) < 3:
        raise ValueError("need at least three lambda values")
    rows = [spectral_gap(pot, lam, realization) for lam in lam_list]
    r = np.array([g.e2_over_lambda for g in rows])
    x = 1.0 / np.array(lam_list)
    # linear extrapolation to 1/lambda = 0 from the last two points
    limit = r[-1] - x[-1] * (r[-1] - r[-2]) / (x[-1] - x[-2])
    return {"rows": rows, "ratios": r, "extrapolated": float(limit),
            "sigma1": pot.sigma1}


def laplace_constant(pot, lam, L=None):
    """Z_lambda * (lambda / 2 pi)^(N/2); tends to det(D^2 E(0))^(-1/2)."""
    if L is None:
        L = choose_box(pot, lam)
    if pot.N == 1:
        Z, _ = quad(lambda x: np.exp(
            -lam * float(np.asarray(pot.E(np.array([[x]])))[0])),
            -L, L, limit=200)
    elif pot.N == 2:
        from scipy.integrate import dblquad
        Z, _ = dblquad(
            lambda y, x: np.exp(
                -lam * float(np.asarray(pot.E(np.array([[x, y]])))[0])),
            -L, L, lambda x: -L, lambda x: L, epsabs=1e-12, epsrel=1e-10)
    else:
        raise ValueError("laplace_constant supports N <= 2")
    return float(Z * (lam / (2 * np.pi)) ** (pot.N / 2))


def tail_mass(pot, lam, r, L=None):
    """nu_lambda(|x| >= r) by quadrature on the truncated box."""
    if L is None:
        L = choose_box(pot, lam)
    L = max(L, 1.5 * r)
    if pot.N == 1:
        dens = lambda x: np.exp(
            -lam * float(np.asarray(pot.E(np.array([[x]])))[0]))
        Z, _ = quad(dens, -L, L, limit=200)
        out = 0.0
        if r < L:
            a, _ = quad(dens, r, L, limit=200)
            b, _ = quad(dens, -L, -r, limit=200)
            out = a + b
        return float(out / Z)
    M = 401
    x = np.linspace(-L, L, M)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
    dens = np.exp(-lam * np.asarray(pot.E(pts)))
    mask = np.linalg.norm(pts, axis=1) >= r
    return float(dens[mask].sum() / dens.sum())


def _quadrature_grid(pot, lam, M=2001):
    L = choose_box(pot, lam)
    if pot.N != 1:
        raise ValueError("gns/ims checks are one-dimensional here")
    x, h = _grid1(L, M)
    dens = np.exp(-lam * np.asarray(pot.E(x[:, None])))
    dens /= dens.sum() * h
    return x, h, dens


def gns_check(pot, lam, V, F=None, C=None):
    """Both sides of the GNS inequality
    E(F,F) + int V F^2 dnu >= -(lam/C) log int e^(-C V / lam) dnu * ||F||^2.

    V and F are callables on the grid; C defaults to the Bakry-Emery
    proxy 2 / min_box(min eig Hess E).  Returns (lhs, rhs, C).  When the
    Hessian proxy is not positive the check is skipped with C = None.
    """
    x, h, dens = _quadrature_grid(pot, lam)
    if C is None:
        rho = min(float(np.linalg.eigvalsh(pot.hess(np.array([v])))[0])
                  for v in x[:: len(x) // 64])
        if rho <= 0:
            return {"lhs": None, "rhs": None, "C": None,
                    "skipped": "nonpositive Hessian proxy"}
        C = 2.0 / rho
    Fv = np.asarray(F(x)) if F is not None else x - np.sum(x * dens) * h
    Vv = np.asarray(V(x))
    dF = np.gradient(Fv, x)
    lhs = float(np.sum(dF**2 * dens) * h + np.sum(Vv * Fv**2 * dens) * h)
    log_term = np.log(float(np.sum(np.exp(-C * Vv / lam) * dens) * h))
    rhs = float(-(lam / C) * log_term * np.sum(Fv**2 * dens) * h)
    return {"lhs": lhs, "rhs": rhs, "C": float(C), "skipped": None}


def smooth_partition(r1, r2):
    """C^1 pair (chi0, chi1) with chi0^2 + chi1^2 = 1: cos/sin of a
    smoothstep ramp between radii r1 < r2."""
    if not r1 < r2:
        raise ValueError("need r1 < r2")

    def ramp(x):
        s = np.clip((np.abs(x) - r1) / (r2 - r1), 0.0, 1.0)
        return s * s * (3 - 2 * s)

    chi0 = lambda x: np.cos(0.5 * np.pi * ramp(x))
    chi1 = lambda x: np.sin(0.5 * np.pi * ramp(x))
    return chi0, chi1


def ims_check(F, chi_pair, pot, lam):
    """Residual of the IMS localization identity
    E(F,F) = sum_i E(F chi_i, F chi_i) - int (|Dchi0|^2 + |Dchi1|^2) F^2 dnu.

    All derivatives are taken with the same centered difference on the
    quadrature grid, so the residual measures the quadrature-level
    validity of the identity, not roundoff.
    """
    x, h, dens = _quadrature_grid(pot, lam, M=8001)
    chi0, chi1 = chi_pair
    Fv = np.asarray(F(x))
    c0, c1 = np.asarray(chi0(x)), np.asarray(chi1(x))
    if np.max(np.abs(c0**2 + c1**2 - 1.0)) > 1e-12:
        raise ValueError("partition must satisfy chi0^2 + chi1^2 = 1")

    def energy(v):
        return float(np.sum(np.gradient(v, x) ** 2 * dens) * h)

    lhs = energy(Fv)
    cross = float(np.sum((np.gradient(c0, x) ** 2 +
                          np.gradient(c1, x) ** 2) * Fv**2 * dens) * h)
    rhs = energy(Fv * c0) + energy(Fv * c1) - cross
    return abs(lhs - rhs)


def trial_upper_bound(pot, lam):
    """Rayleigh data of the trial F(x) = sqrt(lam sigma1) (x, v).

    Returns the quotient E(F,F) / (lam Var F) together with the mean and
    the norm of F, all of which tend to (sigma1, 0, 1)."""
    w, U = np.linalg.eigh(pot.hess0)
    sig, v = float(w[0]), U[:, 0]
    L = choose_box(pot, lam)
    if pot.N == 1:
        x, h, dens = _quadrature_grid(pot, lam)
        proj = x * v[0]
        mean = float(np.sum(proj * dens) * h)
        var = float(np.sum((proj - mean) ** 2 * dens) * h)
    else:
        M = 301
        x = np.linspace(-L, L, M)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X1.ravel(), X2.ravel()], axis=-1)
        dens = np.exp(-lam * np.asarray(pot.E(pts)))
        dens /= dens.sum()
        proj = pts @ v
        mean = float(np.sum(proj * dens))
        var = float(np.sum((proj - mean) ** 2 * dens))
    scale = lam * sig
    # grad F = sqrt(lam sigma1) v, so E(F,F) = lam sigma1 exactly and
    # Var F = lam sigma1 Var(x.v); the quotient over lambda is 1/(lam Var(x.v))
    energy = scale
    variance = scale * var
    return {"quotient_over_lambda": float(energy / (lam * variance)),
            "mean": float(np.sqrt(scale) * mean),
            "norm": float(np.sqrt(variance)),
            "sigma1": sig}
