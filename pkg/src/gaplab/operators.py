"""Discretization of the path-space Hessian operators on L^2([0,1] -> R^n).

The square-root operator S, its inverse, the curvature form T and the
adjoint family are assembled as dense matrices on a midpoint grid that
never touches the t=1 pole of K(t).

The assembly is structure-preserving: two independent primitives are
discretized by quadrature (S from the Jacobi ratio K, T from the
curvature operator R) and the remaining operators are defined through
the exact continuum identities S^{-1} = inverse of S,
S^* = (I+T) S^{-1} and (S^{-1})^* = S (I+T)^{-1}.  This keeps the
operator algebra exact on the grid; a naive independent quadrature of
each closed form is irreparably off by O(1) near the pole, because the
images of grid functions acquire a log(1-t) singularity that no fixed
grid resolves (the corner defect is exactly -1/(2l+1)^2 at the l-th node
from the pole in the flat case).  The K-versus-R cross-validation
therefore lives in the two independent routes to sigma_1, not in the
identity residuals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.fft import dct, idct

__all__ = ["GridSpec", "OperatorSet", "assemble_operators", "sigma1",
           "identity_residuals", "closed_form_S_inv", "perturb_J",
           "hardy_ratio", "trial_mode"]


@dataclass
class GridSpec:
    """Midpoint grid on [0,1] with m cells and value dimension n."""

    m: int
    n: int = 1

    @property
    def nodes(self):
        return (np.arange(self.m) + 0.5) / self.m

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def size(self):
        return self.m * self.n


def _volterra(m):
    """Quadrature matrix for phi -> int_0^{t_i} phi with piecewise-constant
    phi: full weight below the diagonal, half weight on it."""
    h = 1.0 / m
    V = np.tril(np.full((m, m), h), -1)
    np.fill_diagonal(V, h / 2)
    return V


def _block_diag(mats):
    """(m,n,n) stack -> (m n, m n) block diagonal."""
    m, n, _ = mats.shape
    out = np.zeros((m * n, m * n))
    for i in range(m):
        out[i * n:(i + 1) * n, i * n:(i + 1) * n] = mats[i]
    return out


_GL_NODES, _GL_WEIGHTS = leggauss(4)


def _cell_integrals_finv(jac, grid):
    """Per-cell integrals of f(s)^{-1} = W(1-s)^{-1}, Gauss-Legendre per
    (sub)cell; entry [i, j] integrates over cell j clipped to [0, t_i].

    The integrand grows like 1/(1-s) toward the pole, so midpoint weights
    would lose an O(1) amount on the diagonal (half) cells; 4-point Gauss
    keeps the relative error grid-independent there.
    """
    m, n = grid.m, grid.n
    h = grid.h
    nodes = grid.nodes
    full = np.zeros((m, n, n))
    half = np.zeros((m, n, n))
    for j in range(m):
        a, b = j * h, (j + 1) * h
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = (a + b) / 2 + (b - a) / 2 * x
            finv = np.linalg.inv(jac.W_at(1.0 - s))
            full[j] += (b - a) / 2 * w * finv
        bh = nodes[j]
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            s = (a + bh) / 2 + (bh - a) / 2 * x
            finv = np.linalg.inv(jac.W_at(1.0 - s))
            half[j] += (bh - a) / 2 * w * finv
    return full, half


@dataclass
class OperatorSet:
    """Dense realizations of S, T, S^{-1}, S^* and (S^{-1})^* on the grid.

    All matrices act on stacked vectors of shape (m*n,), component index
    fastest.  P0 removes the componentwise mean (the L^2_0 projector).
    """

    grid: GridSpec
    jac: object
    S: np.ndarray
    T: np.ndarray
    S_inv: np.ndarray
    S_star: np.ndarray
    S_inv_star: np.ndarray
    J0: np.ndarray
    P0: np.ndarray
    _q_basis: np.ndarray = field(default=None, repr=False)

    @property
    def I_plus_T(self):
        """I+T as a full-space matrix (identity restricted to L^2_0)."""
        return self.P0 + self.T

    def mean_zero_basis(self):
        """Orthonormal basis of the mean-zero subspace, (m n, (m-1) n)."""
        if self._q_basis is None:
            m, n = self.grid.m, self.grid.n
            ones = np.ones((1, m))
            from scipy.linalg import null_space
            qm = null_space(ones)  # m x (m-1), orthonormal
            self._q_basis = np.kron(qm, np.eye(n))
        return self._q_basis


def _pinv0(H, tol=1e-10):
    """Inverse of a symmetric matrix on the complement of its kernel
    (here: I+T on the mean-zero subspace; constants map to zero)."""
    w, U = np.linalg.eigh((H + H.T) / 2)
    winv = np.where(np.abs(w) > tol, 1.0, 0.0) / np.where(
        np.abs(w) > tol, w, 1.0)
    return (U * winv) @ U.T


def closed_form_S_inv(jac, grid):
    """Direct quadrature of S^{-1} = I + f'(t) int_0^t f(s)^{-1} . ds.

    Product integration (per-cell Gauss) for the 1/f integrand.  This is
    a consistency comparator for OperatorSet.S_inv: the two agree to
    O(1/m) away from the pole but differ by a known O(1) amount on the
    last few diagonal cells, where the half-cell rule cannot represent
    the log(1-t) growth of int f^{-1}.
    """
    m, n = grid.m, grid.n
    nodes = grid.nodes
    fp = -jac.Wp_at(1.0 - nodes)                 # f'(t_i) = -W'(1-t_i)
    full, half = _cell_integrals_finv(jac, grid)
    S_inv = np.eye(m * n)
    for i in range(m):
        rows = slice(i * n, (i + 1) * n)
        for j in range(i):
            S_inv[rows, j * n:(j + 1) * n] += fp[i] @ full[j]
        S_inv[rows, i * n:(i + 1) * n] += fp[i] @ half[i]
    return S_inv


def assemble_operators(jac, grid):
    """Build the operator family from a Jacobi solution on a midpoint grid.

    S = I - K V with triangular half-weight quadrature V and K sampled at
    the midpoints (the K-route); T = -P0 V^T R V P0 from the curvature
    operator (the R-route).  S^{-1}, S^* and (S^{-1})^* follow by the
    exact identities, so they are consistent discretizations of their
    closed forms and the operator algebra holds on the grid.
    """
    if jac.W is None or jac.A is None:
        raise ValueError("jacobi solution must carry W and A "
                         "(use build_KNM)")
    if len(jac.t) - 1 < grid.m:
        raise ValueError("jacobi grid coarser than operator grid")
    m, n = grid.m, grid.n
    if jac.geo.n != n:
        raise ValueError("grid dimension does not match geodesic dimension")
    nodes = grid.nodes

    Vt = _volterra(m)
    V = np.kron(Vt, np.eye(n))
    P0 = np.kron(np.eye(m) - np.full((m, m), 1.0 / m), np.eye(n))
    I = np.eye(m * n)

    K_nodes = jac.K_at(nodes)                    # (m, n, n)
    R_nodes = np.array([jac.geo.R(t) for t in nodes])
    Kblk = _block_diag(K_nodes)
    Rblk = _block_diag(R_nodes)

    S = I - Kblk @ V            # domain: mean-zero grid functions
    T = -P0 @ V.T @ Rblk @ V @ P0

    S_inv = np.linalg.inv(S)    # block lower triangular, well conditioned
    IT = P0 + T
    S_star = IT @ S_inv                 # S^* = (I+T) S^{-1}
    S_inv_star = S @ _pinv0(IT)         # (S^{-1})^* = S (I+T)^{-1}, 0 on constants
    J0 = S_inv_star - I

    return OperatorSet(grid=grid, jac=jac, S=S, T=T, S_inv=S_inv,
                       S_star=S_star, S_inv_star=S_inv_star, J0=J0, P0=P0)


def sigma1(ops):
    """Spectral bottom of the Hessian form, computed two independent ways.

    via_eig: smallest eigenvalue of the symmetrized I+T restricted to the
    mean-zero subspace.  via_opnorm: 1 / (largest singular value of
    (S^{-1})^*)^2.  The continuum theory makes these equal.
    """
    Q = ops.mean_zero_basis()
    H = ops.I_plus_T
    Hq = Q.T @ ((H + H.T) / 2) @ Q
    via_eig = float(np.linalg.eigvalsh(Hq)[0])
    smax = float(np.linalg.norm(ops.S_inv_star, 2))
    return via_eig, 1.0 / smax**2


def identity_residuals(ops):
    """Operator-norm residuals of the continuum identities.

    Identities that only hold on L^2_0 (the domain of S) are measured
    after the mean-removal projector on the input side.
    """
    S, T, S2 = ops.S, ops.T, ops.S_inv
    P0, IT = ops.P0, ops.I_plus_T
    I = np.eye(S.shape[0])
    nrm = lambda M: float(np.linalg.norm(M, 2))
    return {
        "SsS_minus_IT": nrm(ops.S_star @ S @ P0 - IT),
        "SS2_minus_I": nrm(S @ S2 - I),
        "S2S_minus_I0": nrm((S2 @ S - I) @ P0),
        "SinvstarIT_minus_S": nrm((ops.S_inv_star @ IT - S) @ P0),
        "IT_S2_Sinvstar_minus_I0": nrm((IT @ S2 @ ops.S_inv_star - I) @ P0),
        "Sinvstar_minus_I_plus_J0": nrm(ops.S_inv_star - (I + ops.J0)),
    }


def _bump_profile(t):
    """Fixed even polynomial bump on [0,1], peak value 1 at t=1/2."""
    return 16.0 * t**2 * (1.0 - t) ** 2


def _assemble_J(jac, grid, eps, delta, steps=None):
    """J_eps from the perturbed N-equation.

    K_eps(t) = K(t) + eps*bump(t)/(1-t)^delta on the orthogonal block;
    J_eps phi = (M_eps^*)^{-1} int_t^1 M_eps^* K_eps phi, realized with
    the bounded integrand M^* K = -(N(s))^* A(1-s) (+ perturbation part)
    and triangular quadrature.
    """
    m, n = grid.m, grid.n
    if steps is None:
        steps = max(4 * m, 512)
    nodes = grid.nodes

    def C_eps(t):
        out = np.zeros((n, n))
        if n > 1:
            out[1:, 1:] = eps * _bump_profile(t) * np.eye(n - 1)
        else:
            out[0, 0] = eps * _bump_profile(t)
        return out

    def ntilde_eps(t):
        base = jac.Ntilde_at(t)
        if eps != 0.0:
            base = base + C_eps(t) / (1.0 - t) ** delta
        return base

    # RK4 for N_eps on a uniform fine grid, then sample at the nodes
    h = 1.0 / steps
    Ne = np.empty((steps + 1, n, n))
    Ne[0] = np.eye(n)
    for i in range(steps):
        t0 = i * h
        y = Ne[i]
        k1 = ntilde_eps(t0) @ y
        Gm = ntilde_eps(t0 + h / 2)
        k2 = Gm @ (y + h / 2 * k1)
        k3 = Gm @ (y + h / 2 * k2)
        k4 = ntilde_eps(min(t0 + h, 1.0 - 1e-12)) @ (y + h * k3)
        Ne[i + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(Ne)):
        raise RuntimeError("perturbed N blew up; eps too large")
    from scipy.interpolate import CubicSpline
    Ne_spl = CubicSpline(np.linspace(0, 1, steps + 1), Ne, axis=0)

    N_nodes = Ne_spl(nodes)
    M_nodes = (1.0 - nodes)[:, None, None] * N_nodes
    K_nodes = jac.K_at(nodes)
    if eps != 0.0:
        K_nodes = K_nodes + np.array(
            [C_eps(t) / (1.0 - t) ** delta for t in nodes])
    MK = np.einsum("sba,sbc->sac", M_nodes, K_nodes)  # M(s)^T K(s)

    Vb = _volterra(m).T  # int_t^1 weights
    J = np.zeros((m * n, m * n))
    Minv_T = np.linalg.inv(np.transpose(M_nodes, (0, 2, 1)))
    for i in range(m):
        rows = slice(i * n, (i + 1) * n)
        for j in range(m):
            w = Vb[i, j]
            if w != 0.0:
                J[rows, j * n:(j + 1) * n] = w * (Minv_T[i] @ MK[j])
    return J


def perturb_J(jac, grid, eps_list, delta=0.6):
    """Operator-norm response of J to the singular perturbation of K.

    Returns per-eps norms ||J_eps - J_0|| and the fitted log-log slope,
    which should be 1 (linear response).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    eps_arr = np.asarray(eps_list, dtype=float)
    if np.any(eps_arr < 0) or np.any(eps_arr > 0.2):
        raise ValueError("eps values must lie in [0, 0.2]")
    J0 = _assemble_J(jac, grid, 0.0, delta)
    norms = []
    for eps in eps_arr:
        Je = _assemble_J(jac, grid, float(eps), delta)
        norms.append(float(np.linalg.norm(Je - J0, 2)))
    norms = np.array(norms)
    pos = eps_arr > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(eps_arr[pos]),
                                 np.log(norms[pos]), 1)[0])
    else:
        slope = np.nan
    return {"eps": eps_arr, "norms": norms, "slope": slope}


def hardy_ratio(phi, m=None):
    """Quadrature value of the Hardy quotient
    int |(1/(1-t)) int_t^1 phi|^2 / int |phi|^2; bounded by 4."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim != 1:
        raise ValueError("phi must be a flat grid function")
    m = len(phi) if m is None else m
    denom = float(phi @ phi) / m
    if denom == 0.0:
        raise ValueError("phi must be nonzero")
    nodes = (np.arange(m) + 0.5) / m
    tail = _volterra(m).T @ phi
    num = float(np.sum((tail / (1.0 - nodes)) ** 2)) / m
    return num / denom


def trial_mode(ops, eps):
    """Smooth near-minimizer of the I+T form with a certified form value.

    Takes the bottom eigenvector on the mean-zero subspace, applies Fejer
    smoothing of its cosine expansion with the mildest cutoff whose
    Rayleigh quotient stays within eps of the grid minimum, and returns
    (phi, certificate).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    m, n = ops.grid.m, ops.grid.n
    Q = ops.mean_zero_basis()
    H = ops.I_plus_T
    Hs = (H + H.T) / 2
    w, v = np.linalg.eigh(Q.T @ Hs @ Q)
    sig = float(w[0])
    phi0 = (Q @ v[:, 0]).reshape(m, n)

    def quotient(phi):
        x = phi.ravel()
        return float(x @ Hs @ x) / float(x @ x)

    # cosine coefficients per component (DCT-II on the midpoint grid);
    # index k=1.. corresponds to cos(k pi t), automatically mean-zero
    coeff = dct(phi0, axis=0, norm="ortho")
    for cutoff in (4, 8, 16, 32, 64, m // 2, m - 1):
        cutoff = min(cutoff, m - 1)
        damp = np.zeros(m)
        k = np.arange(1, cutoff + 1)
        damp[1:cutoff + 1] = 1.0 - k / (cutoff + 1)  # Fejer weights
        phi = idct(coeff * damp[:, None], axis=0, norm="ortho")
        phi -= phi.mean(axis=0)
        nrm = np.sqrt(float(phi.ravel() @ phi.ravel()) / m)
        if nrm < 1e-12:
            continue
        phi /= nrm
        val = quotient(phi)
        if val <= sig + eps:
            return phi, val
    # fall back to the raw eigenvector (certificate = grid minimum)
    phi = phi0 / np.sqrt(float(phi0.ravel() @ phi0.ravel()) / m)
    val = quotient(phi)
    if val > sig + eps:
        raise RuntimeError("requested eps below achievable resolution")
    return phi, val
