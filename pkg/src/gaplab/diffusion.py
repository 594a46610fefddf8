"""Radial diffusions, pinned-bridge sampling and Monte-Carlo forms.

Covers four numerical surfaces: the Euler-Maruyama comparison pair for
the radial process and its dominating Bessel-type process (shared
noise), empirical tail estimates with lambda-scaling fits, Metropolis
sampling of the discretized pinned measure (flat R^3 exactly, H^3 via
the closed-form heat kernel on the hyperboloid model), and the
Rayleigh/Poincare functionals of the paper's trial functions evaluated
on sampled bridges.  The explicit spectral-gap lower-bound constant is
evaluated as pure arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .radial import h3_heat_kernel

__all__ = ["RadialPathEnsemble", "BridgeEnsemble", "LowerBoundInputs",
           "simulate_radial_pair", "empirical_tail", "sample_bridge",
           "antidevelop", "rayleigh_trial", "poincare_check",
           "gap_lower_bound"]

_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# radial comparison pair

@dataclass
class RadialPathEnsemble:
    """Shared-noise ensemble of the radial process Y and its dominating
    process Z (stored in the sqrt(lambda)-scaled variable)."""

    lam: float
    m: int
    P: int
    seed: int
    d0: float
    X: np.ndarray          # sqrt(lam) * Y, shape (P, m+1)
    Z: np.ndarray          # dominating process, shape (P, m+1)
    flagged: np.ndarray    # paths that touched the positivity floor
    dominance_margin: float  # min over retained steps of Z - X

    @property
    def Y(self):
        return self.X / np.sqrt(self.lam)

    @property
    def retained(self):
        return ~self.flagged

    def dominance_ok(self, tol=1e-9):
        return bool(self.dominance_margin >= -tol)


def simulate_radial_pair(profile, n, lam, z0_dist, m, P, seed):
    """Euler-Maruyama for the radial SDE and its comparison process.

    In the scaled variable X = sqrt(lam) Y both processes read
      dX = (n-1)/(2X) dt + (n-1)/(2 sqrt(lam)) drift dt + dB,
    with drift = phi'(X/sqrt(lam)) for Y and the constant sup phi' for
    the dominating process; the same Brownian increments drive both, so
    the flat profile gives bitwise coincidence.
    """
    if n < 3:
        raise ValueError("need n >= 3 (Bessel dimension >= 2)")
    if lam <= 0 or z0_dist <= 0:
        raise ValueError("lambda and the start distance must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    dt = 1.0 / m
    sq = np.sqrt(lam)
    # sup of phi' over the radii the ensemble can visit (generous range)
    r_probe = np.linspace(1e-6, max(4.0 * z0_dist, 10.0), 4096)
    sup = max(0.0, float(np.max(profile.phi_deriv(1, r_probe))))
    x0 = sq * z0_dist
    X = np.empty((P, m + 1))
    Z = np.empty((P, m + 1))
    X[:, 0] = x0
    Z[:, 0] = x0
    flagged = np.zeros(P, dtype=bool)
    margin = np.inf
    c = (n - 1) / 2.0
    for k in range(m):
        dB = np.sqrt(dt) * rng.standard_normal(P)
        x = X[:, k]
        z = Z[:, k]
        drift_x = c / x + (c / sq) * profile.phi_deriv(1, x / sq)
        drift_z = c / z + (c / sq) * sup
        X[:, k + 1] = x + drift_x * dt + dB
        Z[:, k + 1] = z + drift_z * dt + dB
        low = X[:, k + 1] <= sq * _FLOOR
        flagged |= low
        ok = ~flagged
        if ok.any():
            margin = min(margin, float(np.min(Z[ok, k + 1] - X[ok, k + 1])))
    return RadialPathEnsemble(lam=float(lam), m=m, P=P, seed=seed,
                              d0=float(z0_dist), X=X, Z=Z, flagged=flagged,
                              dominance_margin=float(margin))


def empirical_tail(ens, r_grid, min_count=10):
    """Tail table P(1 + max_t Y >= r) with a log-linear fit in r^2.

    The fitted slope of log P against r^2 is reported together with the
    implied constant C2 = -slope / lambda; the comparison across lambda
    on a common r-grid is the lambda-linearity check of the tail bound.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    Y = ens.Y[ens.retained]
    stat = 1.0 + Y.max(axis=1)
    P = len(stat)
    counts = np.array([(stat >= r).sum() for r in r_grid])
    prob = counts / P
    reliable = (counts >= min_count) & (prob <= 0.9)
    if reliable.sum() >= 2:
        slope, _ = np.polyfit(r_grid[reliable] ** 2,
                              np.log(prob[reliable]), 1)
        slope = float(slope)
    else:
        slope = np.nan
    return {"r": r_grid, "prob": prob, "counts": counts,
            "reliable": reliable, "slope_vs_r2": slope,
            "slope_vs_lam_r2": slope / ens.lam,
            "C2": -slope / ens.lam if np.isfinite(slope) else np.nan}


# ---------------------------------------------------------------------------
# hyperboloid model of H^3

def _mink(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def h3_distance(x, y):
    return np.arccosh(np.maximum(-_mink(x, y), 1.0))


def h3_exp(x, v):
    """Exponential map on the hyperboloid; v tangent (Minkowski-orthogonal
    to x)."""
    nv = np.sqrt(np.maximum(_mink(v, v), 0.0))
    out = np.cosh(nv)[..., None] * x
    safe = np.where(nv > 1e-300, nv, 1.0)
    out = out + (np.sinh(nv) / safe)[..., None] * v
    # renormalize onto the sheet against drift
    out[..., 0] = np.sqrt(1.0 + np.sum(out[..., 1:] ** 2, axis=-1))
    return out


def h3_log(x, y):
    """Inverse exponential map log_x(y) in T_x H^3."""
    c = -_mink(x, y)
    theta = np.arccosh(np.maximum(c, 1.0))
    w = y - c[..., None] * x
    nw = np.sqrt(np.maximum(_mink(w, w), 0.0))
    safe = np.where(nw > 1e-300, nw, 1.0)
    return (theta / safe)[..., None] * w


def h3_transport(x, y, v):
    """Parallel transport of v in T_x H^3 along the geodesic to y:
    v + <y,v> (x+y) / (1 - <x,y>), an isometry of the tangent spaces."""
    denom = 1.0 - _mink(x, y)
    coef = _mink(np.broadcast_to(y, v.shape), v) / denom
    return v + coef[..., None] * (x + y)


def _h3_basis(x):
    """Orthonormal tangent bases at x (shape (..., 4) -> (..., 3, 4)) by
    Gram-Schmidt of the projected spatial coordinate axes."""
    x = np.asarray(x, dtype=float)
    basis = []
    for k in range(1, 4):
        e = np.zeros_like(x)
        e[..., k] = 1.0
        v = e + _mink(e, x)[..., None] * x  # tangent projection, <x,x>=-1
        for b in basis:
            v = v - _mink(v, b)[..., None] * b
        v = v / np.sqrt(_mink(v, v))[..., None]
        basis.append(v)
    return np.stack(basis, axis=-2)


# ---------------------------------------------------------------------------
# pinned bridges

@dataclass
class BridgeEnsemble:
    """Samples of the discretized pinned measure between x0 and the pole."""

    space: str             # 'flat3' | 'h3'
    lam: float
    m: int
    d: float
    seed: int
    paths: np.ndarray      # (P, m+1, dim): dim 3 (flat) or 4 (hyperboloid)
    acceptance: float      # mean Metropolis acceptance (nan for exact)
    sampler: str
    n_chains: int = 1      # samples are ordered (snapshot, chain)

    @property
    def endpoints(self):
        return self.paths[0, 0], self.paths[0, -1]

    @property
    def curvature(self):
        return 0.0 if self.space == "flat3" else -1.0

    def chain_se(self, values):
        """Standard error of the ensemble mean of per-path values.

        MCMC samples are correlated along each chain but chains are
        independent, so the spread of per-chain means is a valid error
        estimate; exact samples are i.i.d."""
        values = np.asarray(values, dtype=float)
        if self.sampler == "exact":
            return float(values.std(ddof=1) / np.sqrt(len(values)))
        per_chain = values.reshape(-1, self.n_chains).mean(axis=0)
        return float(per_chain.std(ddof=1) / np.sqrt(self.n_chains))


def _flat_exact_bridge(lam, m, d, P, rng):
    x0 = np.zeros(3)
    y0 = np.array([d, 0.0, 0.0])
    dt = 1.0 / m
    paths = np.empty((P, m + 1, 3))
    paths[:, 0] = x0
    for k in range(1, m):
        prev = paths[:, k - 1]
        steps_left = m - k + 1
        mean = prev + (y0 - prev) / steps_left
        var = (dt / lam) * (steps_left - 1) / steps_left
        paths[:, k] = mean + np.sqrt(var) * rng.standard_normal((P, 3))
    paths[:, m] = y0
    return paths


def _log_kernel(space, lam, m, r):
    dt = 1.0 / (m * lam)
    if space == "flat3":
        return -r**2 / (2 * dt)
    r = np.maximum(r, 1e-12)
    return (-1.5 * np.log(2 * np.pi * dt) + np.log(r) - np.log(np.sinh(r))
            - dt / 2.0 - r**2 / (2 * dt))


def sample_bridge(space, lam, m, d, chain=2000, burnin=500, seed=0,
                  n_chains=64, thin=10, sampler="mcmc", step_scale=None):
    """Sample the discretized pinned measure prod_k p(dt/lam, d(x_{k-1},x_k)).

    Metropolis random-walk over interior slices in red-black order,
    vectorized over parallel chains; the proposal scale is tuned to the
    [0.2, 0.6] acceptance window during burn-in and then frozen.  For
    flat3 an exact Gaussian bridge sampler is available
    (sampler='exact'), matching the same product density.
    """
    if m < 8 and not (space == "flat3" and m >= 2):
        raise ValueError("need at least 8 time slices")
    if d <= 0:
        raise ValueError("d must be positive")
    if space not in ("flat3", "h3"):
        raise ValueError("space must be 'flat3' or 'h3'")
    rng = np.random.Generator(np.random.Philox(seed))

    if sampler == "exact":
        if space != "flat3":
            raise ValueError("exact sampling only in flat3")
        P = n_chains * (chain // thin)
        paths = _flat_exact_bridge(lam, m, d, P, rng)
        return BridgeEnsemble(space=space, lam=lam, m=m, d=d, seed=seed,
                              paths=paths, acceptance=float("nan"),
                              sampler="exact", n_chains=P)

    C = n_chains
    # warm start: exact flat bridge fluctuations, mapped to the
    # hyperboloid through normal coordinates around the geodesic (close
    # to the target law at large lambda, so burn-in only has to fix the
    # curvature correction and tune the proposal scale)
    flat_start = _flat_exact_bridge(lam, m, d, C, rng)
    if space == "flat3":
        dist = lambda a, b: np.linalg.norm(a - b, axis=-1)
        pos = flat_start
    else:
        dist = h3_distance
        t = np.linspace(0, 1, m + 1)
        line = np.stack([np.array([s * d, 0.0, 0.0]) for s in t])
        fluct = flat_start - line                     # (C, m+1, 3)
        pos = np.empty((C, m + 1, 4))
        for k in range(m + 1):
            g = np.array([np.cosh(t[k] * d), np.sinh(t[k] * d), 0, 0])
            B = _h3_basis(g)                          # (3, 4)
            pos[:, k] = h3_exp(np.broadcast_to(g, (C, 4)),
                               fluct[:, k] @ B)
    scale = step_scale or np.sqrt(1.0 / (m * lam))
    interior = np.arange(1, m)
    evens = interior[interior % 2 == 0]
    odds = interior[interior % 2 == 1]

    def half_sweep(pos, idx, scale, rng):
        if idx.size == 0:
            return None
        cur = pos[:, idx]                       # (C, len(idx), dim)
        left = pos[:, idx - 1]
        right = pos[:, idx + 1]
        if space == "flat3":
            prop = cur + scale * rng.standard_normal(cur.shape)
        else:
            xi = scale * rng.standard_normal(cur.shape[:-1] + (3,))
            B = _h3_basis(cur)                  # (C, len(idx), 3, 4)
            v = np.einsum("...i,...ij->...j", xi, B)
            prop = h3_exp(cur, v)
        logp_cur = (_log_kernel(space, lam, m, dist(left, cur)) +
                    _log_kernel(space, lam, m, dist(cur, right)))
        logp_new = (_log_kernel(space, lam, m, dist(left, prop)) +
                    _log_kernel(space, lam, m, dist(prop, right)))
        acc = np.log(rng.uniform(size=logp_cur.shape)) < logp_new - logp_cur
        pos[:, idx] = np.where(acc[..., None], prop, cur)
        return float(np.mean(acc))

    # burn-in with scale tuning
    acc_window = []
    for sweep in range(burnin):
        hits = [a for a in (half_sweep(pos, evens, scale, rng),
                            half_sweep(pos, odds, scale, rng))
                if a is not None]
        acc_window.append(float(np.mean(hits)))
        if (sweep + 1) % 25 == 0:
            a = float(np.mean(acc_window[-25:]))
            if a < 0.2:
                scale /= 1.4
            elif a > 0.6:
                scale *= 1.4
    # measurement with frozen scale
    samples = []
    accs = []
    for sweep in range(chain):
        accs.extend(a for a in (half_sweep(pos, evens, scale, rng),
                                half_sweep(pos, odds, scale, rng))
                    if a is not None)
        if (sweep + 1) % thin == 0:
            samples.append(pos.copy())
    acc = float(np.mean(accs))
    if not 0.2 <= acc <= 0.6:
        raise RuntimeError(f"acceptance {acc:.3f} outside [0.2, 0.6] "
                           "after tuning")
    paths = np.concatenate(samples, axis=0)
    return BridgeEnsemble(space=space, lam=lam, m=m, d=d, seed=seed,
                          paths=paths, acceptance=acc, sampler="mcmc",
                          n_chains=C)


def antidevelop(bridge):
    """Discrete anti-development increments Delta b_k in the initial frame.

    flat3: plain position increments.  h3: slice-to-slice inverse
    exponential maps, pulled back through composed parallel transports of
    the initial orthonormal frame.  Shape (P, m, 3).
    """
    paths = bridge.paths
    if bridge.space == "flat3":
        return np.diff(paths, axis=1)
    P, mp1, _ = paths.shape
    m = mp1 - 1
    out = np.empty((P, m, 3))
    frame = np.broadcast_to(_h3_basis(paths[0, 0]), (P, 3, 4)).copy()
    for k in range(m):
        x = paths[:, k]
        y = paths[:, k + 1]
        v = h3_log(x, y)                     # (P, 4)
        out[:, k, 0] = _mink(v, frame[:, 0])
        out[:, k, 1] = _mink(v, frame[:, 1])
        out[:, k, 2] = _mink(v, frame[:, 2])
        for j in range(3):
            frame[:, j] = h3_transport(x, y, frame[:, j])
    return out


def _path_radii(bridge):
    """Distance to the terminal pole at each interior midpoint slice."""
    paths = bridge.paths
    y0 = paths[0, -1]
    if bridge.space == "flat3":
        return np.linalg.norm(paths - y0, axis=-1)
    return h3_distance(paths, np.broadcast_to(y0, paths.shape))


def _pathwise_gradient(bridge, phi, chunk=2048):
    """Discrete Malliavin gradient density g of F = sqrt(lam) int (phi, db)
    per path, so that |D_0 F|^2 = lam * ||g||_{L^2}^2.

    g_w = phi_w + kappa * sum_{u >= w} sum_{t >= u} w_ut *
          (<db_u, db_t> phi_t - <phi_t, db_u> db_t)
    from the constant-curvature closed form R(h,Y)Z = kappa(<Y,Z>h -
    <h,Z>Y); the coincidence diagonal carries weight 1/2 (midpoint rule
    for the iterated Stratonovich integral).  Shape (P, m, 3).
    """
    db = antidevelop(bridge)
    P, m, _ = db.shape
    kappa = bridge.curvature
    g = np.broadcast_to(phi, db.shape).copy()
    if kappa == 0.0:
        return g, db
    W = np.triu(np.ones((m, m)), 1) + 0.5 * np.eye(m)   # W[u,t], t >= u
    for lo in range(0, P, chunk):
        s = slice(lo, lo + chunk)
        d = db[s]
        bb = np.einsum("pui,pti->put", d, d)            # <db_u, db_t>
        fb = np.einsum("ti,pui->ptu", phi, d)           # <phi_t, db_u>
        term1 = np.einsum("put,ut,tj->puj", bb, W, phi)
        term2 = np.einsum("ptu,ut,ptj->puj", fb, W, d)
        q = kappa * (term1 - term2)                     # (p, m, 3)
        g[s] += np.cumsum(q[:, ::-1], axis=1)[:, ::-1]  # sum_{u >= w}
    return g, db


def rayleigh_trial(bridge, phi, ops=None):
    """Monte-Carlo Rayleigh quotient of F(path) = sqrt(lam) int (phi, db).

    The variance comes from the sampled bridge; the Dirichlet energy is
    the ensemble mean of the per-path |D_0 F|^2, whose deterministic
    leading term is lam ||(I+T) phi||^2 and whose curvature part uses the
    constant-curvature closed form of the iterated integral.  MC standard
    errors are computed across independent chains.  Returns variance,
    energy/lambda, quotient/lambda and its MC standard error.
    """
    phi = np.asarray(phi, dtype=float)
    m = bridge.m
    if phi.shape != (m, 3):
        raise ValueError("phi must be sampled on the bridge grid, (m, 3)")
    if abs(phi.mean(axis=0)).max() > 1e-8 * max(
            1.0, np.abs(phi).max()):
        raise ValueError("phi must be mean-zero")
    lam = bridge.lam
    g, db = _pathwise_gradient(bridge, phi)
    P = db.shape[0]
    F = np.sqrt(lam) * np.einsum("kj,pkj->p", phi, db)
    f2_se = bridge.chain_se(F**2)
    var = float((F**2).mean() - F.mean() ** 2)
    energy_per_path = np.sum(g**2, axis=(1, 2)) / m      # |D_0 F|^2 / lam
    energy = float(energy_per_path.mean())
    energy_se = bridge.chain_se(energy_per_path)
    quotient = energy / var
    q_se = quotient * np.sqrt((f2_se / var) ** 2 + (energy_se / energy) ** 2)
    out = {"variance": var, "variance_se": f2_se,
           "energy_over_lambda": energy, "energy_se": energy_se,
           "quotient_over_lambda": quotient, "mcse": float(q_se),
           "acceptance": bridge.acceptance, "samples": P}
    if ops is not None:
        x = phi.ravel()
        nrm2 = float(x @ x) / m
        ITx = ops.I_plus_T @ x
        out["energy_det"] = float(ITx @ ITx) / m / nrm2
        out["form_value"] = float(x @ ITx) / m / nrm2
    return out


def poincare_check(bridge, F, ops, j_envelope=0.0):
    """Monte-Carlo check of lam Var(F) <= E |(S^-1)* D_0 F|^2 for a
    cylinder function F.

    F is either an (m, 3) array g, encoding the linear functional
    F = int (g, db), or a dict {"kind": "midpoint_radial", "f": callable,
    "fprime": callable} for F = f(radial distance to the pole at t=1/2).
    The stochastic operator is replaced by its deterministic limit
    (S^-1)*, optionally enlarged by an operator-norm envelope for the
    perturbation J_eps.  Returns lhs, rhs, margin and the MC standard
    error of the lhs.
    """
    m = bridge.m
    lam = bridge.lam
    db = antidevelop(bridge)
    if isinstance(F, dict):
        if F.get("kind") != "midpoint_radial":
            raise ValueError("unknown cylinder function kind")
        r = _path_radii(bridge)[:, m // 2]
        vals = F["f"](r)
        # D_0 F: moving h shifts the midpoint along the radial direction
        # (frame direction e1 toward the pole), so the gradient density is
        # -fprime(r) e1 on [0, 1/2]
        base = np.zeros((m, 3))
        base[: m // 2, 0] = 1.0
        w = ops.S_inv_star @ base.ravel()
        amp2 = np.mean(F["fprime"](r) ** 2)
        rhs = amp2 * float(w @ w) / m
        rhs_norm2 = amp2 * float(np.sum(base**2)) / m
    else:
        g = np.asarray(F, dtype=float)
        if g.shape != (m, 3):
            raise ValueError("g must be (m, 3) on the bridge grid")
        vals = np.einsum("kj,pkj->p", g, db)
        w = ops.S_inv_star @ g.ravel()
        rhs = float(w @ w) / m
        rhs_norm2 = float(np.sum(g**2)) / m
    v2 = lam * (vals - vals.mean()) ** 2
    lhs = float(v2.mean())
    lhs_se = bridge.chain_se(v2)
    if j_envelope:
        rhs = (np.sqrt(rhs) + j_envelope * np.sqrt(rhs_norm2)) ** 2
    return {"lhs": lhs, "rhs": rhs, "lhs_se": lhs_se,
            "margin": rhs - lhs, "ok": bool(rhs - lhs >= -3 * lhs_se)}


# ---------------------------------------------------------------------------
# explicit lower bound

@dataclass
class LowerBoundInputs:
    alpha: float
    beta: float
    r0: float

    def __post_init__(self):
        if min(self.alpha, self.beta, self.r0) <= 0:
            raise ValueError("alpha, beta, r0 must be positive")


def gap_lower_bound(inputs):
    """Quarter of min(1/(8 alpha R^2), beta/(36 alpha)) with
    R = max(sqrt(2/beta), 192 alpha/sqrt(beta), 48 sqrt(alpha/beta), r0)."""
    a, b, r0 = inputs.alpha, inputs.beta, inputs.r0
    R = max(np.sqrt(2.0 / b), 192.0 * a / np.sqrt(b),
            48.0 * np.sqrt(a / b), r0)
    return 0.25 * min(1.0 / (8.0 * a * R * R), b / (36.0 * a))
