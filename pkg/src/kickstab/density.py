"""Pushforward density of the projected truncated Gaussian.

The projection pi = (alpha, E) maps R^n = R^m (+) R^nm onto R^nm.  Its
fibers cut the truncation ball in m-dimensional disks; the pushforward
density is the slice integral

    P(x) = c_hat * J * int_{slice(x)} g(R^T (w, x)) dw,

where g is the Gaussian density of the projected law, R maps slice/offset
coordinates to the orthonormal eigenbasis b_1..b_n adapted to alpha, and
J = prod_i (1 + ||alpha b_i||^2)^{-1/2} = det R^T is the change-of-variables
Jacobian.  Slice centers and radii, the boundary Lagrange step, the m/2
boundary exponent probe, the first variation, and the total-variation
Lipschitz ratio all live here.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma as math_gamma

import numpy as np

from .errors import (
    BracketFailure,
    NotInterior,
    ProbeOffBoundary,
    QuadratureUnsupported,
)
from .kicks import ball_mass

__all__ = [
    "PiDecomposition",
    "SliceGeometry",
    "ProjectedLaw",
    "QuadratureSpec",
    "build_pi_decomposition",
    "projected_law",
    "slice_geometry",
    "gamma_integrand",
    "density_P",
    "density_batch",
    "mc_density_oracle",
    "lagrange_boundary_step",
    "boundary_exponent_probe",
    "first_variation",
    "tv_lipschitz_ratio",
]

S_THRESHOLD = 1e-10


@dataclass(frozen=True)
class PiDecomposition:
    """Eigen-adapted bases and change of variables for pi = (alpha, E)."""

    m: int
    nm: int
    alpha: np.ndarray        # nm x m
    mu: np.ndarray           # eigenvalues of E + alpha^T alpha, descending
    s: int                   # count of mu > 1 (strict, threshold 1e-10)
    n_degenerate: int        # near-1 eigenvalues clamped to 1
    b_basis: np.ndarray      # n x n orthonormal columns b_1..b_n (std coords)
    theta_basis: np.ndarray  # n x n columns theta_1..theta_n (std coords)
    R: np.ndarray            # n x n, theta_i = sum_j R_ij b_j
    J: float                 # det R^T = prod_{i<=s} mu_i^{-1/2}
    alpha_b_norms: np.ndarray  # ||alpha b_i||, i = 1..m

    @property
    def n(self) -> int:
        return self.m + self.nm

    @property
    def B2(self) -> np.ndarray:
        """Orthonormal basis of the offset block (nm x nm, std coords)."""
        return self.b_basis[self.m:, self.m:]

    @property
    def theta_slice(self) -> np.ndarray:
        """theta_1..theta_m, the orthonormal basis of the fiber direction."""
        return self.theta_basis[:, :self.m]

    def support_quadform(self) -> np.ndarray:
        """Matrix M of the support ellipsoid {x : x^T M x <= eps^2}."""
        a = self.alpha
        G = np.linalg.solve(np.eye(self.m) + a.T @ a, a.T)
        return np.eye(self.nm) - a @ G


@dataclass(frozen=True)
class SliceGeometry:
    """Per-point geometry of the fiber slice through the truncation ball."""

    x: np.ndarray
    classification: str      # "outside" | "boundary" | "interior"
    center: np.ndarray       # full-space center u_hat (+) v_hat
    radius: float


@dataclass(frozen=True)
class ProjectedLaw:
    """Gaussian covariance, truncation radius and normalization constant."""

    K: np.ndarray
    eps: float
    c_hat: float


@dataclass(frozen=True)
class QuadratureSpec:
    radial: int = 64
    angular: int = 256
    polar: int = 32
    mc_fallback: bool = False
    mc_nodes: int = 20_000
    grid_1d: int = 4096
    grid_2d: int = 192


DEFAULT_QUAD = QuadratureSpec()


def build_pi_decomposition(alpha) -> PiDecomposition:
    """Symmetric eigensolve of E + alpha^T alpha and basis assembly."""
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    nm, m = alpha.shape
    evals, evecs = np.linalg.eigh(np.eye(m) + alpha.T @ alpha)
    order = np.argsort(evals)[::-1]
    mu = evals[order]
    V = evecs[:, order]
    n_degenerate = int(np.sum((mu > 1.0) & (mu <= 1.0 + S_THRESHOLD)))
    mu = np.maximum(mu, 1.0)
    s = int(np.sum(mu > 1.0 + S_THRESHOLD))
    # deterministic eigenvector signs
    for i in range(m):
        k = int(np.argmax(np.abs(V[:, i])))
        if V[k, i] < 0:
            V[:, i] = -V[:, i]
    n = m + nm
    alpha_b = alpha @ V                      # nm x m
    norms = np.linalg.norm(alpha_b, axis=0)
    B = np.zeros((n, n))
    B[:m, :m] = V
    for i in range(s):
        B[m:, m + i] = alpha_b[:, i] / norms[i]
    # complete the offset block with an orthonormal basis of ker alpha^T
    if nm > s:
        img = B[m:, m:m + s]
        Umat = np.linalg.svd(img, full_matrices=True)[0] if s else np.eye(nm)
        B[m:, m + s:] = Umat[:, s:]
    theta = np.zeros((n, n))
    for i in range(m):
        theta[:m, i] = V[:, i] / np.sqrt(mu[i])
        theta[m:, i] = -alpha_b[:, i] / np.sqrt(mu[i])
    theta[:, m:] = B[:, m:]
    R = np.eye(n)
    for i in range(s):
        R[i, i] = mu[i] ** -0.5
        R[i, m + i] = -norms[i] / np.sqrt(mu[i])
    J = float(np.prod(mu[:s] ** -0.5)) if s else 1.0
    return PiDecomposition(m=m, nm=nm, alpha=alpha, mu=mu, s=s,
                           n_degenerate=n_degenerate, b_basis=B,
                           theta_basis=theta, R=R, J=J, alpha_b_norms=norms)


def projected_law(K, eps, c_hat=None, mc_samples=400_000, seed=0) -> ProjectedLaw:
    """Normalize the truncated Gaussian: c_hat = 1 / mass of the eps-ball.

    Quadrature for dimension <= 3, Monte Carlo fallback above.
    """
    K = np.asarray(K, dtype=float)
    if c_hat is None:
        evals = np.linalg.eigvalsh(K)
        if K.shape[0] <= 3:
            c_hat = 1.0 / ball_mass(evals, eps)
        else:
            rng = np.random.default_rng(seed)
            L = np.linalg.cholesky(K)
            z = rng.standard_normal((mc_samples, K.shape[0])) @ L.T
            p = float(np.mean(np.einsum("ij,ij->i", z, z) <= eps ** 2))
            c_hat = 1.0 / p
    return ProjectedLaw(K=K, eps=float(eps), c_hat=float(c_hat))


def slice_geometry(dec, eps, x) -> SliceGeometry:
    """Center and radius of the fiber slice; classification against the ball."""
    x = np.asarray(x, dtype=float)
    a = dec.alpha
    uhat = np.linalg.solve(np.eye(dec.m) + a.T @ a, a.T @ x)
    vhat = x - a @ uhat
    rad2 = eps ** 2 - uhat @ uhat - vhat @ vhat
    tol = 1e-8 * eps ** 2
    if rad2 < -tol:
        cls, r = "outside", float("nan")
    elif rad2 > tol:
        cls, r = "interior", float(np.sqrt(rad2))
    else:
        cls, r = "boundary", float(np.sqrt(max(rad2, 0.0)))
    return SliceGeometry(x=x, classification=cls,
                         center=np.concatenate([uhat, vhat]), radius=r)


def _gauss_in_b_coords(dec, law):
    Kb = dec.b_basis.T @ law.K @ dec.b_basis
    Kb_inv = np.linalg.inv(Kb)
    sign, logdet = np.linalg.slogdet(Kb)
    if sign <= 0:
        raise ValueError("projected covariance must be positive definite")
    lognorm = -0.5 * (dec.n * np.log(2 * np.pi) + logdet)
    return Kb_inv, lognorm


def gamma_integrand(dec, K_hat, w, x) -> float:
    """Slice integrand Gamma(w, x): Jacobian times the Gaussian at R^T(w,x).

    K_hat is the precision matrix of the projected Gaussian in standard
    coordinates; w is given in fiber (theta) coordinates, x in standard
    offset coordinates.  The Jacobian factor J = det R^T makes the slice
    integrals reproduce the pushforward measure exactly (the corresponding
    prefactor in the source construction is stated inverted; mass
    conservation fixes the sign of the exponent).
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    K_hat = np.asarray(K_hat, dtype=float)
    z = np.concatenate([w, dec.B2.T @ x])
    y_b = dec.R.T @ z
    y = dec.b_basis @ y_b      # standard coordinates
    sign, logdet_prec = np.linalg.slogdet(K_hat)
    if sign <= 0:
        raise ValueError("precision matrix must be positive definite")
    logg = 0.5 * logdet_prec - 0.5 * dec.n * np.log(2 * np.pi) - 0.5 * y @ K_hat @ y
    return float(dec.J * np.exp(logg))


def _unit_ball_rule(m, quad):
    """Nodes/weights integrating over the unit ball in R^m exactly enough."""
    if m == 1:
        t, w = np.polynomial.legendre.leggauss(quad.radial)
        return t[:, None], w
    if m == 2:
        t, w = np.polynomial.legendre.leggauss(quad.radial)
        u = 0.5 * (t + 1.0)
        wu = 0.5 * w
        phi = 2 * np.pi * np.arange(quad.angular) / quad.angular
        nodes = np.stack([np.outer(u, np.cos(phi)).ravel(),
                          np.outer(u, np.sin(phi)).ravel()], axis=1)
        weights = np.outer(wu * u, np.full(quad.angular, 2 * np.pi / quad.angular)).ravel()
        return nodes, weights
    if m == 3:
        t, w = np.polynomial.legendre.leggauss(quad.radial)
        u = 0.5 * (t + 1.0)
        wu = 0.5 * w
        ct, wc = np.polynomial.legendre.leggauss(quad.polar)
        st = np.sqrt(1 - ct ** 2)
        phi = 2 * np.pi * np.arange(quad.angular // 4 or 1) / (quad.angular // 4 or 1)
        wphi = 2 * np.pi / len(phi)
        dirs = np.stack([np.outer(st, np.cos(phi)).ravel(),
                         np.outer(st, np.sin(phi)).ravel(),
                         np.repeat(ct, len(phi))], axis=1)
        wdir = np.repeat(wc, len(phi)) * wphi
        nodes = (u[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
        weights = (wu[:, None] * u[:, None] ** 2 * wdir[None, :]).ravel()
        return nodes, weights
    raise QuadratureUnsupported(f"slice quadrature implemented for m <= 3, got m={m}")


def density_batch(dec, law, xs, quad=DEFAULT_QUAD) -> np.ndarray:
    """Vectorized pushforward density at rows of xs."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    N = xs.shape[0]
    a = dec.alpha
    m, nm = dec.m, dec.nm
    if m > 3:
        if not quad.mc_fallback:
            raise QuadratureUnsupported(
                f"m={m} needs the Monte Carlo fallback (quad.mc_fallback=True)")
        return _density_batch_mc(dec, law, xs, quad)
    G1 = np.linalg.solve(np.eye(m) + a.T @ a, a.T)    # m x nm
    U = xs @ G1.T                                     # (N, m)
    Vres = xs - U @ a.T                               # (N, nm)
    rad2 = law.eps ** 2 - np.einsum("ij,ij->i", U, U) - np.einsum("ij,ij->i", Vres, Vres)
    out = np.zeros(N)
    inside = rad2 > 0
    if not np.any(inside):
        return out
    r = np.sqrt(rad2[inside])
    Ui = U[inside]
    # slice center, fiber part, in theta coordinates
    w_full = np.concatenate([Ui, -Ui @ a.T], axis=1)  # (Ni, n)
    w_c = w_full @ dec.theta_slice                    # (Ni, m)
    z_x = xs[inside] @ dec.B2                         # (Ni, nm)
    nodes, weights = _unit_ball_rule(m, quad)
    W = w_c[:, None, :] + r[:, None, None] * nodes[None, :, :]
    Z = np.concatenate([W, np.broadcast_to(z_x[:, None, :], (len(r), len(weights), nm))], axis=2)
    Y = Z @ dec.R                                     # y = R^T z, row convention
    Kb_inv, lognorm = _gauss_in_b_coords(dec, law)
    qf = np.einsum("abi,ij,abj->ab", Y, Kb_inv, Y)
    G = np.exp(lognorm - 0.5 * qf)
    out[inside] = law.c_hat * dec.J * (r ** m) * (G @ weights)
    return out


def _density_batch_mc(dec, law, xs, quad):
    """Monte Carlo slice integration for fiber dimension m > 3."""
    rng = np.random.default_rng(17)
    a = dec.alpha
    m = dec.m
    raw = rng.standard_normal((quad.mc_nodes, m))
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    radii = rng.uniform(0, 1, quad.mc_nodes) ** (1.0 / m)
    nodes = raw * radii[:, None]
    vol = np.pi ** (m / 2) / math_gamma(m / 2 + 1)
    weights = np.full(quad.mc_nodes, vol / quad.mc_nodes)
    out = np.zeros(xs.shape[0])
    Kb_inv, lognorm = _gauss_in_b_coords(dec, law)
    for i, x in enumerate(xs):
        geo = slice_geometry(dec, law.eps, x)
        if geo.classification != "interior":
            continue
        uhat = geo.center[:m]
        w_c = dec.theta_slice.T @ np.concatenate([uhat, -a @ uhat])
        W = w_c[None, :] + geo.radius * nodes
        Z = np.concatenate([W, np.tile(dec.B2.T @ x, (quad.mc_nodes, 1))], axis=1)
        Y = Z @ dec.R
        qf = np.einsum("ai,ij,aj->a", Y, Kb_inv, Y)
        out[i] = law.c_hat * dec.J * geo.radius ** m * \
            float(np.exp(lognorm - 0.5 * qf) @ weights)
    return out


def density_P(dec, law, x, quad=DEFAULT_QUAD) -> float:
    """Pushforward density at one point (zero outside the support)."""
    return float(density_batch(dec, law, np.atleast_2d(x), quad)[0])


def mc_density_oracle(dec, law, x, n_samples, bandwidth=None, seed=0):
    """Independent density estimate: sample, push through pi, Epanechnikov KDE.

    Returns (estimate, standard error).  Requires n_samples >= 10^4.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 10^4")
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(law.K)
    n = dec.n
    samples = np.empty((n_samples, n))
    got = 0
    while got < n_samples:
        z = rng.standard_normal((max(50_000, n_samples), n)) @ L.T
        keep = z[np.einsum("ij,ij->i", z, z) <= law.eps ** 2]
        take = min(len(keep), n_samples - got)
        samples[got:got + take] = keep[:take]
        got += take
    pushed = samples[:, :dec.m] @ dec.alpha.T + samples[:, dec.m:]
    if bandwidth is None:
        sd = pushed.std(axis=0, ddof=1)
        bandwidth = sd * (4.0 / (dec.nm + 2.0)) ** (1.0 / (dec.nm + 4.0)) \
            * n_samples ** (-1.0 / (dec.nm + 4.0))
    bandwidth = np.broadcast_to(np.asarray(bandwidth, dtype=float), (dec.nm,))
    t = (pushed - x[None, :]) / bandwidth[None, :]
    k = np.prod(np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t ** 2), 0.0), axis=1) \
        / np.prod(bandwidth)
    return float(k.mean()), float(k.std(ddof=1) / np.sqrt(n_samples))


def _boundary_decompose(dec, x):
    """x = x0 + sum_j x_j alpha b_j with x0 in ker alpha^T."""
    coeffs = np.zeros(dec.s)
    x0 = np.asarray(x, dtype=float).copy()
    for j in range(dec.s):
        direction = dec.b_basis[dec.m:, dec.m + j]
        cj = float(direction @ x) / dec.alpha_b_norms[j]
        coeffs[j] = cj
        x0 -= cj * dec.alpha_b_norms[j] * direction
    return x0, coeffs


def lagrange_boundary_step(dec, x, gamma0):
    """Inward step of norm gamma0 maximizing the slice radius (unique optimum).

    Solves the multiplier equation
        ||x0||^2/(1+lam)^2 + sum_j x_j^2 ||alpha b_j||^2 / (1+lam mu_j)^2
            = gamma0^2
    by monotone bisection with geometric bracket expansion, then assembles
    h_hat = -x0/(1+lam) - sum_j x_j/(1+lam mu_j) alpha b_j.
    """
    x = np.asarray(x, dtype=float)
    x0, coeffs = _boundary_decompose(dec, x)
    nx0 = float(x0 @ x0)
    terms = coeffs ** 2 * dec.alpha_b_norms[:dec.s] ** 2
    mus = dec.mu[:dec.s]
    if gamma0 <= 0 or gamma0 ** 2 >= nx0 + terms.sum():
        raise ValueError("gamma0 must satisfy 0 < gamma0 < ||x||")

    def radius2(lam):
        return nx0 / (1 + lam) ** 2 + float(np.sum(terms / (1 + lam * mus) ** 2))

    target = gamma0 ** 2
    lo, hi = 0.0, 1.0
    doublings = 0
    while radius2(hi) > target:
        hi *= 2.0
        doublings += 1
        if doublings > 60:
            raise BracketFailure("no sign change within 60 doublings")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if radius2(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16 * (1.0 + hi) and abs(radius2(hi) - target) < 1e-12:
            break
    lam = 0.5 * (lo + hi)
    h = -x0 / (1 + lam)
    for j in range(dec.s):
        direction = dec.b_basis[dec.m:, dec.m + j] * dec.alpha_b_norms[j]
        h = h - coeffs[j] / (1 + lam * mus[j]) * direction
    return h, float(lam)


def boundary_exponent_probe(dec, law, x_boundary, h_norms=None, quad=DEFAULT_QUAD) -> dict:
    """Fit log P(x + h_hat) against log ||h|| along the optimal inward steps.

    The expected slope is m/2 (fiber dimension over two).  Raises
    ProbeOffBoundary when x_boundary is not on the support boundary.
    """
    x = np.asarray(x_boundary, dtype=float)
    M = dec.support_quadform()
    val = float(x @ M @ x)
    if abs(val - law.eps ** 2) > 1e-8 * law.eps ** 2:
        raise ProbeOffBoundary(
            f"quadratic form {val:.6e} vs eps^2 {law.eps**2:.6e}")
    if h_norms is None:
        h_norms = law.eps * np.geomspace(1e-4, 1e-1, 12)
    h_norms = np.asarray(h_norms, dtype=float)
    Ps = np.empty(len(h_norms))
    for i, g0 in enumerate(h_norms):
        h, _ = lagrange_boundary_step(dec, x, g0)
        Ps[i] = density_P(dec, law, x + h, quad)
    keep = Ps > 0
    if keep.sum() < 3:
        raise ProbeOffBoundary("too few positive density values along the probe")
    logs = np.log(h_norms[keep])
    logP = np.log(Ps[keep])
    slope, intercept = np.polyfit(logs, logP, 1)
    resid = logP - (slope * logs + intercept)
    ss_tot = float(np.sum((logP - logP.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2,
            "h_norms": h_norms.tolist(), "P_values": Ps.tolist()}


def _variation_analytic(dec, law, x, h, quad):
    m = dec.m
    a = dec.alpha
    geo = slice_geometry(dec, law.eps, x)
    r = geo.radius
    uhat = geo.center[:m]
    w_c = dec.theta_slice.T @ np.concatenate([uhat, -a @ uhat])
    Kb_inv, lognorm = _gauss_in_b_coords(dec, law)
    zx = dec.B2.T @ x
    G1 = np.linalg.solve(np.eye(m) + a.T @ a, a.T)
    uh = G1 @ h
    dw_theta = dec.theta_slice.T @ np.concatenate([uh, -a @ uh])
    rho = float(np.linalg.norm(dw_theta))
    Mx_h = float(x @ dec.support_quadform() @ h)

    def gamma_at(Wpts):
        Z = np.concatenate([Wpts, np.tile(zx, (len(Wpts), 1))], axis=1)
        Y = Z @ dec.R
        qf = np.einsum("ai,ij,aj->a", Y, Kb_inv, Y)
        return law.c_hat * dec.J * np.exp(lognorm - 0.5 * qf)

    # boundary term over the unit sphere of the slice
    if m == 1:
        omegas = np.array([[1.0], [-1.0]])
        sphere_w = np.array([1.0, 1.0])
    elif m == 2:
        nang = quad.angular
        phi = 2 * np.pi * np.arange(nang) / nang
        omegas = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        sphere_w = np.full(nang, 2 * np.pi / nang)
    else:
        raise QuadratureUnsupported("analytic first variation implemented for m <= 2")
    b_pts = w_c[None, :] + r * omegas
    gv = gamma_at(b_pts)
    if rho > 0:
        cos_psi = omegas @ (dw_theta / rho)
    else:
        cos_psi = np.zeros(len(omegas))
    psi_term = r ** (m - 1) * (rho * cos_psi - Mx_h / r)
    term1 = float(np.sum(gv * psi_term * sphere_w))

    # interior term: gradient of Gamma against h over the slice disk
    nodes, weights = _unit_ball_rule(m, quad)
    Wpts = w_c[None, :] + r * nodes
    Z = np.concatenate([Wpts, np.tile(zx, (len(Wpts), 1))], axis=1)
    Y = Z @ dec.R
    qf = np.einsum("ai,ij,aj->a", Y, Kb_inv, Y)
    gvals = law.c_hat * dec.J * np.exp(lognorm - 0.5 * qf)
    grad_y = -(Y @ Kb_inv)                       # d log g / dy
    grad_z = grad_y @ dec.R.T                    # chain rule through y = R^T z
    h_b2 = dec.B2.T @ h
    dgamma_h = gvals * (grad_z[:, m:] @ h_b2)
    term2 = float(r ** m * (dgamma_h @ weights))
    return term1 + term2


def first_variation(dec, law, x, h, mode="numeric", quad=DEFAULT_QUAD) -> float:
    """Directional first variation of P at an interior point.

    numeric: symmetric differences with Richardson extrapolation over
    lambda in {1e-3, 5e-4} * eps.  analytic: boundary-sphere plus interior
    integrals of the explicit variation formula (m <= 2).
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    geo = slice_geometry(dec, law.eps, x)
    if geo.classification != "interior":
        raise NotInterior(f"x classified as {geo.classification}")
    if mode == "analytic":
        return _variation_analytic(dec, law, x, h, quad)
    if mode != "numeric":
        raise ValueError(f"unknown mode {mode!r}")
    lam1 = 1e-3 * law.eps
    lam2 = 0.5 * lam1

    def central(lam):
        pts = np.stack([x + lam * h, x - lam * h])
        p = density_batch(dec, law, pts, quad)
        return (p[0] - p[1]) / (2 * lam)

    d1, d2 = central(lam1), central(lam2)
    return float((4.0 * d2 - d1) / 3.0)


def _bounding_box(dec, eps, delta):
    Minv = np.linalg.inv(dec.support_quadform())
    half = eps * np.sqrt(np.diag(Minv))
    return half + np.abs(delta)


def tv_lipschitz_ratio(dec, law, v1, v2, quad=DEFAULT_QUAD) -> float:
    """int |P(x - v1) - P(x - v2)| dx / ||v1 - v2|| over a covering box.

    After the substitution y = x - v1 the integral depends only on
    delta = v1 - v2, which makes the ratio exactly shift-invariant.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    delta = v1 - v2
    sep = float(np.linalg.norm(delta))
    if sep == 0.0:
        return 0.0
    half = _bounding_box(dec, law.eps, delta)
    if dec.nm == 1:
        npts = quad.grid_1d
        ys = np.linspace(-half[0], half[0], npts, endpoint=False) + half[0] / npts
        ys = ys[:, None]
        vol = 2 * half[0] / npts
    elif dec.nm == 2:
        g = quad.grid_2d
        axes = [np.linspace(-h, h, g, endpoint=False) + h / g for h in half]
        Xg, Yg = np.meshgrid(*axes, indexing="ij")
        ys = np.stack([Xg.ravel(), Yg.ravel()], axis=1)
        vol = np.prod(2 * half / g)
    else:
        if not quad.mc_fallback:
            raise QuadratureUnsupported(
                f"nm={dec.nm} needs the Monte Carlo fallback (quad.mc_fallback=True)")
        rng = np.random.default_rng(23)
        ys = rng.uniform(-half, half, size=(quad.mc_nodes, dec.nm))
        vol = float(np.prod(2 * half)) / quad.mc_nodes
    p0 = density_batch(dec, law, ys, quad)
    p1 = density_batch(dec, law, ys + delta, quad)
    return float(np.sum(np.abs(p0 - p1)) * vol / sep)
