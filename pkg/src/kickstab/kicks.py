"""Truncated-Gaussian kick law: sampling, support ellipsoid, projected density.

The kick distribution is N(0, K) conditioned on the ball ||phi|| <= eps_hat,
sampled by rejection.  The normalization constant 1/c_hat = G(B_eps) is
estimated by Monte Carlo (with standard error) and, for subspaces of
dimension <= 3, computed by quadrature through the distribution of the
Gaussian quadratic form sum lambda_i z_i^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DegenerateCovariance, RejectionCap

__all__ = [
    "KickLaw",
    "make_kick_law",
    "diag_correlation",
    "sample_kick",
    "ball_mass",
    "estimate_ball_mass_mc",
    "support_ellipsoid_membership",
    "qnu_density",
]

REJECTION_WINDOW = 1_000_000
REJECTION_RATE_FLOOR = 1e-4


def _key_int(k) -> int:
    """Stable nonnegative integer for SeedSequence spawn keys."""
    if isinstance(k, (int, np.integer)):
        return int(k) & 0x7FFFFFFF
    import hashlib

    return int.from_bytes(hashlib.sha256(str(k).encode()).digest()[:4], "big")


@dataclass
class KickLaw:
    """Correlation matrix, truncation radius, and sampling bookkeeping."""

    K: np.ndarray
    eps_hat: float
    chol_K: np.ndarray
    norm_const_est: tuple  # (ball mass estimate, standard error)
    rng_spec: tuple        # (seed, stream id)
    _window_draws: int = field(default=0, repr=False)
    _window_accepts: int = field(default=0, repr=False)

    @property
    def n(self) -> int:
        return self.K.shape[0]

    def stream(self, *key) -> np.random.Generator:
        """Independent generator derived from (seed, stream id, *key)."""
        seed, stream_id = self.rng_spec
        parts = tuple(_key_int(k) for k in key)
        return np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(stream_id, *parts)))


def diag_correlation(n, scale=1.0, power=2.0) -> np.ndarray:
    """Trace-class diagonal correlation pattern K_jj = scale * j^(-power)."""
    j = np.arange(1, n + 1, dtype=float)
    return np.diag(scale * j ** -power)


def make_kick_law(K, eps_hat, seed, stream_id=0, norm_samples=200_000) -> KickLaw:
    """Validate K (symmetric positive definite) and estimate the ball mass."""
    K = np.asarray(K, dtype=float)
    if eps_hat < 0:
        raise ValueError("eps_hat must be nonnegative")
    if np.linalg.norm(K - K.T) > 1e-12 * max(1.0, np.linalg.norm(K)):
        raise ValueError("K must be symmetric")
    K = 0.5 * (K + K.T)
    evals = np.linalg.eigvalsh(K)
    if evals.min() <= 0:
        raise ValueError("K must be positive definite")
    chol = np.linalg.cholesky(K)
    law = KickLaw(K=K, eps_hat=float(eps_hat), chol_K=chol,
                  norm_const_est=(np.nan, np.nan), rng_spec=(int(seed), int(stream_id)))
    if eps_hat > 0 and norm_samples:
        est, se = estimate_ball_mass_mc(law, norm_samples, law.stream("norm-const"))
        law.norm_const_est = (est, se)
    return law


def estimate_ball_mass_mc(law, n_samples, rng):
    """Monte Carlo estimate (with standard error) of P(||N(0,K)|| <= eps_hat)."""
    batch = 100_000
    hits = 0
    done = 0
    while done < n_samples:
        b = min(batch, n_samples - done)
        z = rng.standard_normal((b, law.n)) @ law.chol_K.T
        hits += int(np.sum(np.einsum("ij,ij->i", z, z) <= law.eps_hat ** 2))
        done += b
    p = hits / n_samples
    se = np.sqrt(max(p * (1 - p), 1.0 / n_samples) / n_samples)
    return float(p), float(se)


def ball_mass(cov_eigs, radius, n_nodes=160) -> float:
    """P(sum lambda_i z_i^2 <= radius^2) by nested Gauss-Legendre quadrature.

    Supports up to three positive eigenvalues; used for exact normalization
    constants of low-dimensional projected laws.
    """
    lam = np.sort(np.asarray(cov_eigs, dtype=float))[::-1]
    if lam.size == 0:
        return 1.0
    if np.any(lam <= 0):
        raise ValueError("covariance eigenvalues must be positive")
    if lam.size > 3:
        raise ValueError("ball_mass supports dimension <= 3; use the MC estimate")
    q = float(radius) ** 2
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)

    def F(k, qs):
        qs = np.asarray(qs, dtype=float)
        out = np.zeros_like(qs)
        pos = qs > 0
        if not np.any(pos):
            return out
        if k == 0:
            out[pos] = stats.chi2.cdf(qs[pos] / lam[0], df=1)
            return out
        qp = qs[pos]
        half = np.sqrt(qp / lam[k])
        t = half[:, None] * nodes[None, :]
        inner = F(k - 1, (qp[:, None] - lam[k] * t ** 2).ravel()).reshape(t.shape)
        dens = np.exp(-0.5 * t ** 2) / np.sqrt(2 * np.pi)
        out[pos] = np.einsum("ij,j->i", dens * inner, weights) * half
        return out

    return float(np.clip(F(lam.size - 1, np.array([q]))[0], 0.0, 1.0))


def _check_rejection_window(law):
    if law._window_draws >= REJECTION_WINDOW:
        rate = law._window_accepts / law._window_draws
        if rate < REJECTION_RATE_FLOOR:
            raise RejectionCap(
                f"acceptance rate {rate:.2e} below {REJECTION_RATE_FLOOR} over "
                f"{law._window_draws} draws; eps_hat too small relative to K")
        law._window_draws = 0
        law._window_accepts = 0


def sample_kick(law, rng) -> np.ndarray:
    """One sample of N(0, K) conditioned on the ball, by rejection.

    Deterministic given the generator state; eps_hat = 0 degenerates to the
    zero kick.  Raises RejectionCap when the windowed acceptance rate falls
    below the floor.
    """
    if law.eps_hat == 0.0:
        return np.zeros(law.n)
    eps2 = law.eps_hat ** 2
    batch = 4
    while True:
        z = rng.standard_normal((batch, law.n)) @ law.chol_K.T
        ok = np.einsum("ij,ij->i", z, z) <= eps2
        law._window_draws += batch
        hit = int(np.argmax(ok)) if ok.any() else -1
        if hit >= 0:
            law._window_accepts += 1
            _check_rejection_window(law)
            return z[hit]
        _check_rejection_window(law)
        batch = min(batch * 2, 65536)


def support_ellipsoid_membership(alpha_op, eps_hat, x) -> bool:
    """Membership of x in the pushforward support ellipsoid.

    alpha_op maps the unstable block to the target block; the test point is
    a member when the minimal preimage norm
    ||x - A y_hat||^2 + ||y_hat||^2, with y_hat = (A^T A + I)^{-1} A^T x,
    does not exceed eps_hat^2 (boundary points count as members).
    """
    A = np.asarray(alpha_op, dtype=float)
    x = np.asarray(x, dtype=float)
    if A.size == 0 or np.all(A == 0.0):
        return float(x @ x) <= eps_hat ** 2
    yhat = np.linalg.solve(A.T @ A + np.eye(A.shape[1]), A.T @ x)
    resid = x - A @ yhat
    return float(resid @ resid + yhat @ yhat) <= eps_hat ** 2


def _gaussian_logpdf(y, cov):
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise DegenerateCovariance("projected covariance not positive definite")
    alpha = np.linalg.solve(cov, y)
    return -0.5 * (len(y) * np.log(2 * np.pi) + logdet + y @ alpha)


def qnu_density(Q, law, y, c_hat=None, mc_samples=200_000) -> float:
    """Density of the projected truncated law at y (subspace coordinates).

    Q is an n x r matrix with orthonormal columns spanning the subspace.
    Returns c_hat * chi_{||y|| <= eps_hat} * g(y) with g the Gaussian
    density of covariance Q^T K Q, normalized to unit mass on the subspace.
    The truncation constant c_hat is computed by quadrature for r <= 3 and
    by Monte Carlo otherwise, unless supplied.
    """
    Q = np.asarray(Q, dtype=float)
    y = np.asarray(y, dtype=float)
    n, r = Q.shape
    if np.linalg.norm(Q.T @ Q - np.eye(r)) > 1e-8:
        raise ValueError("Q must have orthonormal columns")
    cov = Q.T @ law.K @ Q
    evals = np.linalg.eigvalsh(cov)
    if evals.min() < 1e-14:
        raise DegenerateCovariance(
            f"projected covariance eigenvalue {evals.min():.2e} below 1e-14")
    if float(y @ y) > law.eps_hat ** 2:
        return 0.0
    if c_hat is None:
        if r <= 3:
            c_hat = 1.0 / ball_mass(evals, law.eps_hat)
        else:
            rng = law.stream("qnu-norm")
            batch = mc_samples
            z = rng.standard_normal((batch, n)) @ law.chol_K.T @ Q
            p = np.mean(np.einsum("ij,ij->i", z, z) <= law.eps_hat ** 2)
            if p == 0:
                raise DegenerateCovariance("no Monte Carlo mass in the truncation ball")
            c_hat = 1.0 / float(p)
    return float(c_hat * np.exp(_gaussian_logpdf(y, cov)))
