"""Spectral dichotomy at a level sigma, Riesz projectors, and contraction.

The splitting works with the adjoint unstable basis d_1..d_m (eigenvectors
and associated vectors of A^T for eigenvalues with Re < sigma, conjugate
pairs replaced by real/imaginary parts).  X_sigma is the orthogonal
complement of span{d_j}; it is invariant under S(tau) = e^{-A tau} and the
restricted operator norm there is the contraction constant gamma_0.

A ladder of higher levels sigma_1 < ... < sigma_K, one per segment
Delta_k = [e^{2k/d}, e^{2(k+1)/d}], carries the tail-contraction constants
gamma_k used by the ergodicity hypotheses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla
from scipy.integrate import quad

from .errors import ContourTouchesSpectrum, EmptyGap, GapViolation, InvalidContour

__all__ = [
    "Dichotomy",
    "SigmaLadder",
    "eig_split",
    "riesz_projector",
    "semigroup",
    "contraction_certificate",
    "contour_bound_integrals",
    "sigma_ladder",
    "tail_contraction",
]


def _as_matrix(model_or_A) -> np.ndarray:
    A = getattr(model_or_A, "A", model_or_A)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square real matrix")
    return A


def _spectral_norm(M) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


@dataclass(frozen=True)
class Dichotomy:
    """Stable/unstable splitting of R^n at level sigma."""

    sigma: float
    m: int
    D: np.ndarray        # n x m adjoint unstable basis (real-ified, unit columns)
    Eb: np.ndarray       # n x m orthonormalization of D
    P_sigma: np.ndarray  # orthogonal projector onto X_sigma = (span D)^perp
    P_riesz: np.ndarray  # spectral projector of A onto modes with Re < sigma
    gap: float           # distance from {Re = sigma} to the spectrum
    stable_basis: np.ndarray  # n x (n-m) orthonormal basis of X_sigma

    @property
    def n(self) -> int:
        return self.P_sigma.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "m": self.m,
            "gap": self.gap,
            "D": self.D.ravel().tolist(),
            "Eb": self.Eb.ravel().tolist(),
        }


def _realify_ordered(w, V, sel, pair_tol=1e-9):
    """Real-ified eigenvector columns for the selected indices.

    Ordering: ascending real part, then ascending |imaginary part|, then
    original index.  A conjugate pair contributes (Re v, Im v) of its
    Im > 0 member.  Columns are unit-normalized with the largest-magnitude
    entry made positive.
    """
    order = sorted(sel, key=lambda i: (w[i].real, abs(w[i].imag), i))
    used = set()
    cols = []
    for i in order:
        if i in used:
            continue
        lam, v = w[i], V[:, i]
        k = int(np.argmax(np.abs(v)))
        v = v * np.exp(-1j * np.angle(v[k]))
        if abs(lam.imag) <= pair_tol:
            used.add(i)
            vr = np.real(v)
            vr = vr / np.linalg.norm(vr)
            if vr[int(np.argmax(np.abs(vr)))] < 0:
                vr = -vr
            cols.append(vr)
        else:
            partner = None
            for j in order:
                if j not in used and j != i and abs(w[j] - np.conj(lam)) <= pair_tol * (1 + abs(lam)):
                    partner = j
                    break
            used.add(i)
            if partner is not None:
                used.add(partner)
            if lam.imag < 0:
                v = np.conj(v)
            v = v / np.linalg.norm(v)
            for part in (np.real(v), np.imag(v)):
                nrm = np.linalg.norm(part)
                if nrm < 1e-14:
                    continue
                part = part / nrm
                if part[int(np.argmax(np.abs(part)))] < 0:
                    part = -part
                cols.append(part)
    return cols


def _adjoint_unstable_basis(A, sigma):
    """Basis of the span of adjoint eigenvectors for eigenvalues Re < sigma."""
    n = A.shape[0]
    w, V = np.linalg.eig(A.T)
    sel = [i for i in range(n) if w[i].real < sigma]
    m = len(sel)
    if m == 0:
        return np.zeros((n, 0)), 0
    cols = _realify_ordered(w, V, sel)
    D = np.column_stack(cols) if cols else np.zeros((n, 0))
    if D.shape[1] != m or np.linalg.matrix_rank(D, tol=1e-10) < m:
        # defective cluster: fall back to the ordered real Schur invariant basis
        T, Z, sdim = sla.schur(A.T, output="real", sort=lambda re, im: re < sigma)
        D = Z[:, :sdim]
        m = sdim
    return D, m


def _orthonormalize(D):
    """Modified Gram-Schmidt; prefix spans are preserved."""
    n, m = D.shape
    Q = np.zeros((n, m))
    for j in range(m):
        v = D[:, j].copy()
        for i in range(j):
            v -= (Q[:, i] @ v) * Q[:, i]
        for i in range(j):  # second pass for numerical orthogonality
            v -= (Q[:, i] @ v) * Q[:, i]
        nrm = np.linalg.norm(v)
        if nrm < 1e-12:
            raise np.linalg.LinAlgError("rank-deficient basis in Gram-Schmidt")
        Q[:, j] = v / nrm
    return Q


def _complement_basis(Q):
    """Orthonormal basis of the orthogonal complement of the columns of Q."""
    n, m = Q.shape
    if m == 0:
        return np.eye(n)
    if m == n:
        return np.zeros((n, 0))
    U = np.linalg.svd(Q, full_matrices=True)[0]
    return U[:, m:]


def _spectral_projector_schur(A, sigma):
    """Riesz projector onto modes with Re < sigma, via sorted real Schur form."""
    n = A.shape[0]
    T, Z, sdim = sla.schur(A, output="real", sort=lambda re, im: re < sigma)
    if sdim == 0:
        return np.zeros((n, n))
    if sdim == n:
        return np.eye(n)
    T11, T12, T22 = T[:sdim, :sdim], T[:sdim, sdim:], T[sdim:, sdim:]
    Y = sla.solve_sylvester(T11, -T22, T12)
    P_T = np.zeros((n, n))
    P_T[:sdim, :sdim] = np.eye(sdim)
    P_T[:sdim, sdim:] = Y
    return Z @ P_T @ Z.T


def eig_split(model, sigma, gap_tol=1e-6) -> Dichotomy:
    """Split R^n at level sigma into X_sigma^perp (unstable) and X_sigma.

    Raises GapViolation when an eigenvalue real part lies within gap_tol of
    sigma.
    """
    A = _as_matrix(model)
    ev = np.linalg.eigvals(A)
    gap = float(np.min(np.abs(ev.real - sigma))) if ev.size else np.inf
    if gap < gap_tol:
        raise GapViolation(f"eigenvalue real part within {gap_tol} of sigma={sigma} (gap={gap:.3e})")
    D, m = _adjoint_unstable_basis(A, sigma)
    Eb = _orthonormalize(D) if m else np.zeros((A.shape[0], 0))
    P_sigma = np.eye(A.shape[0]) - Eb @ Eb.T
    P_riesz = _spectral_projector_schur(A, sigma)
    stable = _complement_basis(Eb)
    return Dichotomy(sigma=float(sigma), m=m, D=D, Eb=Eb, P_sigma=P_sigma,
                     P_riesz=P_riesz, gap=gap, stable_basis=stable)


def _rectangle_nodes(re_lo, re_hi, im_lo, im_hi, n_nodes):
    """Counterclockwise nodes/weights on a closed rectangle, Gauss-Legendre
    per edge.  (A single trapezoid rule around the cornered contour is only
    O(h^2); per-edge Gauss nodes keep the exponential convergence needed at
    a few hundred nodes.)"""
    corners = [complex(re_hi, im_lo), complex(re_hi, im_hi),
               complex(re_lo, im_hi), complex(re_lo, im_lo)]
    lengths = [abs(corners[(i + 1) % 4] - corners[i]) for i in range(4)]
    per = sum(lengths)
    nodes, weights = [], []
    for i in range(4):
        a, bpt = corners[i], corners[(i + 1) % 4]
        ne = max(2, int(round(n_nodes * lengths[i] / per)))
        t, w = np.polynomial.legendre.leggauss(ne)
        mid, half = 0.5 * (a + bpt), 0.5 * (bpt - a)
        nodes.extend(mid + half * t)
        weights.extend(half * w)
    return np.array(nodes), np.array(weights)


def _contour_integral(A, nodes, weights, factor=None, dist_tol=1e-8):
    """(2 pi i)^{-1} * counterclockwise sum of weights * factor * (lambda I - A)^{-1}.

    Equals the same integral of (A - lambda I)^{-1} with the opposite
    orientation (the contour "enclosing from the left").
    """
    ev = np.linalg.eigvals(A)
    mind = min(np.min(np.abs(ev - z)) for z in nodes)
    if mind < dist_tol:
        raise ContourTouchesSpectrum(f"contour node within {dist_tol} of the spectrum")
    n = A.shape[0]
    acc = np.zeros((n, n), dtype=complex)
    I = np.eye(n)
    for z, wz in zip(nodes, weights):
        R = np.linalg.solve(z * I - A, I)
        f = 1.0 if factor is None else factor(z)
        acc += wz * f * R
    acc /= 2j * np.pi
    imag_res = float(np.linalg.norm(acc.imag))
    if imag_res > 1e-10 * max(1.0, np.linalg.norm(acc.real)):
        raise ContourTouchesSpectrum(
            f"imaginary residue {imag_res:.2e} after contour quadrature; refine the contour")
    return acc.real


def riesz_projector(model, sigma, n_nodes=256, gap_tol=1e-6) -> np.ndarray:
    """Riesz projector onto modes with Re < sigma by rectangle quadrature.

    The closed rectangle has its right edge on {Re = sigma}; margins are
    half the spectral gap.  With no enclosed eigenvalue the result is the
    zero matrix.
    """
    if n_nodes < 16:
        raise ValueError("n_nodes must be >= 16")
    A = _as_matrix(model)
    ev = np.linalg.eigvals(A)
    gap = float(np.min(np.abs(ev.real - sigma)))
    if gap < gap_tol:
        raise GapViolation(f"eigenvalue real part within {gap_tol} of sigma={sigma}")
    enclosed = ev[ev.real < sigma]
    if enclosed.size:
        re_lo = float(enclosed.real.min()) - 0.5 * gap
        H = float(np.max(np.abs(enclosed.imag))) + 0.5 * gap
    else:
        re_lo, H = sigma - 1.0, 1.0
    nodes, weights = _rectangle_nodes(re_lo, sigma, -H, H, n_nodes)
    return _contour_integral(A, nodes, weights)


def semigroup(model, tau, method="scaling_squaring", n_nodes=512) -> np.ndarray:
    """S(tau) = e^{-A tau}, by scaling-and-squaring or by contour quadrature.

    The contour method integrates (2 pi i)^{-1} * resolvent * e^{-lambda tau}
    over a rectangle enclosing the whole spectrum.
    """
    A = _as_matrix(model)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    if method == "scaling_squaring":
        return sla.expm(-tau * A)
    if method != "contour":
        raise ValueError(f"unknown method {method!r}")
    ev = np.linalg.eigvals(A)
    spread = max(1.0, float(ev.real.max() - ev.real.min()))
    margin = max(0.5, 0.05 * spread)
    re_lo = float(ev.real.min()) - margin
    re_hi = float(ev.real.max()) + margin
    H = float(np.max(np.abs(ev.imag))) + margin
    nodes, weights = _rectangle_nodes(re_lo, re_hi, -H, H, n_nodes)
    return _contour_integral(A, nodes, weights, factor=lambda z: np.exp(-z * tau))


def restricted_norm(S, basis) -> float:
    """Operator 2-norm of S restricted to the span of an orthonormal basis."""
    if basis.shape[1] == 0:
        return 0.0
    return _spectral_norm(basis.T @ S @ basis)


def contraction_certificate(dich, model, tau):
    """(gamma0, ok): norm of S(tau) restricted to X_sigma, contraction flag."""
    A = _as_matrix(model)
    S = sla.expm(-tau * A)
    gamma0 = restricted_norm(S, dich.stable_basis)
    return gamma0, bool(gamma0 < 1.0)


def contour_bound_integrals(model, sigma, tau, theta=1.0, psi=3 * np.pi / 4,
                            tail_tol=1e-16):
    """Resolvent-norm integrals (I1, I2) along the shifted sector contour.

    I1 runs over the vertical segment {Re lambda = -sigma,
    |Im lambda| <= (sigma+theta)*tan(pi-psi)}; I2 over the two rays
    lambda = gamma*e^{+-i psi} + theta.  Both weight the resolvent norm of
    (lambda I + A) by |e^{lambda tau}|; the rays are truncated where the
    exponential factor alone falls below tail_tol.
    """
    if not (np.pi / 2 < psi < np.pi):
        raise InvalidContour("psi must lie in (pi/2, pi)")
    if theta <= 0:
        raise InvalidContour("theta must be positive")
    A = _as_matrix(model)
    n = A.shape[0]
    I = np.eye(n)

    def res_norm(lam):
        return _spectral_norm(np.linalg.solve(lam * I + A, I))

    X = (sigma + theta) * np.tan(np.pi - psi)

    def f1(x):
        return res_norm(complex(-sigma, x)) * np.exp(-sigma * tau)

    I1, _ = quad(f1, -X, X, limit=200)

    g0 = (sigma + theta) / abs(np.cos(psi))
    # |e^{lambda tau}| = exp((gamma*cos psi + theta) tau) along the ray
    g_max = g0 + (abs(np.log(tail_tol)) / tau + theta) / abs(np.cos(psi))

    def f2(g):
        lam = g * np.exp(1j * psi) + theta
        return res_norm(lam) * np.exp((g * np.cos(psi) + theta) * tau)

    I2_half, _ = quad(f2, g0, g_max, limit=200)
    # real A: the conjugate ray contributes the same amount
    return float(I1), float(2.0 * I2_half)


@dataclass(frozen=True)
class SigmaLadder:
    """Increasing levels sigma < sigma_1 < ... < sigma_K with nested bases.

    E_all holds the ordered orthonormal ladder e_1..e_{n_K}; its first m
    columns span X_sigma^perp and columns m..n_k span the middle block
    between sigma and sigma_k.  completion is a full orthogonal completion
    of E_all, so columns n_k.. span X_{sigma_k}.
    """

    sigma: float
    sigma_list: tuple
    n_list: tuple
    m: int
    E_all: np.ndarray
    completion: np.ndarray
    gaps: tuple

    @property
    def K(self) -> int:
        return len(self.sigma_list)

    def mid_basis(self, k) -> np.ndarray:
        """Orthonormal basis of X_{sigma sigma_k} (levels are 1-based)."""
        return self.E_all[:, self.m:self.n_list[k - 1]]

    def tail_basis(self, k) -> np.ndarray:
        """Orthonormal basis of X_{sigma_k}."""
        return self.completion[:, self.n_list[k - 1]:]

    def head_basis(self, k) -> np.ndarray:
        """Orthonormal basis of X_{sigma_k}^perp = X_sigma^perp + X_{sigma sigma_k}."""
        return self.E_all[:, :self.n_list[k - 1]]

    def to_json_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "sigma_list": list(self.sigma_list),
            "n_list": [int(v) for v in self.n_list],
            "m": self.m,
            "gaps": list(self.gaps),
        }


def sigma_ladder(model, sigma, K, gap_tol=1e-6, grid_points=1024) -> SigmaLadder:
    """Choose sigma_k in Delta_k = [e^{2k/d}, e^{2(k+1)/d}] and build bases.

    Each sigma_k maximizes the distance to the spectrum over a uniform grid
    on its segment (ties resolved toward the smaller value).  Levels above
    the whole spectrum are allowed and produce empty tails.

    Raises EmptyGap when every grid point of some segment is within gap_tol
    of the spectrum.
    """
    A = _as_matrix(model)
    d = getattr(model, "d", 2)
    ev_re = np.linalg.eigvals(A).real
    sigma_list, n_list, gaps = [], [], []
    for k in range(1, K + 1):
        lo, hi = np.exp(2.0 * k / d), np.exp(2.0 * (k + 1) / d)
        grid = np.linspace(lo, hi, grid_points)
        dist = np.min(np.abs(grid[:, None] - ev_re[None, :]), axis=1)
        best = int(np.argmax(dist))  # argmax returns the first (smallest) maximizer
        if dist[best] < gap_tol:
            raise EmptyGap(f"no admissible level in segment {k}: max distance {dist[best]:.2e}")
        sk = float(grid[best])
        if sigma_list and sk <= sigma_list[-1]:
            raise EmptyGap(f"levels not increasing at segment {k}")
        sigma_list.append(sk)
        n_list.append(int(np.sum(ev_re < sk)))
        gaps.append(float(dist[best]))
    if sigma_list[0] <= sigma:
        raise ValueError("sigma must lie below the first ladder segment")
    D_all, n_K = _adjoint_unstable_basis(A, sigma_list[-1])
    assert n_K == n_list[-1]
    m = int(np.sum(ev_re < sigma))
    E_all = _orthonormalize(D_all) if n_K else np.zeros((A.shape[0], 0))
    completion = np.hstack([E_all, _complement_basis(E_all)])
    return SigmaLadder(sigma=float(sigma), sigma_list=tuple(sigma_list),
                       n_list=tuple(n_list), m=m, E_all=E_all,
                       completion=completion, gaps=tuple(gaps))


def tail_contraction(ladder, model, tau) -> np.ndarray:
    """gamma_k = norm of S(tau) restricted to X_{sigma_k}, per ladder level."""
    A = _as_matrix(model)
    S = sla.expm(-tau * A)
    return np.array([restricted_norm(S, ladder.tail_basis(k))
                     for k in range(1, ladder.K + 1)])
