"""Truncated-Gaussian law: sampling, ball mass, ellipsoid, projected density."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

import kickstab.kicks as kk
from kickstab.errors import DegenerateCovariance, RejectionCap
from kickstab.kicks import (
    ball_mass,
    diag_correlation,
    make_kick_law,
    qnu_density,
    sample_kick,
    support_ellipsoid_membership,
)


def test_law_validation():
    with pytest.raises(ValueError):
        make_kick_law(np.array([[1.0, 0.5], [0.0, 1.0]]), 0.1, seed=0)  # not symmetric
    with pytest.raises(ValueError):
        make_kick_law(np.diag([1.0, -0.1]), 0.1, seed=0)  # not positive definite


def test_samples_inside_ball():
    law = make_kick_law(diag_correlation(6, scale=4e-4), 0.02, seed=1, norm_samples=0)
    rng = law.stream(0)
    norms = [np.linalg.norm(sample_kick(law, rng)) for _ in range(3000)]
    assert max(norms) <= 0.02


def test_sample_determinism():
    law1 = make_kick_law(diag_correlation(4, scale=1e-2), 0.2, seed=5, norm_samples=0)
    law2 = make_kick_law(diag_correlation(4, scale=1e-2), 0.2, seed=5, norm_samples=0)
    a = [sample_kick(law1, law1.stream(3)) for _ in range(50)]
    b = [sample_kick(law2, law2.stream(3)) for _ in range(50)]
    assert np.array_equal(np.array(a), np.array(b))


def test_degenerate_radius_returns_zero():
    law = make_kick_law(np.eye(3), 0.0, seed=0, norm_samples=0)
    assert np.array_equal(sample_kick(law, law.stream(0)), np.zeros(3))


def test_near_untruncated_covariance_matches():
    # eps >= 10 sqrt(trace K): truncation negligible, empirical cov ~ K
    n = 5
    K = diag_correlation(n, scale=1.0)
    eps = 10 * np.sqrt(np.trace(K))
    law = make_kick_law(K, eps, seed=2, norm_samples=0)
    rng = law.stream(1)
    N = 200_000
    z = rng.standard_normal((N, n)) @ law.chol_K.T
    assert np.all(np.einsum("ij,ij->i", z, z) <= eps ** 2)  # nothing rejected
    emp = z.T @ z / N
    # MC error of each entry ~ sqrt((K_ii K_jj + K_ij^2)/N)
    se = np.sqrt((np.outer(np.diag(K), np.diag(K)) + K ** 2) / N)
    assert np.all(np.abs(emp - K) <= 3.5 * se)


def test_rejection_cap_triggers():
    law = make_kick_law(np.eye(50), 1e-6, seed=3, norm_samples=0)
    with pytest.raises(RejectionCap):
        sample_kick(law, law.stream(0))


def test_sign_symmetry():
    law = make_kick_law(diag_correlation(4, scale=1e-2), 0.15, seed=4, norm_samples=0)
    rng = law.stream(2)
    s = np.array([sample_kick(law, rng) for _ in range(50_000)])
    se = s.std(axis=0, ddof=1) / np.sqrt(len(s))
    assert np.all(np.abs(s.mean(axis=0)) <= 3.2 * se)


def test_ball_mass_against_chi2():
    assert abs(ball_mass([1.0], 1.5) - stats.chi2.cdf(1.5 ** 2, 1)) < 1e-12
    assert abs(ball_mass([1.0, 1.0], 1.0) - stats.chi2.cdf(1.0, 2)) < 1e-7
    assert abs(ball_mass([1.0, 1.0, 1.0], 1.2) - stats.chi2.cdf(1.44, 3)) < 1e-7


def test_ball_mass_against_mc():
    rng = np.random.default_rng(0)
    lam = np.array([0.9, 0.3, 0.05])
    q = rng.standard_normal((400_000, 3)) ** 2 @ lam
    emp = float(np.mean(q <= 0.8 ** 2))
    assert abs(ball_mass(lam, 0.8) - emp) < 4.0 * np.sqrt(emp * (1 - emp) / 400_000)


def test_norm_const_estimate_consistent():
    law = make_kick_law(diag_correlation(3, scale=0.01), 0.15, seed=6, norm_samples=100_000)
    est, se = law.norm_const_est
    exact = ball_mass(np.diag(law.K), 0.15)
    assert abs(est - exact) < 4 * se


def test_membership_zero_map_is_ball():
    A = np.zeros((2, 2))
    assert support_ellipsoid_membership(A, 1.0, [0.6, 0.7])
    assert not support_ellipsoid_membership(A, 1.0, [0.8, 0.7])


def test_membership_scalar_boundary():
    # scalar map a: boundary at |x| = eps*sqrt(1+a^2)
    a = 2.0
    A = np.array([[a]])
    lim = np.sqrt(1 + a ** 2)
    assert support_ellipsoid_membership(A, 1.0, [lim * (1 - 1e-9)])
    assert not support_ellipsoid_membership(A, 1.0, [lim * (1 + 1e-9)])


def test_membership_of_projected_samples(ref_pi, ref_law, ref_dichotomy):
    # Pi phi always lands inside the pushforward ellipsoid of the kick ball
    dich = ref_dichotomy
    E_unstable = dich.Eb
    stable = dich.stable_basis
    A_op = stable.T @ ref_pi.Pi_mat @ E_unstable  # X_sigma^perp -> X_sigma, orthonormal coords
    rng = ref_law.stream(9)
    for _ in range(2000):
        phi = sample_kick(ref_law, rng)
        x = stable.T @ (ref_pi.Pi_mat @ phi)
        assert support_ellipsoid_membership(A_op, ref_law.eps_hat * (1 + 1e-12), x)


def test_pushforward_covariance(ref_pi, ref_law):
    rng = ref_law.stream(10)
    N = 100_000
    s = np.array([sample_kick(ref_law, rng) for _ in range(N)])
    pushed = s @ ref_pi.Pi_mat.T
    emp = pushed.T @ pushed / N
    truncated_cov = s.T @ s / N
    target = ref_pi.Pi_mat @ truncated_cov @ ref_pi.Pi_mat.T
    scale = np.sqrt(np.outer(np.diag(target), np.diag(target))) + 1e-12
    # pushforward through a fixed linear map commutes with empirical moments
    assert np.max(np.abs(emp - target) / scale) < 1e-12


def test_pushforward_identity_for_test_functions(ref_pi, ref_law):
    # mean of f(Pi phi) under the law equals the mean of f under the
    # pushforward sampler driven by the same stream
    fs = [lambda v: np.tanh(v[0]), lambda v: np.sin(v).sum(),
          lambda v: np.clip(np.linalg.norm(v), 0, 1), lambda v: v[2] ** 2,
          lambda v: float(np.max(np.abs(v)))]
    rng1 = ref_law.stream(11)
    vals1 = []
    for _ in range(2000):
        phi = sample_kick(ref_law, rng1)
        vals1.append([f(ref_pi.Pi_mat @ phi) for f in fs])
    rng2 = ref_law.stream(11)
    vals2 = []
    for _ in range(2000):
        pushed = ref_pi.Pi_mat @ sample_kick(ref_law, rng2)
        vals2.append([f(pushed) for f in fs])
    assert np.array_equal(np.array(vals1), np.array(vals2))


def test_qnu_standard_normal_at_origin():
    law = make_kick_law(np.eye(4), 1.0, seed=1, norm_samples=0)
    Q = np.eye(4)[:, :2]
    c = 1 / ball_mass([1.0, 1.0], 1.0)
    assert abs(qnu_density(Q, law, [0.0, 0.0]) - c / (2 * np.pi)) < 1e-7
    assert qnu_density(Q, law, [2.0, 0.0]) == 0.0  # outside the ball


def test_qnu_gaussian_factor_integrates_to_one():
    law = make_kick_law(np.diag([0.5, 0.2, 0.1, 0.05]), 0.8, seed=2, norm_samples=0)
    Q = np.eye(4)[:, :2]
    cov = Q.T @ law.K @ Q
    c_hat = 1 / ball_mass(np.diag(cov), law.eps_hat)
    # tensor quadrature of the untruncated gaussian factor over the plane
    nodes, weights = np.polynomial.legendre.leggauss(120)
    L = 6 * np.sqrt(np.max(np.diag(cov)))
    xs = L * nodes
    total = 0.0
    for i, x1 in enumerate(xs):
        for j, x2 in enumerate(xs):
            y = np.array([x1, x2])
            val = qnu_density(Q, law, y, c_hat=c_hat)
            if y @ y <= law.eps_hat ** 2 and val > 0:
                total += weights[i] * weights[j] * val / c_hat
            elif y @ y > law.eps_hat ** 2:
                # outside the ball the density is zero; add back the plain
                # gaussian factor to close the integral to 1
                g = np.exp(-0.5 * y @ np.linalg.solve(cov, y)) / (
                    2 * np.pi * np.sqrt(np.linalg.det(cov)))
                total += weights[i] * weights[j] * g
    assert abs(total * L * L - 1.0) < 1e-6


def test_qnu_truncated_mass_matches_c_hat():
    # integral of c_hat * chi * g over the ball is 1 within 2 MC ses of c_hat
    law = make_kick_law(np.diag([0.3, 0.15, 0.05, 0.4]), 0.7, seed=3, norm_samples=0)
    Q = np.eye(4)[:, :2]
    cov = Q.T @ law.K @ Q
    rng = law.stream(12)
    N = 150_000
    z = rng.standard_normal((N, 4)) @ law.chol_K.T @ Q
    p_hat = float(np.mean(np.einsum("ij,ij->i", z, z) <= law.eps_hat ** 2))
    se = np.sqrt(p_hat * (1 - p_hat) / N)
    c_hat = 1 / p_hat
    # polar quadrature of g over the ball
    tq, wq = np.polynomial.legendre.leggauss(200)
    r = 0.5 * law.eps_hat * (tq + 1)
    wr = 0.5 * law.eps_hat * wq
    phis = 2 * np.pi * np.arange(512) / 512
    pts = np.stack([np.outer(r, np.cos(phis)).ravel(), np.outer(r, np.sin(phis)).ravel()], axis=1)
    g = np.exp(-0.5 * np.einsum("ij,ij->i", pts @ np.linalg.inv(cov), pts)) / (
        2 * np.pi * np.sqrt(np.linalg.det(cov)))
    mass = float(np.einsum("i,ij->", wr * r, g.reshape(len(r), len(phis))) * (2 * np.pi / 512))
    assert abs(c_hat * mass - 1.0) <= 2 * se * c_hat


def test_qnu_degenerate_covariance():
    K = np.diag([1.0, 1e-16, 1.0])
    K[0, 0] = 1.0
    law = make_kick_law(K + 1e-15 * np.eye(3), 0.5, seed=4, norm_samples=0)
    Q = np.eye(3)[:, :2]
    with pytest.raises(DegenerateCovariance):
        qnu_density(Q, law, [0.0, 0.0])
