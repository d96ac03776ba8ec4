"""The controlled kicked process w^{k+1} = S w^k + Pi phi^{k+1}.

Also provides the uncontrolled blow-up demonstration (no projection, full
space) and the per-trajectory envelope certificate
||w^k|| <= gamma0^k ||w0|| + ||Pi|| eps_hat / (1 - gamma0), which is provable
for the measured restricted norm gamma0 and therefore admits zero
violations beyond float roundoff.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .artifacts import hash_arrays
from .errors import NotUnstable
from .kicks import sample_kick

__all__ = [
    "ChainConfig",
    "Trajectory",
    "step",
    "run_chain",
    "run_ensemble",
    "envelope_check",
    "uncontrolled_demo",
    "burn_in_floor",
]


@dataclass(frozen=True)
class ChainConfig:
    tau: float
    n_steps: int
    w0: np.ndarray
    seed: int
    record_kicks: bool = False


@dataclass
class Trajectory:
    states: np.ndarray          # (n_steps+1, n)
    norms: np.ndarray           # (n_steps+1,)
    kicks: np.ndarray | None
    manifest: dict
    r0: float = np.inf
    first_entry: int | None = None


def step(S_mat, pi, law, w, rng) -> np.ndarray:
    """One transition: S w + Pi phi with a freshly sampled kick."""
    phi = sample_kick(law, rng)
    return S_mat @ w + pi.Pi_mat @ phi


def run_chain(config, S_mat, pi, law, gamma0=None) -> Trajectory:
    """Run one controlled trajectory from config.w0 (must lie in X_sigma).

    Reports the stage threshold r0 = ||Pi|| eps_hat / (1 - gamma0) and the
    first entry time into the ball of that radius.
    """
    w0 = np.asarray(config.w0, dtype=float)
    D = pi.dichotomy.D
    if D.size and np.linalg.norm(D.T @ w0) >= 1e-10 * max(1.0, np.linalg.norm(w0)):
        raise ValueError("w0 must lie in X_sigma (adjoint residual too large)")
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    n = len(w0)
    states = np.empty((config.n_steps + 1, n))
    states[0] = w0
    kicks = np.empty((config.n_steps, n)) if config.record_kicks else None
    w = w0
    for k in range(config.n_steps):
        phi = sample_kick(law, rng)
        if kicks is not None:
            kicks[k] = phi
        w = S_mat @ w + pi.Pi_mat @ phi
        states[k + 1] = w
    norms = np.linalg.norm(states, axis=1)
    r0 = np.inf
    first_entry = None
    if gamma0 is not None and gamma0 < 1.0:
        r0 = pi.norm_Pi * law.eps_hat / (1.0 - gamma0)
        inside = np.nonzero(norms <= r0)[0]
        first_entry = int(inside[0]) if inside.size else None
    manifest = {
        "S_hash": hash_arrays(S_mat),
        "pi_hash": hash_arrays(pi.Pi_mat),
        "law_hash": hash_arrays(law.K, law.eps_hat),
        "seed": config.seed,
        "tau": config.tau,
        "n_steps": config.n_steps,
    }
    return Trajectory(states=states, norms=norms, kicks=kicks,
                      manifest=manifest, r0=r0, first_entry=first_entry)


def _ensemble_block(S_mat, pi, law, w0, n_steps, seeds):
    n = len(w0)
    out = np.empty((len(seeds), n_steps + 1, n))
    for c, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        w = w0.copy()
        out[c, 0] = w
        for k in range(n_steps):
            phi = sample_kick(law, rng)
            w = S_mat @ w + pi.Pi_mat @ phi
            out[c, k + 1] = w
    return out


def run_ensemble(S_mat, pi, law, w0, n_chains, n_steps, seed, threads=1) -> np.ndarray:
    """States of n_chains independent trajectories, shape (chains, steps+1, n).

    Chain c draws from a private stream spawned as child c of ``seed``; the
    result is assembled in chain order, independent of thread scheduling.
    """
    w0 = np.asarray(w0, dtype=float)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seeds = ss.spawn(n_chains)
    threads = max(1, int(threads))
    if threads == 1:
        return _ensemble_block(S_mat, pi, law, w0, n_steps, seeds)
    blocks = np.array_split(np.arange(n_chains), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futs = [pool.submit(_ensemble_block, S_mat, pi, law, w0, n_steps,
                            [seeds[i] for i in idx]) for idx in blocks if len(idx)]
        parts = [f.result() for f in futs]
    return np.concatenate(parts, axis=0)


def envelope_check(norms, w0_norm, gamma0, norm_Pi, eps_hat, tol=1e-9) -> dict:
    """Check ||w^k|| <= gamma0^k ||w0|| + ||Pi|| eps_hat/(1-gamma0) per step.

    ``norms`` may be a single trajectory (steps+1,) or an ensemble
    (chains, steps+1).  Violations are reported, never raised.
    """
    norms = np.atleast_2d(np.asarray(norms, dtype=float))
    report = {"certificate_valid": bool(gamma0 < 1.0), "gamma0": float(gamma0)}
    if not report["certificate_valid"]:
        report.update({"n_violations": None, "max_residual": None,
                       "note": "gamma0 >= 1: envelope not applicable"})
        return report
    k = np.arange(norms.shape[1])
    bound = gamma0 ** k * w0_norm + norm_Pi * eps_hat / (1.0 - gamma0)
    resid = norms - bound[None, :]
    report["max_residual"] = float(resid.max())
    report["n_violations"] = int(np.sum(resid > tol))
    report["bound_tail"] = float(norm_Pi * eps_hat / (1.0 - gamma0))
    return report


def fit_log_growth(norms, tail_frac=0.5) -> float:
    """Least-squares slope of log ||w^k|| over the trailing fraction of steps."""
    norms = np.asarray(norms, dtype=float)
    k0 = int(len(norms) * (1 - tail_frac))
    ks = np.arange(k0, len(norms))
    vals = np.log(np.maximum(norms[k0:], 1e-300))
    slope = np.polyfit(ks, vals, 1)[0]
    return float(slope)


def uncontrolled_demo(model, law, w0, n_steps, seed, tau):
    """Run the raw process w~^{k+1} = S w~^k + phi^{k+1} on the full space.

    Requires at least one genuinely unstable eigenvalue (Re < 0); returns
    the trajectory and the fitted per-step exponential growth rate.
    """
    A = np.asarray(getattr(model, "A", model), dtype=float)
    ev = np.linalg.eigvals(A)
    if ev.real.min() >= 0:
        raise NotUnstable("no eigenvalue with negative real part")
    S = sla.expm(-tau * A)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    w = np.asarray(w0, dtype=float).copy()
    states = np.empty((n_steps + 1, len(w)))
    states[0] = w
    for k in range(n_steps):
        w = S @ w + sample_kick(law, rng)
        states[k + 1] = w
    norms = np.linalg.norm(states, axis=1)
    manifest = {"S_hash": hash_arrays(S), "seed": seed, "tau": tau,
                "law_hash": hash_arrays(law.K, law.eps_hat)}
    traj = Trajectory(states=states, norms=norms, kicks=None, manifest=manifest)
    return traj, fit_log_growth(norms)


def burn_in_floor(eps_hat, w0_norm, gamma0) -> int:
    """Smallest burn-in with gamma0^k ||w0|| below the kick scale eps_hat."""
    if w0_norm <= eps_hat or w0_norm == 0.0 or not (0 < gamma0 < 1):
        return 0
    return int(np.ceil(np.log(eps_hat / w0_norm) / np.log(gamma0)))
