"""Configuration-driven experiment pipeline.

Stages map onto the library modules: synth (operator), dichotomy
(splitting + ladder), certify (contraction constants), simulate
(controlled vs uncontrolled ensembles + envelope), density (pushforward
density diagnostics), mixing (ergodicity observations), report (aggregate
verdicts).  Every stage writes checksummed artifacts into the output
directory; re-running a config reproduces identical checksums.

Exit codes: 0 success, 1 a verification check failed, 2 usage error,
3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .artifacts import canonical_json, emit_series, file_checksum, hash_arrays, write_json
from .chain import ChainConfig, burn_in_floor, envelope_check, run_chain, run_ensemble, uncontrolled_demo
from .config import ExperimentConfig, load_config, save_config
from .density import (
    QuadratureSpec,
    boundary_exponent_probe,
    build_pi_decomposition,
    density_batch,
    density_P,
    mc_density_oracle,
    projected_law,
)
from .ergodicity import (
    alpha_from_projection,
    condition_check,
    make_observables,
    mixing_decay,
    projected_kick_covariance,
    slln_average,
    stable_state,
    stationary_stats,
)
from .errors import KickstabError, MissingPrerequisite
from .feedback import build_pi, make_control_geometry
from .kicks import make_kick_law
from .model_builder import build_oseen, synth_stokes_spectrum
from .spectral import (
    contour_bound_integrals,
    contraction_certificate,
    eig_split,
    riesz_projector,
    semigroup,
    sigma_ladder,
    tail_contraction,
)

STAGES = ("synth", "dichotomy", "certify", "simulate", "density", "mixing", "report")

_PREREQS = {
    "synth": (),
    "dichotomy": ("model.json",),
    "certify": ("dichotomy.json",),
    "simulate": ("certificate.json",),
    "density": ("dichotomy.json",),
    "mixing": ("certificate.json",),
    "report": ("model.json", "dichotomy.json", "certificate.json",
               "envelope.json", "density.json", "mixing.json"),
}


class Pipeline:
    """Holds the config, derived components (built lazily), and artifact dir."""

    def __init__(self, cfg: ExperimentConfig, out_dir, threads=None, seed_override=None):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads or os.cpu_count() or 1
        if seed_override is not None:
            cfg.run.seed = seed_override
            cfg.mixing.seed = seed_override + 1
        os.makedirs(out_dir, exist_ok=True)
        self._cache = {}
        self._manifest_path = os.path.join(out_dir, "manifest.json")

    # -- component construction (deterministic, cheap; rebuilt per stage) --

    def model(self):
        if "model" not in self._cache:
            m = self.cfg.model
            spec = synth_stokes_spectrum(m.n, m.d, m.beta0, m.remainder_scale, m.spectrum_seed)
            self._cache["model"] = build_oseen(
                spec, m.b, m.n_unstable, m.build_sigma, m.obs_idx, m.seed,
                gap_tol=m.build_gap_tol)
        return self._cache["model"]

    def dichotomy(self):
        if "dich" not in self._cache:
            self._cache["dich"] = eig_split(self.model(), self.cfg.model.sigma)
        return self._cache["dich"]

    def ladder(self):
        if "ladder" not in self._cache:
            self._cache["ladder"] = sigma_ladder(
                self.model(), self.cfg.model.sigma, self.cfg.run.ladder_levels)
        return self._cache["ladder"]

    def controller(self):
        if "pi" not in self._cache:
            geo = make_control_geometry(self.dichotomy(), self.cfg.model.obs_idx,
                                        seed=self.cfg.control.seed)
            self._cache["pi"] = build_pi(self.dichotomy(), geo)
        return self._cache["pi"]

    def law(self):
        if "law" not in self._cache:
            K = self.cfg.kick_matrix()
            self._cache["law"] = make_kick_law(K, self.cfg.kick.eps_hat, self.cfg.kick.seed)
        return self._cache["law"]

    # -- artifact helpers --

    def path(self, name):
        return os.path.join(self.out, name)

    def require(self, stage):
        for name in _PREREQS[stage]:
            if not os.path.exists(self.path(name)):
                raise MissingPrerequisite(
                    f"stage '{stage}' requires artifact {name}; run the earlier stages first")

    def _load_manifest(self):
        import json
        if os.path.exists(self._manifest_path):
            with open(self._manifest_path, "r", encoding="utf-8") as fh:
                return json.load(fh)
        return {"config_hash": self.config_hash(), "version": __version__,
                "stages": {}, "timings": {}}

    def config_hash(self):
        return hash_arrays(canonical_json(self.cfg.to_dict()))

    def record(self, stage, files, elapsed):
        man = self._load_manifest()
        man["config_hash"] = self.config_hash()
        man["version"] = __version__
        man["threads"] = self.threads
        man["stages"][stage] = {"artifacts": {os.path.basename(f): file_checksum(f)
                                              for f in files}}
        man["timings"][stage] = elapsed
        write_json(self._manifest_path, man)

    # -- stages --

    def stage_synth(self):
        model = self.model()
        p = self.path("model.json")
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(model.to_json())
            fh.write("\n")
        return [p], 0

    def stage_dichotomy(self):
        self.require("dichotomy")
        dich = self.dichotomy()
        ladder = self.ladder()
        d1 = self.path("dichotomy.json")
        doc = dich.to_json_dict()
        doc["eigenvalues"] = [list(rec) for rec in self.model().spectrum_cache]
        write_json(d1, doc)
        d2 = self.path("ladder.json")
        write_json(d2, ladder.to_json_dict())
        return [d1, d2], 0

    def stage_certify(self):
        self.require("certify")
        model, dich = self.model(), self.dichotomy()
        tau = self.cfg.run.tau
        gamma0, ok = contraction_certificate(dich, model, tau)
        grid = {}
        for t in (1.0, 2.0, 4.0, 8.0):
            g, _ = contraction_certificate(dich, model, t)
            grid[str(t)] = g
        gammas = tail_contraction(self.ladder(), model, tau)
        P_quad = riesz_projector(model, self.cfg.model.sigma)
        riesz_resid = float(np.linalg.norm(P_quad @ P_quad - P_quad))
        I1, I2 = contour_bound_integrals(model, self.cfg.model.sigma, tau)
        doc = {
            "tau": tau,
            "gamma0": gamma0,
            "contraction_ok": ok,
            "gamma0_grid": grid,
            "tail_gammas": gammas.tolist(),
            "riesz_idempotency_residual": riesz_resid,
            "contour_I1": I1,
            "contour_I2": I2,
        }
        p = self.path("certificate.json")
        write_json(p, doc)
        return [p], 0 if ok else 1

    def stage_simulate(self):
        self.require("simulate")
        cfg = self.cfg
        model, dich, pi, law = self.model(), self.dichotomy(), self.controller(), self.law()
        tau = cfg.run.tau
        S = semigroup(model, tau)
        gamma0, _ = contraction_certificate(dich, model, tau)
        w0 = stable_state(dich, cfg.run.w0_scale, cfg.run.w0_seed)

        traj = run_chain(ChainConfig(tau=tau, n_steps=cfg.run.n_steps, w0=w0,
                                     seed=cfg.run.seed), S, pi, law, gamma0)
        pt = self.path("trajectory.csv")
        cols = ["step", "norm"] + [f"w{i}" for i in range(model.n)]
        rows = [[k, traj.norms[k]] + list(traj.states[k]) for k in range(len(traj.norms))]
        emit_series(pt, cols, rows)

        states = run_ensemble(S, pi, law, w0, cfg.run.n_chains, cfg.run.n_steps,
                              cfg.run.seed, threads=self.threads)
        norms = np.linalg.norm(states, axis=2)
        rep = envelope_check(norms, float(np.linalg.norm(w0)), gamma0, pi.norm_Pi, law.eps_hat)
        rep["n_chains"] = cfg.run.n_chains
        bound = gamma0 ** np.arange(norms.shape[1]) * np.linalg.norm(w0) \
            + pi.norm_Pi * law.eps_hat / (1 - gamma0)
        pe = self.path("ensemble_norms.csv")
        emit_series(pe, ["step", "mean_norm", "max_norm", "bound"],
                    [[k, norms[:, k].mean(), norms[:, k].max(), bound[k]]
                     for k in range(norms.shape[1])])
        pj = self.path("envelope.json")
        write_json(pj, rep)

        pc = self.path("controller.json")
        write_json(pc, {"norm_Pi": pi.norm_Pi, "cond_M": pi.geometry.cond_M,
                        "obs_idx": list(pi.geometry.obs_idx),
                        "Pi_hash": hash_arrays(pi.Pi_mat)})

        pb = self.path("blowup.json")
        if np.linalg.eigvals(model.A).real.min() < 0:
            traj_u, rate = uncontrolled_demo(model, law, w0, cfg.run.uncontrolled_steps,
                                             cfg.run.seed, tau)
            ctrl = run_chain(ChainConfig(tau=tau, n_steps=cfg.run.uncontrolled_steps,
                                         w0=w0, seed=cfg.run.seed), S, pi, law, gamma0)
            write_json(pb, {"applicable": True,
                            "growth_rate_per_step": rate,
                            "expected_rate": float(-tau * np.linalg.eigvals(model.A).real.min()),
                            "ratio_uncontrolled_controlled": float(traj_u.norms[-1] / ctrl.norms[-1])})
        else:
            write_json(pb, {"applicable": False,
                            "note": "no eigenvalue with negative real part"})
        fail = 0 if (rep["n_violations"] == 0 and rep["certificate_valid"]) else 1
        return [pt, pe, pj, pc, pb], fail

    def stage_density(self):
        self.require("density")
        cfg = self.cfg
        dich, ladder = self.dichotomy(), self.ladder()
        if cfg.density.alpha_source == "projection":
            pi = self.controller()
            alpha = alpha_from_projection(pi, ladder, cfg.density.level)
            K_proj = projected_kick_covariance(self.cfg.kick_matrix(), ladder, cfg.density.level)
        else:
            alpha = np.array(cfg.density.alpha, dtype=float)
            if cfg.density.alpha_shape:
                alpha = alpha.reshape(cfg.density.alpha_shape)
            K_proj = np.eye(alpha.shape[0] + alpha.shape[1])
        dec = build_pi_decomposition(alpha)
        law = projected_law(K_proj, cfg.kick.eps_hat)
        quad = QuadratureSpec(radial=cfg.density.radial, angular=cfg.density.angular,
                              mc_fallback=cfg.density.mc_fallback)

        files = []
        doc = {"m": dec.m, "nm": dec.nm, "s": dec.s, "J": dec.J,
               "mu": dec.mu.tolist()}
        if dec.nm <= 2 and dec.m <= 3:
            Minv = np.linalg.inv(dec.support_quadform())
            half = law.eps * np.sqrt(np.diag(Minv))
            g = cfg.density.grid_points
            if dec.nm == 1:
                xs = (np.linspace(-half[0], half[0], g, endpoint=False) + half[0] / g)[:, None]
                vol = 2 * half[0] / g
            else:
                axes = [np.linspace(-h, h, g, endpoint=False) + h / g for h in half]
                mesh = np.meshgrid(*axes, indexing="ij")
                xs = np.stack([mm.ravel() for mm in mesh], axis=1)
                vol = float(np.prod(2 * half / g))
            P = density_batch(dec, law, xs, quad)
            pg = self.path("density_grid.csv")
            emit_series(pg, [f"x{i+1}" for i in range(dec.nm)] + ["P"],
                        [list(xs[i]) + [P[i]] for i in range(len(xs))])
            files.append(pg)
            doc["integral"] = float(P.sum() * vol)
            # Monte Carlo oracle spot checks on the densest grid points
            top = np.argsort(P)[::-1][:cfg.density.probe_points]
            rows = []
            for idx in top:
                est, se = mc_density_oracle(dec, law, xs[idx], cfg.density.mc_oracle_samples,
                                            seed=cfg.kick.seed)
                rows.append(list(xs[idx]) + [P[idx], est, se])
            pm = self.path("density_mc.csv")
            emit_series(pm, [f"x{i+1}" for i in range(dec.nm)] + ["P", "mc_est", "mc_se"], rows)
            files.append(pm)
            doc["mc_max_rel_dev"] = float(max(
                abs(r[dec.nm] - r[dec.nm + 1]) / max(r[dec.nm + 1], 1e-300) for r in rows))
        # boundary exponent probe along a fixed direction
        M = dec.support_quadform()
        xdir = np.ones(dec.nm)
        xb = xdir * (law.eps / np.sqrt(xdir @ M @ xdir))
        probe = boundary_exponent_probe(dec, law, xb, quad=quad)
        doc["boundary_probe"] = probe
        doc["expected_slope"] = dec.m / 2.0
        pj = self.path("density.json")
        write_json(pj, doc)
        files.append(pj)
        return files, 0

    def stage_mixing(self):
        self.require("mixing")
        cfg = self.cfg
        model, dich, pi, law = self.model(), self.dichotomy(), self.controller(), self.law()
        mix = cfg.mixing
        S = semigroup(model, mix.tau)
        obs = make_observables(model.n, mix.n_linear, mix.n_radial,
                               seed=mix.obs_seed, radial_scale=mix.radial_scale)
        w0 = stable_state(dich, mix.w0_scale, cfg.run.w0_seed)
        rep = mixing_decay(S, pi, law, w0, -w0, mix.n_chains, mix.n_steps, obs,
                           mix.seed, threads=self.threads)
        pd = self.path("mixing_dk.csv")
        emit_series(pd, ["k", "d_k"], [[k, v] for k, v in enumerate(rep.d_k)])
        pj = self.path("mixing.json")
        write_json(pj, rep.to_json_dict())

        S_run = semigroup(model, cfg.run.tau)
        g0, _ = contraction_certificate(dich, model, cfg.run.tau)
        sl_a = slln_average(S_run, pi, law, w0, mix.slln_steps, obs, mix.slln_seed_a)
        sl_b = slln_average(S_run, pi, law, w0, mix.slln_steps, obs, mix.slln_seed_b)
        lo = np.maximum(np.array(sl_a["state_ci_low"]), np.array(sl_b["state_ci_low"]))
        hi = np.minimum(np.array(sl_a["state_ci_high"]), np.array(sl_b["state_ci_high"]))
        ps = self.path("slln.json")
        write_json(ps, {"seed_a": sl_a, "seed_b": sl_b,
                        "ci_overlap_all": bool(np.all(lo <= hi))})

        burn = cfg.run.burn_in
        if burn is None:
            burn = max(10, burn_in_floor(law.eps_hat, mix.w0_scale, g0))
        stats = stationary_stats(S_run, pi, law, w0, mix.slln_steps, burn,
                                 mix.seed + 5, gamma0=g0)
        cov_min_eig = float(np.linalg.eigvalsh(stats["cov"]).min())
        pst = self.path("stationary.json")
        write_json(pst, {"mean": stats["mean"].tolist(),
                         "cov_min_eig": cov_min_eig,
                         "norm_hist_counts": stats["norm_hist_counts"].tolist(),
                         "norm_hist_edges": stats["norm_hist_edges"].tolist(),
                         "n_post": stats["n_post"], "burn_in": stats["burn_in"]})
        return [pd, pj, ps, pst], 0

    def stage_report(self):
        self.require("report")
        import json

        def load(name):
            with open(self.path(name), "r", encoding="utf-8") as fh:
                return json.load(fh)

        cert = load("certificate.json")
        env = load("envelope.json")
        dens = load("density.json")
        mix = load("mixing.json")
        slln = load("slln.json")
        stat = load("stationary.json")
        blow = load("blowup.json")

        model, dich, pi, law = self.model(), self.dichotomy(), self.controller(), self.law()
        cond = condition_check(model, dich, self.ladder(), pi, law, self.cfg.run.tau,
                               seed=self.cfg.control.seed)

        grid = [cert["gamma0_grid"][k] for k in ("1.0", "2.0", "4.0", "8.0")]
        checks = {
            "contraction_gamma0": {"value": cert["gamma0"], "pass": cert["contraction_ok"]},
            "gamma0_decreasing_in_tau": {"value": grid,
                                         "pass": bool(np.all(np.diff(grid) < 0))},
            "tail_strictly_decreasing": {"value": cert["tail_gammas"],
                                         "pass": cond["tail"]["pass"]},
            "tv_ratio_stable": {"value": cond["tv"].get("max_ratio"),
                                "pass": cond["tv"]["pass"]},
            "envelope_zero_violations": {"value": env["n_violations"],
                                         "pass": env["n_violations"] == 0},
            "mixing_fit": {"value": {"gamma": mix["gamma_fit"], "r2": mix["r2"]},
                           "pass": bool(mix["conclusive"] and (mix["gamma_fit"] or 1) < 1)},
            "slln_two_seed_overlap": {"value": slln["ci_overlap_all"],
                                      "pass": slln["ci_overlap_all"]},
            "stationary_cov_psd": {"value": stat["cov_min_eig"],
                                   "pass": stat["cov_min_eig"] > -1e-10},
            "density_probe_slope": {"value": dens["boundary_probe"]["slope"],
                                    "pass": abs(dens["boundary_probe"]["slope"]
                                                - dens["expected_slope"]) < 0.15},
        }
        if blow.get("applicable", True):
            checks["blowup_ratio"] = {"value": blow["ratio_uncontrolled_controlled"],
                                      "pass": blow["ratio_uncontrolled_controlled"] > 1e3}
        if "integral" in dens:
            checks["density_integral"] = {"value": dens["integral"],
                                          "pass": abs(dens["integral"] - 1.0) < 1e-3}
        if "mc_max_rel_dev" in dens:
            checks["density_mc_agreement"] = {"value": dens["mc_max_rel_dev"],
                                              "pass": dens["mc_max_rel_dev"] < 0.05}
        all_pass = all(c["pass"] for c in checks.values())
        man = self._load_manifest()
        doc = {"checks": checks, "all_pass": all_pass,
               "condition_check": cond,
               "artifact_checksums": {s: v["artifacts"] for s, v in man["stages"].items()}}
        p = self.path("report.json")
        write_json(p, doc)
        return [p], 0 if all_pass else 1

    def run_stage(self, stage):
        t0 = time.time()
        files, fail = getattr(self, f"stage_{stage}")()
        self.record(stage, files, time.time() - t0)
        return fail


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kickstab",
        description="Feedback-stabilization laboratory: staged, reproducible experiments.")
    parser.add_argument("stage", choices=list(STAGES) + ["all"],
                        help="pipeline stage to run ('all' runs every stage in order)")
    parser.add_argument("--config", required=True, help="experiment config (JSON)")
    parser.add_argument("--out", default=None, help="output directory (default: config output.dir)")
    parser.add_argument("--threads", type=int, default=None,
                        help="ensemble worker threads (default: hardware parallelism)")
    parser.add_argument("--seed-override", type=int, default=None,
                        help="override the simulation seeds (model seeds unchanged)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.output.dir
        pipe = Pipeline(cfg, out, threads=args.threads, seed_override=args.seed_override)
        stages = STAGES if args.stage == "all" else (args.stage,)
        worst = 0
        for st in stages:
            fail = pipe.run_stage(st)
            print(f"[{st}] {'ok' if fail == 0 else 'CHECK FAILED'}")
            worst = max(worst, fail)
        return worst
    except KickstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
