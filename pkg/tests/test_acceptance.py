"""Acceptance suite: one test per release criterion, each printing a pass line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; every tolerance is asserted exactly as stated, and shared runs are
cached in module fixtures so the whole suite stays well inside its runtime
budgets.
"""

import math
import time

import numpy as np
import pytest

from wealthkin import (
    ModelParams,
    MomentPair,
    WealthGrid,
    XGrid,
    constitutive_residual,
    gibbs_closed_form,
    gibbs_numeric,
    inverse_gamma_moment,
    manifold_upsilon2,
)
from wealthkin.gci import (
    GciFunction,
    adjoint_residual,
    annihilation_test,
    lagrange_multipliers,
    moment_matched_density,
    solvability_residual,
)
from wealthkin.harness import parse_scenario, run_scenario, tail_fit
from wealthkin.kinetic import evolve, moments, state_from_profiles
from wealthkin.macro import MacroState, run as macro_run
from wealthkin.model import VelocityField
from wealthkin.particles import ParticleConfig, run as particle_run, wealth_histogram

P11 = ModelParams(d=1.0, kappa=1.0, epsilon=1.0)
VZERO = VelocityField(phi_kind="zero")
VSIN = VelocityField(phi_kind="sine_bump", psi_kind="one", v0=1.0)


def report(line: str, t0: float, budget: float):
    elapsed = time.perf_counter() - t0
    print(f"PASS {line} [{elapsed:.1f}s]")
    assert elapsed < budget


# --- criterion 4 artifacts, shared with criterion 7 ------------------------


@pytest.fixture(scope="module")
def relaxation_runs():
    yg = WealthGrid.log_spaced(1e-3, 3e4, 400)
    y = yg.nodes
    s2 = math.log(1.5)
    profiles = {
        "inverse_gamma": np.exp(
            4.0 * np.log(3.0) - math.lgamma(4.0) - 5.0 * np.log(y) - 3.0 / y
        ),
        "lognormal": np.exp(-((np.log(y) + 0.5 * s2) ** 2) / (2.0 * s2))
        / (y * math.sqrt(s2) * np.sqrt(2.0 * np.pi)),
        "gamma": y * np.exp(-y / 0.5) / (math.gamma(2.0) * 0.25),
    }
    runs = {}
    for name, prof in profiles.items():
        st = state_from_profiles(XGrid(1), yg, np.array([1.0]), prof)
        runs[name] = evolve(st, P11, VZERO, t_final=20.0, dt=0.01)
    return yg, runs


@pytest.fixture(scope="module")
def hydro_runs():
    kappa = 1.0
    xg = XGrid(64)
    yg = WealthGrid.log_spaced(1e-3, 3e4, 400)
    x, y = xg.centers, yg.nodes
    rho0 = 1.0 + 0.4 * np.sin(2.0 * np.pi * x)
    u10 = 1.0 + 0.3 * np.sin(2.0 * np.pi * x + 1.0)
    alpha0 = 4.0  # initial variation ratio 0.5, off the manifold
    prof = np.exp(
        alpha0 * np.log(3.0 * u10[:, None])
        - math.lgamma(alpha0)
        - (1.0 + alpha0) * np.log(y[None, :])
        - 3.0 * u10[:, None] / y[None, :]
    )
    s0 = state_from_profiles(xg, yg, rho0, prof)
    mf0 = moments(s0)
    r0 = (mf0.upsilon2 - mf0.upsilon1**2) / mf0.upsilon1**2
    u1_macro0 = mf0.upsilon1 * np.sqrt(kappa * r0)

    T = 0.2
    out = {}
    for eps in (0.1, 0.05, 0.025):
        dt = T / int(round(T / (eps * eps / 2.0)))
        p = ModelParams(d=1.0, kappa=kappa, epsilon=eps)
        ktraj = evolve(s0, p, VSIN, t_final=T, dt=dt)
        pairs = {}
        for scheme in ("conservative", "centered"):
            mtraj = macro_run(
                MacroState(xg, rho0.copy(), u1_macro0.copy()), p, VSIN, T, dt, scheme=scheme
            )
            pairs[scheme] = mtraj
        out[eps] = (ktraj, pairs)
    return out


class TestAcceptance:
    def test_criterion_1_equilibrium_identities(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(20240809)
        worst_mom = 0.0
        worst_res = 0.0
        for _ in range(20):
            u1 = float(np.exp(rng.uniform(-1.5, 1.5)))
            kappa = float(np.exp(rng.uniform(np.log(0.5), np.log(4.0))))
            ig = gibbs_closed_form(u1, kappa)
            y_max = ig.beta * max(
                1e4, (2.0 * (ig.alpha - 1.0) / 2e-7) ** (1.0 / (ig.alpha - 2.0))
            )
            grid = WealthGrid.log_spaced(1e-4 * ig.beta, y_max, 12000)
            vals = ig.pdf(grid.nodes)
            for k in (0, 1, 2):
                exact = inverse_gamma_moment(ig, k)
                rel = abs(grid.moment(vals, k) - exact) / exact
                worst_mom = max(worst_mom, rel)
            assert worst_mom <= 1e-6
            p = ModelParams(d=1.0, kappa=kappa)
            m = MomentPair(u1, manifold_upsilon2(u1, kappa))
            r1, r2 = constitutive_residual(m, p)
            scale = (1.0 + kappa) * max(u1, u1**2, 1.0)
            worst_res = max(worst_res, abs(r1) / scale, abs(r2) / scale)
            assert worst_res <= 1e-12
        report(
            f"criterion 1: equilibrium identities (moments {worst_mom:.1e}, residual {worst_res:.1e})",
            t0,
            budget=5.0,
        )

    def test_criterion_2_numeric_vs_analytic_gibbs(self):
        t0 = time.perf_counter()
        errs = []
        for n in (400, 800):
            grid = WealthGrid.log_spaced(1e-3, 1e3, n)
            dg = gibbs_numeric(2.0, -2.0, 1.0, grid)
            exact = gibbs_closed_form(1.0, 1.0).pdf(grid.nodes)
            errs.append(grid.quadrature(np.abs(dg.values - exact)))
        assert errs[0] <= 1e-3
        ratio = errs[0] / errs[1]
        assert ratio >= 1.8
        report(
            f"criterion 2: discrete Gibbs L1={errs[0]:.2e} at 400 nodes, refinement ratio {ratio:.2f}",
            t0,
            budget=10.0,
        )

    def test_criterion_3_gci_suite(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(3)
        worst_solv = 0.0
        for _ in range(50):
            u1 = float(np.exp(rng.uniform(-1.0, 1.0)))
            kappa = float(np.exp(rng.uniform(np.log(0.5), np.log(3.0))))
            ratio = float(np.exp(rng.uniform(np.log(0.4), np.log(2.5)))) / kappa
            m = MomentPair(u1, (1.0 + ratio) * u1**2)
            p = ModelParams(d=1.0, kappa=kappa)
            lam = lagrange_multipliers(m, p)
            resid = solvability_residual(lam, m, p)
            scale = abs(lam.lambda1) * u1 + abs(lam.lambda2) * m.upsilon2 + 1.0
            worst_solv = max(worst_solv, abs(resid) / scale)
        assert worst_solv <= 1e-10

        adj = []
        m = MomentPair(1.0, 3.0)
        lam = lagrange_multipliers(m, P11)
        chi = GciFunction(m.upsilon1)
        for n in (400, 800):
            adj.append(adjoint_residual(chi, lam, m, P11, WealthGrid.log_spaced(1e-3, 1e3, n)))
        assert adj[0] <= 1e-3
        assert adj[0] / adj[1] >= 1.8

        g400 = WealthGrid.log_spaced(3e-2, 3e2, 400)
        g800 = WealthGrid.log_spaced(3e-2, 3e2, 800)
        rng = np.random.default_rng(42)
        mags4, mags8 = [], []
        for _ in range(100):
            u1 = float(rng.uniform(0.85, 1.15))
            vr = float(rng.uniform(0.4, 0.7))
            m = MomentPair(u1, (1.0 + vr) * u1**2)
            state = rng.bit_generator.state
            f4 = moment_matched_density(rng, m, g400)
            twin = np.random.default_rng()
            twin.bit_generator.state = state
            f8 = moment_matched_density(twin, m, g800)
            mags4.append(abs(annihilation_test(f4, m, P11, g400)))
            mags8.append(abs(annihilation_test(f8, m, P11, g800)))
        mags4, mags8 = np.array(mags4), np.array(mags8)
        assert mags4.max() <= 1e-4
        assert np.median(mags8) <= np.median(mags4) / 1.8
        assert mags8.mean() <= mags4.mean() / 1.8
        report(
            "criterion 3: GCI suite (solvability "
            f"{worst_solv:.1e}, adjoint {adj[0]:.1e} ratio {adj[0]/adj[1]:.2f}, "
            f"annihilation max {mags4.max():.1e} median ratio {np.median(mags8)/np.median(mags4):.2f})",
            t0,
            budget=60.0,
        )

    def test_criterion_4_homogeneous_relaxation(self, relaxation_runs, tmp_path):
        t0 = time.perf_counter()
        yg, runs = relaxation_runs
        finals = {}
        for name, traj in runs.items():
            mf = moments(traj.final)
            u1, u2 = float(mf.upsilon1[0]), float(mf.upsilon2[0])
            r = (u2 - u1**2) / u1**2
            assert r == pytest.approx(1.0, abs=1e-3)
            finals[name] = traj.final.f[0]
        names = list(finals)
        worst_l1 = 0.0
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                l1 = yg.quadrature(np.abs(finals[names[i]] - finals[names[j]]))
                worst_l1 = max(worst_l1, l1)
        assert worst_l1 <= 2e-3
        slope, _ = tail_fit(yg.nodes, finals["inverse_gamma"], (20.0, 200.0))
        assert slope == pytest.approx(-4.0, abs=0.1)
        report(
            f"criterion 4: homogeneous relaxation (pairwise L1 {worst_l1:.1e}, tail slope {slope:.3f})",
            t0,
            budget=120.0,
        )

    def test_criterion_5_particle_kinetic_agreement(self):
        t0 = time.perf_counter()
        yg = WealthGrid.log_spaced(1e-3, 3e4, 400)
        y = yg.nodes
        prof = np.exp(4.0 * np.log(3.0) - math.lgamma(4.0) - 5.0 * np.log(y) - 3.0 / y)
        st = state_from_profiles(XGrid(1), yg, np.array([1.0]), prof)
        ktraj = evolve(st, P11, VZERO, t_final=20.0, dt=0.01)
        fk = ktraj.final.f[0]
        mf = moments(ktraj.final)
        u1k = float(mf.upsilon1[0])

        def sampler(rng, n):
            return rng.uniform(0.0, 1.0, n), 3.0 / rng.standard_gamma(4.0, n)

        edges_unit = np.geomspace(0.02, 50.0, 51)
        centers_unit = np.sqrt(edges_unit[:-1] * edges_unit[1:])
        fk_unit = np.interp(centers_unit * u1k, y, fk) * u1k

        def mean_normalized_l1(ensemble):
            u1p = float(np.mean(ensemble.y))
            hist = wealth_histogram(ensemble, edges_unit * u1p) * u1p
            return float(np.sum(np.abs(hist - fk_unit) * np.diff(edges_unit)))

        cfg = ParticleConfig(100_000, 0.01, 20.0, coupling="global", seed=11)
        traj = particle_run(cfg, P11, VZERO, sampler)
        l1 = mean_normalized_l1(traj.final)
        assert l1 <= 0.05
        assert traj.final.n_agents == 100_000

        sweep = {}
        for n_agents in (10_000, 40_000):
            errors = [
                mean_normalized_l1(
                    particle_run(
                        ParticleConfig(n_agents, 0.01, 20.0, coupling="global", seed=s),
                        P11,
                        VZERO,
                        sampler,
                    ).final
                )
                for s in (21, 22, 23, 24)
            ]
            sweep[n_agents] = float(np.mean(errors))
        ratio = sweep[40_000] / sweep[10_000]
        assert 0.25 <= ratio <= 1.0  # N^(-1/2) within a factor of two
        report(
            f"criterion 5: particle-kinetic histogram L1={l1:.3f}, N-sweep ratio {ratio:.2f}",
            t0,
            budget=300.0,
        )

    def test_criterion_6_hydrodynamic_limit(self, hydro_runs):
        t0 = time.perf_counter()
        summary = {}
        for scheme in ("conservative", "centered"):
            errors = []
            for eps in (0.1, 0.05, 0.025):
                ktraj, pairs = hydro_runs[eps]
                mf = moments(ktraj.final)
                mstate = pairs[scheme].final
                e_rho = np.sum(np.abs(mf.rho - mstate.rho)) / np.sum(np.abs(mstate.rho))
                e_u1 = np.sum(np.abs(mf.upsilon1 - mstate.upsilon1)) / np.sum(
                    np.abs(mstate.upsilon1)
                )
                errors.append(e_rho + e_u1)
            summary[scheme] = (errors, [errors[1] / errors[0], errors[2] / errors[1]])
        errors, ratios = summary["conservative"]
        assert errors[0] > errors[1] > errors[2]
        assert max(ratios) <= 0.7
        report(
            "criterion 6: hydrodynamic limit errors "
            f"{errors[0]:.2e} -> {errors[1]:.2e} -> {errors[2]:.2e}, ratios "
            f"{ratios[0]:.2f}/{ratios[1]:.2f} (centered-scheme ratios "
            f"{summary['centered'][1][0]:.2f}/{summary['centered'][1][1]:.2f})",
            t0,
            budget=900.0,
        )

    def test_criterion_7_conservation_ledger(self, relaxation_runs, hydro_runs):
        t0 = time.perf_counter()
        _, runs = relaxation_runs
        worst_kinetic = max(traj.max_mass_drift for traj in runs.values())
        for eps in (0.1, 0.05, 0.025):
            ktraj, pairs = hydro_runs[eps]
            worst_kinetic = max(worst_kinetic, ktraj.max_mass_drift)
        worst_macro = max(
            pairs[scheme].max_mass_drift
            for _, pairs in hydro_runs.values()
            for scheme in pairs
        )
        assert worst_kinetic <= 1e-12
        assert worst_macro <= 1e-12

        cfg = ParticleConfig(5_000, 0.01, 1.0, coupling="global", seed=5)
        traj = particle_run(
            cfg,
            P11,
            VZERO,
            lambda rng, n: (rng.uniform(0, 1, n), 3.0 / rng.standard_gamma(4.0, n)),
            output_times=[0.0, 0.5, 1.0],
        )
        assert all(s.n_agents == 5_000 for s in traj.snapshots)
        assert traj.final.n_agents == 5_000
        report(
            f"criterion 7: conservation (kinetic drift {worst_kinetic:.1e}, macro drift "
            f"{worst_macro:.1e}, agent count exact)",
            t0,
            budget=60.0,
        )

    def test_criterion_8_determinism(self, tmp_path):
        t0 = time.perf_counter()
        scenario_text = """
params: {d: 1.0, kappa: 1.0, epsilon: 0.5}
velocity: {phi: sine_bump, psi: one, v0: 1.0}
wealth_grid: {y_min: 1.0e-3, y_max: 1.0e+3, n_nodes: 200}
x_grid: {n_cells: 16}
time: {t_final: 0.1, dt: 0.005}
seed: 4242
scales: [equilibrium, particles, kinetic, macro]
particles: {n_agents: 2000, coupling: global, sampler: {kind: inverse_gamma, upsilon1: 1.0, ratio: 0.5}}
initial:
  rho: {kind: uniform, value: 1.0}
  upsilon1: {kind: uniform, value: 1.0}
  ratio: 0.5
"""
        spath = tmp_path / "scenario.yaml"
        spath.write_text(scenario_text)
        s = parse_scenario(spath)
        run_scenario(s, tmp_path / "run1")
        run_scenario(s, tmp_path / "run2")
        from wealthkin.cli import main as cli_main

        cli_main(["kinetic", "--scenario", str(spath), "--out", str(tmp_path / "t1"), "--threads", "1"])
        cli_main(["kinetic", "--scenario", str(spath), "--out", str(tmp_path / "t8"), "--threads", "8"])
        names = [
            "equilibrium_closed_form.csv",
            "equilibrium_numeric.csv",
            "particles_snapshots.csv",
            "particles_summary.csv",
            "kinetic_field.csv",
            "kinetic_moments.csv",
            "macro_fields.csv",
        ]
        for name in names:
            a = (tmp_path / "run1" / name).read_bytes()
            b = (tmp_path / "run2" / name).read_bytes()
            assert a == b, f"{name} differs between identical runs"
        for name in ("kinetic_field.csv", "kinetic_moments.csv"):
            a = (tmp_path / "t1" / name).read_bytes()
            b = (tmp_path / "t8" / name).read_bytes()
            assert a == b, f"{name} differs across thread counts"
        report("criterion 8: byte-identical reruns across seeds and thread counts", t0, budget=60.0)
