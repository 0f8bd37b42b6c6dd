"""Scenario files, batch execution, cross-scale comparison, and tail fitting.

A scenario is a single YAML document validated strictly: unknown keys are
rejected (with a nearest-key suggestion), and the physical constants d,
kappa, epsilon must be explicit. Every run writes CSVs plus a manifest
with content hashes, so reruns can be verified byte for byte.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import time as _time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import equilibrium as eq
from . import gci as gci_mod
from . import kinetic as kin
from . import macro as mac
from . import particles as part
from .errors import (
    IncompatibleDomainError,
    InsufficientSupportError,
    ScenarioError,
    WealthKinError,
)
from .grids import WealthGrid, XGrid
from .model import ModelParams, MomentPair, VelocityField

ALL_SCALES = ("equilibrium", "gci", "particles", "kinetic", "macro")

_SCHEMA = {
    "params": {"d", "kappa", "epsilon"},
    "velocity": {"phi", "psi", "v0", "mode", "center", "width"},
    "wealth_grid": {"y_min", "y_max", "n_nodes"},
    "x_grid": {"n_cells"},
    "time": {"t_final", "dt", "output_times"},
    "seed": None,
    "scales": None,
    "equilibrium": {"upsilon1"},
    "gci": {"upsilon1", "upsilon2"},
    "particles": {"n_agents", "coupling", "n_bins", "sampler"},
    "initial": {"rho", "upsilon1", "ratio"},
    "macro": {"scheme"},
    "compare": {"a", "b", "fields"},
    "tail_fit": {"input", "window", "x_column", "y_column"},
}
_FIELD_SPEC_KEYS = {
    "uniform": {"kind", "value"},
    "sine": {"kind", "base", "amplitude", "mode", "phase"},
    "gaussian_bump": {"kind", "base", "amplitude", "center", "width"},
}
_SAMPLER_KEYS = {"kind", "upsilon1", "ratio"}


@dataclass
class Scenario:
    params: ModelParams
    velocity: VelocityField
    wealth_grid: WealthGrid
    x_grid: XGrid
    t_final: float
    dt: float | None
    output_times: list[float]
    seed: int
    scales: list[str]
    equilibrium_upsilon1: float
    gci_moments: MomentPair | None
    particles: dict
    initial: dict
    macro_scheme: str
    compare: dict | None
    tail_fit: dict | None
    raw: dict = field(default_factory=dict)
    base_dir: Path = Path(".")


def _suggest(key: str, known) -> str:
    match = difflib.get_close_matches(key, list(known), n=1)
    return f" (did you mean {match[0]!r}?)" if match else ""


def _check_keys(section: str, mapping: dict, allowed, errors: list[str]):
    for key in mapping:
        if key not in allowed:
            errors.append(
                f"{section}: unknown key {key!r}{_suggest(key, allowed)}"
            )


def _field_spec(section: str, spec, errors: list[str]):
    if not isinstance(spec, dict) or "kind" not in spec:
        errors.append(f"{section}: expected a mapping with a 'kind' entry")
        return None
    kind = spec["kind"]
    if kind not in _FIELD_SPEC_KEYS:
        errors.append(
            f"{section}: unknown field kind {kind!r}{_suggest(str(kind), _FIELD_SPEC_KEYS)}"
        )
        return None
    _check_keys(section, spec, _FIELD_SPEC_KEYS[kind], errors)
    return spec


def evaluate_field(spec: dict, x: np.ndarray) -> np.ndarray:
    kind = spec["kind"]
    if kind == "uniform":
        return np.full_like(x, float(spec["value"]))
    if kind == "sine":
        return float(spec["base"]) + float(spec["amplitude"]) * np.sin(
            2.0 * np.pi * float(spec.get("mode", 1)) * x + float(spec.get("phase", 0.0))
        )
    if kind == "gaussian_bump":
        return float(spec["base"]) + float(spec["amplitude"]) * np.exp(
            -((x - float(spec["center"])) ** 2) / (2.0 * float(spec["width"]) ** 2)
        )
    raise ScenarioError([f"unknown field kind {kind!r}"])


def parse_scenario(path: str | Path) -> Scenario:
    """Load and strictly validate a scenario file; all violations reported at once."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError([f"scenario file not found: {path}"])
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError([f"scenario does not parse as YAML: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(["scenario top level must be a mapping"])
    errors: list[str] = []
    _check_keys("top level", raw, _SCHEMA, errors)

    params_raw = raw.get("params")
    if not isinstance(params_raw, dict):
        errors.append("params: section is required (d, kappa, epsilon are never defaulted)")
        params_raw = {}
    else:
        _check_keys("params", params_raw, _SCHEMA["params"], errors)
    for name in ("d", "kappa", "epsilon"):
        if name not in params_raw:
            errors.append(f"params.{name}: required, no default")
    params = None
    if not errors or all(not e.startswith("params") for e in errors):
        try:
            params = ModelParams(
                d=float(params_raw["d"]),
                kappa=float(params_raw["kappa"]),
                epsilon=float(params_raw["epsilon"]),
            )
        except (KeyError, TypeError):
            params = None
        except ValueError as exc:
            errors.append(f"params: {exc}")

    vel_raw = raw.get("velocity", {"phi": "zero", "psi": "one", "v0": 0.0})
    velocity = None
    if not isinstance(vel_raw, dict):
        errors.append("velocity: expected a mapping")
    else:
        _check_keys("velocity", vel_raw, _SCHEMA["velocity"], errors)
        try:
            velocity = VelocityField(
                phi_kind=str(vel_raw.get("phi", "zero")),
                psi_kind=str(vel_raw.get("psi", "one")),
                v0=float(vel_raw.get("v0", 1.0)),
                mode=int(vel_raw.get("mode", 1)),
                center=float(vel_raw.get("center", 0.5)),
                width=float(vel_raw.get("width", 1.0)),
            )
        except ValueError as exc:
            errors.append(f"velocity: {exc}")

    wg_raw = raw.get("wealth_grid", {})
    if not isinstance(wg_raw, dict):
        errors.append("wealth_grid: expected a mapping")
        wg_raw = {}
    _check_keys("wealth_grid", wg_raw, _SCHEMA["wealth_grid"], errors)
    wealth_grid = None
    try:
        wealth_grid = WealthGrid.log_spaced(
            y_min=float(wg_raw.get("y_min", 1e-3)),
            y_max=float(wg_raw.get("y_max", 1e3)),
            n_nodes=int(wg_raw.get("n_nodes", 400)),
        )
    except ValueError as exc:
        errors.append(f"wealth_grid: {exc}")

    xg_raw = raw.get("x_grid", {})
    if not isinstance(xg_raw, dict):
        errors.append("x_grid: expected a mapping")
        xg_raw = {}
    _check_keys("x_grid", xg_raw, _SCHEMA["x_grid"], errors)
    x_grid = XGrid(n_cells=int(xg_raw.get("n_cells", 64)))

    time_raw = raw.get("time", {})
    if not isinstance(time_raw, dict):
        errors.append("time: expected a mapping")
        time_raw = {}
    _check_keys("time", time_raw, _SCHEMA["time"], errors)
    t_final = float(time_raw.get("t_final", 1.0))
    dt = float(time_raw["dt"]) if "dt" in time_raw else None
    output_times = [float(t) for t in time_raw.get("output_times", [t_final])]

    scales = raw.get("scales", ["equilibrium"])
    if not isinstance(scales, list):
        errors.append("scales: expected a list")
        scales = []
    for s in scales:
        if s not in ALL_SCALES:
            errors.append(f"scales: unknown scale {s!r}{_suggest(str(s), ALL_SCALES)}")

    eq_raw = raw.get("equilibrium", {})
    if not isinstance(eq_raw, dict):
        errors.append("equilibrium: expected a mapping")
        eq_raw = {}
    _check_keys("equilibrium", eq_raw, _SCHEMA["equilibrium"], errors)
    eq_u1 = float(eq_raw.get("upsilon1", 1.0))
    if eq_u1 <= 0.0:
        errors.append("equilibrium.upsilon1: must be positive")

    gci_raw = raw.get("gci")
    gci_moments = None
    if gci_raw is not None:
        if not isinstance(gci_raw, dict):
            errors.append("gci: expected a mapping")
        else:
            _check_keys("gci", gci_raw, _SCHEMA["gci"], errors)
            try:
                gci_moments = MomentPair(
                    float(gci_raw.get("upsilon1", 1.0)),
                    float(gci_raw.get("upsilon2", 3.0)),
                )
            except (ValueError, WealthKinError) as exc:
                errors.append(f"gci: {exc}")

    part_raw = raw.get("particles", {})
    if not isinstance(part_raw, dict):
        errors.append("particles: expected a mapping")
        part_raw = {}
    _check_keys("particles", part_raw, _SCHEMA["particles"], errors)
    sampler_raw = part_raw.get("sampler", {"kind": "inverse_gamma", "upsilon1": 1.0, "ratio": 0.5})
    if not isinstance(sampler_raw, dict):
        errors.append("particles.sampler: expected a mapping")
        sampler_raw = {}
    _check_keys("particles.sampler", sampler_raw, _SAMPLER_KEYS, errors)
    if sampler_raw.get("kind", "inverse_gamma") not in ("inverse_gamma", "lognormal", "gamma"):
        errors.append(
            f"particles.sampler.kind: unknown sampler {sampler_raw.get('kind')!r}"
        )
    particles_cfg = {
        "n_agents": int(part_raw.get("n_agents", 10000)),
        "coupling": str(part_raw.get("coupling", "binned")),
        "n_bins": int(part_raw.get("n_bins", 16)),
        "sampler": {
            "kind": str(sampler_raw.get("kind", "inverse_gamma")),
            "upsilon1": float(sampler_raw.get("upsilon1", 1.0)),
            "ratio": float(sampler_raw.get("ratio", 0.5)),
        },
    }
    if particles_cfg["coupling"] not in ("global", "binned"):
        errors.append(f"particles.coupling: unknown coupling {particles_cfg['coupling']!r}")

    init_raw = raw.get("initial", {})
    if not isinstance(init_raw, dict):
        errors.append("initial: expected a mapping")
        init_raw = {}
    _check_keys("initial", init_raw, _SCHEMA["initial"], errors)
    initial = {
        "rho": _field_spec("initial.rho", init_raw.get("rho", {"kind": "uniform", "value": 1.0}), errors),
        "upsilon1": _field_spec(
            "initial.upsilon1", init_raw.get("upsilon1", {"kind": "uniform", "value": 1.0}), errors
        ),
        "ratio": float(init_raw.get("ratio", 0.5)),
    }
    if initial["ratio"] <= 0.0:
        errors.append("initial.ratio: variation ratio must be positive")

    macro_raw = raw.get("macro", {})
    if not isinstance(macro_raw, dict):
        errors.append("macro: expected a mapping")
        macro_raw = {}
    _check_keys("macro", macro_raw, _SCHEMA["macro"], errors)
    macro_scheme = str(macro_raw.get("scheme", "centered"))
    if macro_scheme not in ("centered", "conservative"):
        errors.append(f"macro.scheme: unknown scheme {macro_scheme!r}")

    compare_raw = raw.get("compare")
    if compare_raw is not None:
        if not isinstance(compare_raw, dict):
            errors.append("compare: expected a mapping")
            compare_raw = None
        else:
            _check_keys("compare", compare_raw, _SCHEMA["compare"], errors)
            for k in ("a", "b"):
                if k not in compare_raw:
                    errors.append(f"compare.{k}: required path")

    tail_raw = raw.get("tail_fit")
    if tail_raw is not None:
        if not isinstance(tail_raw, dict):
            errors.append("tail_fit: expected a mapping")
            tail_raw = None
        else:
            _check_keys("tail_fit", tail_raw, _SCHEMA["tail_fit"], errors)
            if "input" not in tail_raw:
                errors.append("tail_fit.input: required path")
            window = tail_raw.get("window")
            if not (isinstance(window, list) and len(window) == 2):
                errors.append("tail_fit.window: expected [low, high]")

    if errors:
        raise ScenarioError(errors)
    return Scenario(
        params=params,
        velocity=velocity,
        wealth_grid=wealth_grid,
        x_grid=x_grid,
        t_final=t_final,
        dt=dt,
        output_times=output_times,
        seed=int(raw.get("seed", 0)),
        scales=list(scales),
        equilibrium_upsilon1=eq_u1,
        gci_moments=gci_moments,
        particles=particles_cfg,
        initial=initial,
        macro_scheme=macro_scheme,
        compare=compare_raw,
        tail_fit=tail_raw,
        raw=raw,
        base_dir=path.parent,
    )


def _fmt(value) -> str:
    return repr(float(value))


def write_csv(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating)) else str(v) for v in row))
            fh.write("\n")


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def sha256_of(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def make_sampler(spec: dict, rho_spec: dict | None = None):
    """Initial-ensemble sampler from a scenario sampler spec.

    Positions are uniform (or drawn from the configuration density when a
    field spec is given); wealths follow the requested two-moment family.
    """
    u1 = spec["upsilon1"]
    ratio = spec["ratio"]
    kind = spec["kind"]

    def draw_y(rng, n):
        if kind == "inverse_gamma":
            alpha = 2.0 + 1.0 / ratio
            beta = (alpha - 1.0) * u1
            return beta / rng.standard_gamma(alpha, n)
        if kind == "lognormal":
            s2 = math.log(1.0 + ratio)
            return rng.lognormal(math.log(u1) - 0.5 * s2, math.sqrt(s2), n)
        k = 1.0 / ratio
        return rng.gamma(k, u1 / k, n)

    def draw_x(rng, n):
        if rho_spec is None or rho_spec.get("kind") == "uniform":
            return rng.uniform(0.0, 1.0, n)
        grid = np.linspace(0.0, 1.0, 2049)
        centers = 0.5 * (grid[:-1] + grid[1:])
        dens = np.maximum(evaluate_field(rho_spec, centers), 0.0)
        cdf = np.concatenate(([0.0], np.cumsum(dens)))
        cdf /= cdf[-1]
        return np.interp(rng.uniform(0.0, 1.0, n), cdf, grid)

    def sampler(rng, n):
        return draw_x(rng, n), draw_y(rng, n)

    return sampler


def kinetic_initial_state(s: Scenario) -> kin.KineticState:
    x = s.x_grid.centers
    rho0 = evaluate_field(s.initial["rho"], x)
    u10 = evaluate_field(s.initial["upsilon1"], x)
    if np.any(rho0 < 0.0) or np.any(u10 <= 0.0):
        raise ScenarioError(["initial: rho must be nonnegative and upsilon1 positive"])
    ratio = s.initial["ratio"]
    alpha = 2.0 + 1.0 / ratio
    beta = (alpha - 1.0) * u10
    y = s.wealth_grid.nodes
    prof = np.exp(
        alpha * np.log(beta[:, None])
        - math.lgamma(alpha)
        - (1.0 + alpha) * np.log(y[None, :])
        - beta[:, None] / y[None, :]
    )
    return kin.state_from_profiles(s.x_grid, s.wealth_grid, rho0, prof)


def macro_initial_state(s: Scenario) -> mac.MacroState:
    # The hydrodynamic fields start from the post-relaxation values implied
    # by the kinetic initial data: the fast trading stage rescales the mean
    # wealth by sqrt(kappa * variation ratio) while conserving the density.
    st = kinetic_initial_state(s)
    mf = kin.moments(st)
    r0 = (mf.upsilon2 - mf.upsilon1**2) / mf.upsilon1**2
    u1 = mf.upsilon1 * np.sqrt(s.params.kappa * r0)
    return mac.MacroState(s.x_grid, mf.rho.copy(), u1)


def _run_equilibrium(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    u1, kappa = s.equilibrium_upsilon1, s.params.kappa
    ig = eq.gibbs_closed_form(u1, kappa)
    grid = s.wealth_grid
    closed = ig.pdf(grid.nodes)
    a = s.params.d * (1.0 + kappa)
    b = -(1.0 + kappa) * s.params.d * u1
    numeric = eq.gibbs_numeric(a, b, s.params.d, grid)
    l1 = grid.quadrature(np.abs(numeric.values - closed))
    p1 = out / "equilibrium_closed_form.csv"
    write_csv(p1, ["y", "density"], zip(grid.nodes, closed))
    p2 = out / "equilibrium_numeric.csv"
    write_csv(p2, ["y", "density"], zip(grid.nodes, numeric.values))
    p3 = out / "equilibrium_summary.csv"
    write_csv(
        p3,
        ["alpha", "beta", "moment1", "moment2", "l1_gap"],
        [(ig.alpha, ig.beta, ig.moment(1), ig.moment(2), l1)],
    )
    warnings = []
    if l1 > 1e-3:
        warnings.append(f"equilibrium: closed-form/numeric L1 gap {l1:.3e} above 1e-3")
    return [p1, p2, p3], warnings


def _run_gci(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    m = s.gci_moments or MomentPair(s.equilibrium_upsilon1, 3.0 * s.equilibrium_upsilon1**2)
    lam = gci_mod.lagrange_multipliers(m, s.params)
    chi = gci_mod.GciFunction(m.upsilon1)
    solv = gci_mod.solvability_residual(lam, m, s.params)
    adj = gci_mod.adjoint_residual(chi, lam, m, s.params, s.wealth_grid)
    rng = np.random.Generator(np.random.Philox(key=s.seed))
    f = gci_mod.moment_matched_density(rng, m, s.wealth_grid)
    annih = gci_mod.annihilation_test(f, m, s.params, s.wealth_grid)
    p1 = out / "gci_check.csv"
    write_csv(
        p1,
        ["upsilon1", "upsilon2", "lambda1", "lambda2", "solvability", "adjoint_l1", "annihilation"],
        [(m.upsilon1, m.upsilon2, lam.lambda1, lam.lambda2, solv, adj, annih)],
    )
    return [p1], []


def _run_particles(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    if s.dt is None:
        raise ScenarioError(["time.dt: required for the particle scale"])
    cfg = part.ParticleConfig(
        n_agents=s.particles["n_agents"],
        dt=s.dt,
        t_final=s.t_final,
        coupling=s.particles["coupling"],
        n_bins=s.particles["n_bins"],
        seed=s.seed,
    )
    sampler = make_sampler(s.particles["sampler"], s.initial["rho"])
    traj = part.run(cfg, s.params, s.velocity, sampler, s.output_times)
    rows = []
    for t, ens in zip(traj.times, traj.snapshots):
        for j in range(ens.n_agents):
            rows.append((t, j, ens.x[j], ens.y[j]))
    p1 = out / "particles_snapshots.csv"
    write_csv(p1, ["t", "agent_id", "x", "y"], rows)
    srows = []
    for t, ens in zip(traj.times, traj.snapshots):
        bm = part.empirical_moments(ens, "binned", s.particles["n_bins"])
        for k in range(bm.n_bins):
            if bm.occupied[k]:
                srows.append((t, k, bm.rho[k], bm.upsilon1[k], bm.upsilon2[k]))
    p2 = out / "particles_summary.csv"
    write_csv(p2, ["t", "bin", "rho", "upsilon1", "upsilon2"], srows)
    return [p1, p2], []


def _run_kinetic(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    if s.dt is None:
        raise ScenarioError(["time.dt: required for the kinetic scale"])
    st = kinetic_initial_state(s)
    traj = kin.evolve(
        st, s.params, s.velocity, s.t_final, s.dt, output_times=s.output_times, keep_states=True
    )
    rows = []
    for t, state in zip(traj.times, traj.states):
        for i, xc in enumerate(s.x_grid.centers):
            for j, yc in enumerate(s.wealth_grid.nodes):
                val = state.f[i, j]
                if val > 1e-14:
                    rows.append((t, xc, yc, val))
    p1 = out / "kinetic_field.csv"
    write_csv(p1, ["t", "x", "y", "f"], rows)
    mrows = []
    for t, mf in zip(traj.times, traj.moment_fields):
        for i, xc in enumerate(s.x_grid.centers):
            if not mf.vacuum[i]:
                mrows.append((t, xc, mf.rho[i], mf.upsilon1[i], mf.upsilon2[i]))
    p2 = out / "kinetic_moments.csv"
    write_csv(p2, ["t", "x", "rho", "upsilon1", "upsilon2"], mrows)
    final = traj.states[-1] if traj.states else None
    marginal = final.f.mean(axis=0)
    total = s.wealth_grid.quadrature(marginal)
    p3 = out / "kinetic_terminal_density.csv"
    write_csv(
        p3, ["y", "density"], zip(s.wealth_grid.nodes, marginal / total)
    )
    warnings = []
    if traj.max_mass_drift > 1e-12:
        warnings.append(f"kinetic: mass drift {traj.max_mass_drift:.2e} above 1e-12")
    return [p1, p2, p3], warnings


def _run_macro(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    if s.dt is None:
        raise ScenarioError(["time.dt: required for the macro scale"])
    st = macro_initial_state(s)
    traj = mac.run(
        st, s.params, s.velocity, s.t_final, s.dt, output_times=s.output_times, scheme=s.macro_scheme
    )
    kappa = s.params.kappa
    rows = []
    for t, rho, u1 in zip(traj.times, traj.rho, traj.upsilon1):
        for i, xc in enumerate(s.x_grid.centers):
            rows.append((t, xc, rho[i], u1[i], (1.0 + kappa) / kappa * u1[i] ** 2))
    p1 = out / "macro_fields.csv"
    write_csv(p1, ["t", "x", "rho", "upsilon1", "upsilon2"], rows)
    warnings = []
    if traj.max_mass_drift > 1e-12:
        warnings.append(f"macro: mass drift {traj.max_mass_drift:.2e} above 1e-12")
    if traj.floor_events:
        warnings.append(f"macro: mean-wealth floor engaged {traj.floor_events} times")
    return [p1], warnings


@dataclass
class ComparisonReport:
    times: list[float]
    fields: list[str]
    l1: dict
    linf: dict
    summary: dict

    def to_json(self) -> dict:
        return {
            "times": self.times,
            "fields": self.fields,
            "l1": self.l1,
            "linf": self.linf,
            "summary": self.summary,
        }


def restrict_field(values: np.ndarray, factor: int, weights: np.ndarray | None = None) -> np.ndarray:
    """Conservative restriction onto a grid coarser by ``factor``.

    Plain block averaging for densities; weighted block averaging (weights =
    fine-cell density) for intensive fields like the mean wealth, so the
    restricted wealth density equals the restriction of the wealth density.
    """
    if values.size % factor:
        raise IncompatibleDomainError("fine grid size is not a multiple of the coarse size")
    blocks = values.reshape(-1, factor)
    if weights is None:
        return blocks.mean(axis=1)
    wb = weights.reshape(-1, factor)
    tot = wb.sum(axis=1)
    safe = np.where(tot > 0.0, tot, 1.0)
    out = (blocks * wb).sum(axis=1) / safe
    return np.where(tot > 0.0, out, blocks.mean(axis=1))


def moment_table_from_csv(path: Path) -> dict:
    data = read_csv(path)
    times = np.unique(data["t"])
    fields = [k for k in data if k not in ("t", "x")]
    table = {"times": times, "x": None, "fields": {k: [] for k in fields}}
    for t in times:
        mask = np.isclose(data["t"], t)
        order = np.argsort(data["x"][mask])
        x = data["x"][mask][order]
        if table["x"] is None:
            table["x"] = x
        for k in fields:
            table["fields"][k].append(data[k][mask][order])
    return table


def compare(a: dict, b: dict, fields: list[str] | None = None) -> ComparisonReport:
    """Per-time L1/Linf gaps between two moment tables on the coarser grid."""
    times = sorted(set(np.round(a["times"], 12)) & set(np.round(b["times"], 12)))
    if not times:
        raise IncompatibleDomainError("trajectories share no output times")
    fields = fields or [k for k in a["fields"] if k in b["fields"]]
    nx_a, nx_b = a["x"].size, b["x"].size
    if max(nx_a, nx_b) % min(nx_a, nx_b):
        raise IncompatibleDomainError(
            f"grids of {nx_a} and {nx_b} cells are not nested"
        )
    l1 = {k: [] for k in fields}
    linf = {k: [] for k in fields}
    for t in times:
        ia = int(np.argmin(np.abs(a["times"] - t)))
        ib = int(np.argmin(np.abs(b["times"] - t)))
        for k in fields:
            va = a["fields"][k][ia]
            vb = b["fields"][k][ib]
            rho_a = a["fields"].get("rho", [None] * len(a["times"]))[ia]
            rho_b = b["fields"].get("rho", [None] * len(b["times"]))[ib]
            if va.size > vb.size:
                w = rho_a if (k != "rho" and rho_a is not None) else None
                va = restrict_field(va, va.size // vb.size, w)
            elif vb.size > va.size:
                w = rho_b if (k != "rho" and rho_b is not None) else None
                vb = restrict_field(vb, vb.size // va.size, w)
            diff = np.abs(va - vb)
            denom = max(float(np.mean(np.abs(vb))), 1e-300)
            l1[k].append(float(np.mean(diff) / denom))
            linf[k].append(float(np.max(diff) / max(float(np.max(np.abs(vb))), 1e-300)))
    summary = {
        k: {"terminal_l1": l1[k][-1], "terminal_linf": linf[k][-1]} for k in fields
    }
    return ComparisonReport(times=list(map(float, times)), fields=fields, l1=l1, linf=linf, summary=summary)


def sweep_slope(params: np.ndarray, errors: np.ndarray) -> float:
    """Least-squares slope of log error against log parameter."""
    params = np.asarray(params, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.any(errors <= 0.0) or np.any(params <= 0.0):
        raise ValueError("sweep slopes need positive parameters and errors")
    return float(np.polyfit(np.log(params), np.log(errors), 1)[0])


def tail_fit(
    y: np.ndarray, density: np.ndarray, window: tuple[float, float]
) -> tuple[float, float]:
    """Log-log least-squares slope of a density table over a window, with stderr."""
    y = np.asarray(y, dtype=float)
    density = np.asarray(density, dtype=float)
    lo, hi = window
    mask = (y >= lo) & (y <= hi) & (density > 0.0)
    if np.count_nonzero(mask) < 10:
        raise InsufficientSupportError(
            f"only {np.count_nonzero(mask)} usable points in window [{lo}, {hi}]"
        )
    lx = np.log(y[mask])
    ly = np.log(density[mask])
    coef, cov = np.polyfit(lx, ly, 1, cov=True)
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


def _run_compare(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    if s.compare is None:
        raise ScenarioError(["compare: section missing from the scenario"])
    base = s.base_dir
    table_a = moment_table_from_csv((base / s.compare["a"]).resolve())
    table_b = moment_table_from_csv((base / s.compare["b"]).resolve())
    report = compare(table_a, table_b, s.compare.get("fields"))
    p1 = out / "comparison_report.json"
    p1.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
    rows = []
    for i, t in enumerate(report.times):
        for k in report.fields:
            rows.append((t, k, report.l1[k][i], report.linf[k][i]))
    p2 = out / "comparison_norms.csv"
    write_csv(p2, ["t", "field", "l1", "linf"], rows)
    return [p1, p2], []


def _run_tail_fit(s: Scenario, out: Path) -> tuple[list[Path], list[str]]:
    if s.tail_fit is None:
        raise ScenarioError(["tail_fit: section missing from the scenario"])
    data = read_csv((s.base_dir / s.tail_fit["input"]).resolve())
    xcol = s.tail_fit.get("x_column", "y")
    ycol = s.tail_fit.get("y_column", "density")
    if xcol not in data or ycol not in data:
        raise ScenarioError([f"tail_fit: columns {xcol!r}/{ycol!r} not in input table"])
    lo, hi = s.tail_fit["window"]
    slope, stderr = tail_fit(data[xcol], data[ycol], (float(lo), float(hi)))
    p1 = out / "tail_fit.json"
    p1.write_text(
        json.dumps(
            {"slope": slope, "stderr": stderr, "window": [float(lo), float(hi)]},
            indent=2,
            sort_keys=True,
        )
    )
    return [p1], []


_RUNNERS = {
    "equilibrium": _run_equilibrium,
    "gci": _run_gci,
    "particles": _run_particles,
    "kinetic": _run_kinetic,
    "macro": _run_macro,
    "compare": _run_compare,
    "tail_fit": _run_tail_fit,
}


def run_scenario(
    s: Scenario, out_dir: str | Path, scales: list[str] | None = None
) -> tuple[dict, bool]:
    """Execute the requested scales, write their tables plus a manifest.

    Returns the manifest and a success flag; per-scale failures are recorded
    in the manifest and do not stop the remaining scales.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    requested = scales if scales is not None else s.scales
    outputs: list[Path] = []
    manifest = {
        "scenario_echo": s.raw,
        "seed": s.seed,
        "outputs": [],
        "timings": {},
        "warnings": [],
        "errors": {},
    }
    ok = True
    for scale in requested:
        runner = _RUNNERS[scale]
        t0 = _time.perf_counter()
        try:
            paths, warnings = runner(s, out)
            outputs.extend(paths)
            manifest["warnings"].extend(warnings)
        except (WealthKinError, ValueError) as exc:
            manifest["errors"][scale] = f"{type(exc).__name__}: {exc}"
            ok = False
        manifest["timings"][scale] = _time.perf_counter() - t0
    manifest["outputs"] = [
        {"path": p.name, "sha256": sha256_of(p)} for p in outputs
    ]
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest, ok


def verify_manifest(out_dir: str | Path) -> bool:
    """Recompute output hashes against the stored manifest."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    for entry in manifest["outputs"]:
        if sha256_of(out / entry["path"]) != entry["sha256"]:
            return False
    return True
