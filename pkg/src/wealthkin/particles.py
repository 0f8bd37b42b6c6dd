"""Seeded N-agent simulation of the wealth-exchange market.

Each agent carries a configuration coordinate advected by the velocity
field and a wealth driven by the best-reply drift plus multiplicative
volatility. The wealth update is split so positivity is unconditional: the
linear part of the drift and the noise are applied as an exact-in-law
geometric factor, then the nonnegative constant part of the drift is added.
Coupling to the market runs through the empirical moments, refreshed once
per step, either globally or per configuration bin.

Noise is drawn from a counter-based generator keyed by (seed, step), so a
trajectory is reproducible bit-for-bit regardless of how the per-agent work
is scheduled, and any step can be replayed without replaying its
predecessors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateVarianceError, SparseBinError
from .model import ModelParams, MomentPair, VelocityField, strategy_a, strategy_b

#: Minimum agents per occupied configuration bin for stable local moments.
MIN_BIN_OCCUPANCY = 10


@dataclass(frozen=True)
class ParticleConfig:
    n_agents: int
    dt: float
    t_final: float
    coupling: str = "binned"
    n_bins: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("need at least one agent")
        if self.dt <= 0.0 or self.t_final < 0.0:
            raise ValueError("time step and horizon must be positive")
        if self.coupling not in ("global", "binned"):
            raise ValueError(f"unknown coupling {self.coupling!r}")
        if self.coupling == "binned" and self.n_bins < 1:
            raise ValueError("binned coupling needs at least one bin")


@dataclass
class AgentEnsemble:
    """Positions, wealths, and the deterministic RNG cursor of an ensemble."""

    x: np.ndarray
    y: np.ndarray
    seed: int
    step_index: int = 0
    time: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("positions and wealths must be 1-D arrays of equal length")
        if np.any(self.y <= 0.0):
            raise ValueError("all wealths must be strictly positive")
        if np.any((self.x < 0.0) | (self.x > 1.0)):
            raise ValueError("all positions must lie in [0, 1]")

    @property
    def n_agents(self) -> int:
        return self.x.size

    def step_normals(self) -> np.ndarray:
        """Standard normals for this step, keyed by (seed, step index)."""
        bitgen = np.random.Philox(key=self.seed, counter=[0, 0, 0, self.step_index])
        return np.random.Generator(bitgen).standard_normal(self.n_agents)


@dataclass(frozen=True)
class BinnedMoments:
    """Per-bin agent density and wealth moments on a uniform bin grid."""

    n_bins: int
    counts: np.ndarray
    rho: np.ndarray
    upsilon1: np.ndarray
    upsilon2: np.ndarray

    @property
    def occupied(self) -> np.ndarray:
        return self.counts > 0


def empirical_moments(
    e: AgentEnsemble, coupling: str = "global", n_bins: int = 16
) -> MomentPair | BinnedMoments:
    """Mean and second moment of wealth, globally or per configuration bin.

    Raises ``DegenerateVarianceError`` when the (global) sample variance
    underflows the moment-pair floor and ``SparseBinError`` when an occupied
    bin holds fewer than ``MIN_BIN_OCCUPANCY`` agents.
    """
    if coupling == "global":
        return MomentPair(float(np.mean(e.y)), float(np.mean(e.y**2)))
    if coupling != "binned":
        raise ValueError(f"unknown coupling {coupling!r}")
    idx = _bin_indices(e.x, n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    occupied = counts > 0
    sparse = occupied & (counts < MIN_BIN_OCCUPANCY)
    if np.any(sparse):
        raise SparseBinError(
            f"bins {np.nonzero(sparse)[0].tolist()} hold fewer than "
            f"{MIN_BIN_OCCUPANCY} agents"
        )
    sums1 = np.bincount(idx, weights=e.y, minlength=n_bins)
    sums2 = np.bincount(idx, weights=e.y**2, minlength=n_bins)
    safe = np.where(occupied, counts, 1)
    u1 = np.where(occupied, sums1 / safe, np.nan)
    u2 = np.where(occupied, sums2 / safe, np.nan)
    rho = counts / (e.n_agents * (1.0 / n_bins))
    return BinnedMoments(n_bins=n_bins, counts=counts, rho=rho, upsilon1=u1, upsilon2=u2)


def _bin_indices(x: np.ndarray, n_bins: int) -> np.ndarray:
    return np.clip((x * n_bins).astype(int), 0, n_bins - 1)


def _fallback_coefficients(mean_y: float, p: ModelParams) -> tuple[float, float]:
    # Equilibrium-manifold values; used when the empirical variance underflows.
    return p.d * (1.0 + p.kappa), -(1.0 + p.kappa) * p.d * mean_y


def _agent_coefficients(
    e: AgentEnsemble, p: ModelParams, cfg: ParticleConfig
) -> tuple[np.ndarray, np.ndarray]:
    if cfg.coupling == "global":
        try:
            m = empirical_moments(e, "global")
            a, b = strategy_a(m, p), strategy_b(m.upsilon1, p)
        except (DegenerateVarianceError, ValueError):
            a, b = _fallback_coefficients(float(np.mean(e.y)), p)
        n = e.n_agents
        return np.full(n, a), np.full(n, b)

    bm = empirical_moments(e, "binned", cfg.n_bins)
    a_bin = np.empty(cfg.n_bins)
    b_bin = np.empty(cfg.n_bins)
    for k in range(cfg.n_bins):
        if not bm.occupied[k]:
            a_bin[k], b_bin[k] = np.nan, np.nan
            continue
        try:
            m = MomentPair(float(bm.upsilon1[k]), float(bm.upsilon2[k]))
            a_bin[k], b_bin[k] = strategy_a(m, p), strategy_b(m.upsilon1, p)
        except (DegenerateVarianceError, ValueError):
            a_bin[k], b_bin[k] = _fallback_coefficients(float(bm.upsilon1[k]), p)
    idx = _bin_indices(e.x, cfg.n_bins)
    return a_bin[idx], b_bin[idx]


def step(
    e: AgentEnsemble,
    p: ModelParams,
    v: VelocityField,
    cfg: ParticleConfig,
    coefficients: tuple[np.ndarray, np.ndarray] | None = None,
) -> AgentEnsemble:
    """One positivity-preserving split step of all agents.

    Pass ``coefficients`` to freeze (a, b) externally (testing and
    diagnostics); by default they are refreshed from the ensemble's
    empirical moments.
    """
    if coefficients is None:
        a, b = _agent_coefficients(e, p, cfg)
    else:
        a, b = coefficients
        a = np.broadcast_to(np.asarray(a, dtype=float), e.y.shape)
        b = np.broadcast_to(np.asarray(b, dtype=float), e.y.shape)
    if np.any(b > 0.0):
        raise ValueError("positive linear coefficient would break wealth positivity")
    xi = e.step_normals()
    x_new = np.clip(e.x + v(e.x, e.y) * cfg.dt, 0.0, 1.0)
    growth = np.exp((-a - p.d) * cfg.dt + np.sqrt(2.0 * p.d * cfg.dt) * xi)
    y_new = e.y * growth + (-b) * cfg.dt
    return AgentEnsemble(
        x=x_new, y=y_new, seed=e.seed, step_index=e.step_index + 1, time=e.time + cfg.dt
    )


def wealth_substep(y, a, b, d, dt, xi):
    """Frozen-coefficient wealth update: exact geometric factor plus drift offset."""
    growth = np.exp((-a - d) * dt + np.sqrt(2.0 * d * dt) * np.asarray(xi))
    return np.asarray(y) * growth + (-b) * dt


@dataclass
class ParticleTrajectory:
    times: list[float] = field(default_factory=list)
    snapshots: list[AgentEnsemble] = field(default_factory=list)
    final: AgentEnsemble | None = None


def run(
    cfg: ParticleConfig,
    p: ModelParams,
    v: VelocityField,
    sampler,
    output_times: list[float] | None = None,
) -> ParticleTrajectory:
    """Simulate from a sampled initial ensemble; snapshots at requested times.

    ``sampler(rng, n) -> (x, y)`` draws the initial ensemble; the generator
    it receives is seeded from the scenario seed, so runs are reproducible.
    """
    rng0 = np.random.Generator(np.random.Philox(key=cfg.seed, counter=[0, 0, 1, 0]))
    x0, y0 = sampler(rng0, cfg.n_agents)
    e = AgentEnsemble(x=x0, y=y0, seed=cfg.seed)
    n_steps = int(round(cfg.t_final / cfg.dt))
    wanted = sorted(output_times) if output_times is not None else [cfg.t_final]
    traj = ParticleTrajectory()

    def snapshot(ens: AgentEnsemble):
        traj.times.append(ens.time)
        traj.snapshots.append(replace(ens, x=ens.x.copy(), y=ens.y.copy()))

    next_out = 0
    while next_out < len(wanted) and wanted[next_out] <= e.time + 0.25 * cfg.dt:
        snapshot(e)
        next_out += 1
    for _ in range(n_steps):
        e = step(e, p, v, cfg)
        while next_out < len(wanted) and wanted[next_out] <= e.time + 0.25 * cfg.dt:
            snapshot(e)
            next_out += 1
    traj.final = e
    return traj


def histogram(
    e: AgentEnsemble, x_edges: np.ndarray, y_edges: np.ndarray
) -> np.ndarray:
    """Mass-normalized configuration-wealth histogram (a grid density estimate)."""
    x_edges = np.asarray(x_edges, dtype=float)
    y_edges = np.asarray(y_edges, dtype=float)
    if np.any(np.diff(x_edges) <= 0) or np.any(np.diff(y_edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    counts, _, _ = np.histogram2d(e.x, e.y, bins=(x_edges, y_edges))
    areas = np.outer(np.diff(x_edges), np.diff(y_edges))
    return counts / (e.n_agents * areas)


def wealth_histogram(e: AgentEnsemble, y_edges: np.ndarray) -> np.ndarray:
    """Wealth-marginal density estimate, unit mass over the binned range."""
    counts, _ = np.histogram(e.y, bins=y_edges)
    return counts / (e.n_agents * np.diff(y_edges))
