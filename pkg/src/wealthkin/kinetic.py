"""Kinetic solver for the scaled configuration-wealth Fokker-Planck equation.

Evolves a cell-averaged density f(x, y) under slow configuration transport
and fast wealth exchange, split per step: first-order upwind transport in x
(no flux through the boundary, where the velocity vanishes), then a
backward-Euler solve of the trading operator per x-cell with coefficients
frozen from the start-of-step local moments. The implicit collision solve
is unconditionally stable, so the time step is limited only by the
transport CFL condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._chang_cooper import build_collision_operator
from .errors import CFLError
from .grids import WealthGrid, XGrid
from .model import ModelParams, MomentPair, VelocityField, strategy_a, strategy_b

#: Cells with less agent density than this are skipped by the collision step.
VACUUM_THRESHOLD = 1e-12


@dataclass(frozen=True)
class MomentField:
    """Per-cell agent density and mean wealth moments, with a vacuum mask."""

    rho: np.ndarray
    upsilon1: np.ndarray
    upsilon2: np.ndarray
    vacuum: np.ndarray

    def pair(self, i: int) -> MomentPair:
        if self.vacuum[i]:
            raise ValueError(f"cell {i} is vacuum; no moment pair defined")
        return MomentPair(float(self.upsilon1[i]), float(self.upsilon2[i]))


@dataclass
class KineticState:
    x_grid: XGrid
    y_grid: WealthGrid
    f: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (self.x_grid.n_cells, self.y_grid.n_nodes):
            raise ValueError(
                f"density shape {self.f.shape} does not match grids "
                f"({self.x_grid.n_cells}, {self.y_grid.n_nodes})"
            )

    def mass(self) -> float:
        return float(np.sum(self.f @ self.y_grid.cell_widths) * self.x_grid.dx)

    def copy(self) -> "KineticState":
        return KineticState(self.x_grid, self.y_grid, self.f.copy(), self.time)


def moments(s: KineticState) -> MomentField:
    """Per-cell quadrature of f against 1, y, y^2; cells below threshold are vacuum."""
    w = s.y_grid.cell_widths
    y = s.y_grid.nodes
    rho = s.f @ w
    vacuum = rho < VACUUM_THRESHOLD
    safe_rho = np.where(vacuum, 1.0, rho)
    u1 = (s.f @ (y * w)) / safe_rho
    u2 = (s.f @ (y**2 * w)) / safe_rho
    u1 = np.where(vacuum, np.nan, u1)
    u2 = np.where(vacuum, np.nan, u2)
    return MomentField(rho=rho, upsilon1=u1, upsilon2=u2, vacuum=vacuum)


def collision_apply(
    f_slice: np.ndarray, m: MomentPair | None, p: ModelParams, grid: WealthGrid
) -> np.ndarray:
    """Action of the trading operator on one wealth profile; zero for vacuum cells."""
    if m is None:
        return np.zeros_like(f_slice)
    op = build_collision_operator(strategy_a(m, p), strategy_b(m.upsilon1, p), p.d, grid)
    return op.apply(np.asarray(f_slice, dtype=float))


def collision_step(
    f_slice: np.ndarray,
    m: MomentPair | None,
    p: ModelParams,
    dt_over_eps: float,
    grid: WealthGrid,
) -> np.ndarray:
    """Backward-Euler trading update with coefficients frozen at ``m``."""
    f_slice = np.asarray(f_slice, dtype=float)
    if m is None or dt_over_eps == 0.0:
        return f_slice.copy()
    op = build_collision_operator(strategy_a(m, p), strategy_b(m.upsilon1, p), p.d, grid)
    return op.implicit_step(f_slice, dt_over_eps)


def transport_cfl(v: VelocityField, s: KineticState) -> float:
    """Largest stable transport step, ``0.9 dx / max|V|``."""
    if v.is_zero:
        return np.inf
    vmax = float(
        np.max(np.abs(v(s.x_grid.faces[:, None], s.y_grid.nodes[None, :])))
    )
    if vmax == 0.0:
        return np.inf
    return 0.9 * s.x_grid.dx / vmax


def transport_step(s: KineticState, v: VelocityField, dt: float) -> KineticState:
    """First-order upwind advection of every wealth row; exactly conservative."""
    if v.is_zero:
        return KineticState(s.x_grid, s.y_grid, s.f.copy(), s.time + dt)
    if dt > transport_cfl(v, s) * (1.0 + 1e-12):
        raise CFLError(
            f"dt={dt} exceeds the transport stability limit {transport_cfl(v, s):.3e}"
        )
    vel = v(s.x_grid.faces[:, None], s.y_grid.nodes[None, :])  # (nx+1, ny)
    flux = np.zeros_like(vel)
    up = np.maximum(vel[1:-1, :], 0.0)
    down = np.minimum(vel[1:-1, :], 0.0)
    flux[1:-1, :] = up * s.f[:-1, :] + down * s.f[1:, :]
    # boundary faces keep zero flux: the velocity factor vanishes there
    fn = s.f - (dt / s.x_grid.dx) * (flux[1:, :] - flux[:-1, :])
    return KineticState(s.x_grid, s.y_grid, fn, s.time + dt)


def _collision_sweep(
    f: np.ndarray, mf: MomentField, p: ModelParams, tau: float, grid: WealthGrid
) -> np.ndarray:
    out = f.copy()
    for i in range(f.shape[0]):
        if mf.vacuum[i]:
            continue
        op = build_collision_operator(
            strategy_a(mf.pair(i), p), strategy_b(float(mf.upsilon1[i]), p), p.d, grid
        )
        out[i] = op.implicit_step(f[i], tau)
    return out


def hierarchy_rhs(s: KineticState, p: ModelParams) -> np.ndarray:
    """Per-cell trading sources of the first three wealth moments (unscaled).

    Row layout: (0, -(a u1 + b) rho, (2(d-a) u2 - 2 b u1) rho); identically
    zero in vacuum cells and on the constitutive manifold.
    """
    mf = moments(s)
    out = np.zeros((s.x_grid.n_cells, 3))
    for i in range(s.x_grid.n_cells):
        if mf.vacuum[i]:
            continue
        m = mf.pair(i)
        a = strategy_a(m, p)
        b = strategy_b(m.upsilon1, p)
        out[i, 1] = -(a * m.upsilon1 + b) * mf.rho[i]
        out[i, 2] = (2.0 * (p.d - a) * m.upsilon2 - 2.0 * b * m.upsilon1) * mf.rho[i]
    return out


@dataclass
class KineticTrajectory:
    times: list[float] = field(default_factory=list)
    moment_fields: list[MomentField] = field(default_factory=list)
    states: list[KineticState] = field(default_factory=list)
    max_mass_drift: float = 0.0
    final: KineticState | None = None


def evolve(
    s: KineticState,
    p: ModelParams,
    v: VelocityField,
    t_final: float,
    dt: float,
    splitting: str = "lie",
    output_times: list[float] | None = None,
    keep_states: bool = False,
) -> KineticTrajectory:
    """Run the split scheme to ``t_final``; snapshots at the requested times.

    ``splitting`` is 'lie' (transport then collision) or 'strang' (half
    transport on either side of the collision solve). Trading coefficients
    are frozen per step from the start-of-step moments; total mass drift is
    tracked against the initial mass and reported in the trajectory.
    """
    if splitting not in ("lie", "strang"):
        raise ValueError(f"unknown splitting {splitting!r}")
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    cfl = transport_cfl(v, s)
    if splitting == "strang":
        cfl = 2.0 * cfl
    if dt > cfl * (1.0 + 1e-12):
        raise CFLError(f"dt={dt} exceeds the transport stability limit {cfl:.3e}")

    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer number of steps")
    wanted = sorted(output_times) if output_times is not None else [t_final]

    traj = KineticTrajectory()
    state = s.copy()
    mass0 = state.mass()
    tau = dt / p.epsilon

    def snapshot(st: KineticState):
        traj.times.append(st.time)
        traj.moment_fields.append(moments(st))
        if keep_states:
            traj.states.append(st.copy())

    next_out = 0
    while next_out < len(wanted) and wanted[next_out] <= state.time + 0.25 * dt:
        snapshot(state)
        next_out += 1

    for _ in range(n_steps):
        mf = moments(state)
        if splitting == "lie":
            state = transport_step(state, v, dt)
            state.f = _collision_sweep(state.f, mf, p, tau, state.y_grid)
        else:
            state = transport_step(state, v, 0.5 * dt)
            state.f = _collision_sweep(state.f, mf, p, tau, state.y_grid)
            state = transport_step(state, v, 0.5 * dt)
            state.time = round(state.time / dt) * dt  # guard against drift
        drift = abs(state.mass() - mass0) / mass0
        traj.max_mass_drift = max(traj.max_mass_drift, drift)
        while next_out < len(wanted) and wanted[next_out] <= state.time + 0.25 * dt:
            snapshot(state)
            next_out += 1
    traj.final = state
    return traj


def state_from_profiles(
    x_grid: XGrid,
    y_grid: WealthGrid,
    rho: np.ndarray,
    profile: np.ndarray,
) -> KineticState:
    """Assemble f(x, y) = rho(x) * q(y | x) with each row normalized to unit mass.

    ``profile`` is either one wealth profile shared by all cells or one per
    cell; rows are renormalized so the cell densities integrate to ``rho``.
    """
    rho = np.asarray(rho, dtype=float)
    q = np.asarray(profile, dtype=float)
    if q.ndim == 1:
        q = np.broadcast_to(q, (x_grid.n_cells, y_grid.n_nodes))
    norms = q @ y_grid.cell_widths
    f = rho[:, None] * q / norms[:, None]
    return KineticState(x_grid, y_grid, f, 0.0)
