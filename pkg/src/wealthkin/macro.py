"""Closed hydrodynamic system for the agent density and local mean wealth.

The fast-trading closure replaces the kinetic density by the local
equilibrium at the constitutive second moment, leaving two fields: the
agent density rho, advected conservatively by the equilibrium-averaged
velocity U0, and the mean wealth, driven by the first three velocity
moments U0, U1, U2 of the equilibrium distribution.

Two wealth discretizations are provided. 'centered' treats the
nonconservative products with centered differences (one-sided at the
boundary cells) and explicit Euler, the generic choice for arbitrary
velocity factors. 'conservative' uses the algebraically equivalent
conservative form valid whenever the wealth factor of the velocity is
constant (then U1 = U0*u1 and the wealth equation collapses to advection
of rho*u1 by U0); it shares the upwind machinery of the density update,
which makes kinetic-macro comparisons free of scheme mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .equilibrium import gibbs_closed_form
from .errors import CFLError, DivergentIntegralError
from .grids import XGrid
from .model import ModelParams, VelocityField

#: Mean-wealth floor; the wealth equation is singular at zero mean wealth.
UPSILON_FLOOR = 1e-8
#: Cells below this density keep their wealth frozen.
VACUUM_THRESHOLD = 1e-12


@dataclass(frozen=True)
class FluxCoefficients:
    """Equilibrium velocity moments ``U_k = integral V G y^k dy`` per cell."""

    u0: np.ndarray
    u1: np.ndarray
    u2: np.ndarray


@dataclass
class MacroState:
    x_grid: XGrid
    rho: np.ndarray
    upsilon1: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.upsilon1 = np.asarray(self.upsilon1, dtype=float)
        n = self.x_grid.n_cells
        if self.rho.shape != (n,) or self.upsilon1.shape != (n,):
            raise ValueError("field shapes do not match the grid")
        if np.any(self.rho < 0.0):
            raise ValueError("agent density must be nonnegative")
        if np.any(self.upsilon1[self.rho > VACUUM_THRESHOLD] <= 0.0):
            raise ValueError("mean wealth must be positive where agents are present")

    def mass(self) -> float:
        return self.x_grid.quadrature(self.rho)

    def copy(self) -> "MacroState":
        return MacroState(self.x_grid, self.rho.copy(), self.upsilon1.copy(), self.time)


def _psi_moment(v: VelocityField, upsilon1: float, kappa: float, k: int) -> float:
    """``integral psi(y) y^k`` against the manifold equilibrium at ``upsilon1``."""
    g = gibbs_closed_form(upsilon1, kappa)
    if k >= g.alpha:
        raise DivergentIntegralError(
            f"velocity moment of order {k} diverges for shape alpha={g.alpha}"
        )
    val, _ = quad(
        lambda y: v.psi(y) * y**k * g.pdf(y),
        0.0,
        np.inf,
        epsabs=0.0,
        epsrel=1e-10,
        limit=400,
    )
    return float(val)


def flux_coefficients(
    x: np.ndarray, upsilon1: np.ndarray, v: VelocityField, kappa: float
) -> FluxCoefficients:
    """Velocity moments at the given points, second moment on the manifold.

    Closed form when the wealth factor is constant; otherwise adaptive
    quadrature against the inverse-Gamma equilibrium, relative error 1e-8.
    """
    x = np.asarray(x, dtype=float)
    upsilon1 = np.asarray(upsilon1, dtype=float)
    phi = v.v0 * v.phi(x)
    if v.psi_kind == "one":
        u0 = phi
        u1 = phi * upsilon1
        u2 = phi * (1.0 + kappa) / kappa * upsilon1**2
        return FluxCoefficients(u0=u0, u1=u1, u2=u2)
    moments = np.array(
        [
            [_psi_moment(v, float(u), kappa, k) for k in (0, 1, 2)]
            for u in upsilon1
        ]
    )
    return FluxCoefficients(
        u0=phi * moments[:, 0], u1=phi * moments[:, 1], u2=phi * moments[:, 2]
    )


def characteristic_speed(s: MacroState, p: ModelParams, v: VelocityField) -> float:
    """CFL speed estimate: ``max|U0| + max|dU1/du1|`` over the cells."""
    if v.is_zero:
        return 0.0
    x = s.x_grid.centers
    u1 = np.maximum(s.upsilon1, UPSILON_FLOOR)
    fc = flux_coefficients(x, u1, v, p.kappa)
    delta = 1e-4 * np.maximum(u1, UPSILON_FLOOR)
    fc_plus = flux_coefficients(x, u1 + delta, v, p.kappa)
    du1 = np.abs(fc_plus.u1 - fc.u1) / delta
    return float(np.max(np.abs(fc.u0)) + np.max(du1))


def _face_u0(s: MacroState, p: ModelParams, v: VelocityField) -> np.ndarray:
    faces = s.x_grid.faces
    if v.psi_kind == "one":
        return v.v0 * v.phi(faces)
    u1f = np.empty(faces.size)
    u1f[1:-1] = 0.5 * (s.upsilon1[:-1] + s.upsilon1[1:])
    u1f[0], u1f[-1] = s.upsilon1[0], s.upsilon1[-1]
    u1f = np.maximum(u1f, UPSILON_FLOOR)
    fc = flux_coefficients(faces, u1f, v, p.kappa)
    return fc.u0


def _upwind_flux(face_speed: np.ndarray, cell_values: np.ndarray) -> np.ndarray:
    flux = np.zeros(face_speed.size)
    up = np.maximum(face_speed[1:-1], 0.0)
    down = np.minimum(face_speed[1:-1], 0.0)
    flux[1:-1] = up * cell_values[:-1] + down * cell_values[1:]
    return flux  # boundary faces carry no flux: the velocity vanishes there


def step(
    s: MacroState,
    p: ModelParams,
    v: VelocityField,
    dt: float,
    scheme: str = "centered",
) -> tuple[MacroState, int]:
    """One explicit step; returns the new state and the number of floor hits."""
    if scheme not in ("centered", "conservative"):
        raise ValueError(f"unknown scheme {scheme!r}")
    speed = characteristic_speed(s, p, v)
    if speed > 0.0 and dt > 0.9 * s.x_grid.dx / speed * (1.0 + 1e-12):
        raise CFLError(
            f"dt={dt} exceeds the stability limit {0.9 * s.x_grid.dx / speed:.3e}"
        )
    dx = s.x_grid.dx
    u0_face = _face_u0(s, p, v)
    rho_flux = _upwind_flux(u0_face, s.rho)
    rho_new = s.rho - (dt / dx) * np.diff(rho_flux)

    active = s.rho > VACUUM_THRESHOLD
    floor_hits = 0
    if scheme == "conservative":
        if v.psi_kind != "one":
            raise ValueError("conservative wealth update requires a constant wealth factor")
        m = s.rho * s.upsilon1
        m_flux = _upwind_flux(u0_face, m)
        m_new = m - (dt / dx) * np.diff(m_flux)
        u1_new = s.upsilon1.copy()
        live = rho_new > VACUUM_THRESHOLD
        u1_new[live] = m_new[live] / rho_new[live]
    else:
        fc = flux_coefficients(
            s.x_grid.centers, np.maximum(s.upsilon1, UPSILON_FLOOR), v, p.kappa
        )
        g0 = np.gradient(s.rho * fc.u0, dx)
        g1 = np.gradient(s.rho * fc.u1, dx)
        g2 = np.gradient(s.rho * fc.u2, dx)
        rhs = (
            p.kappa / (2.0 * s.upsilon1) * g2
            - p.kappa * g1
            - 0.5 * (1.0 - p.kappa) * s.upsilon1 * g0
        )
        u1_new = s.upsilon1.copy()
        u1_new[active] = s.upsilon1[active] - dt * rhs[active] / s.rho[active]
    low = active & (u1_new < UPSILON_FLOOR)
    floor_hits = int(np.count_nonzero(low))
    u1_new[low] = UPSILON_FLOOR
    return MacroState(s.x_grid, rho_new, u1_new, s.time + dt), floor_hits


@dataclass
class MacroTrajectory:
    times: list[float] = field(default_factory=list)
    rho: list[np.ndarray] = field(default_factory=list)
    upsilon1: list[np.ndarray] = field(default_factory=list)
    max_mass_drift: float = 0.0
    floor_events: int = 0
    final: MacroState | None = None


def run(
    init: MacroState,
    p: ModelParams,
    v: VelocityField,
    t_final: float,
    dt: float,
    output_times: list[float] | None = None,
    scheme: str = "centered",
) -> MacroTrajectory:
    """March the hydrodynamic system to ``t_final`` with snapshots."""
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be an integer number of steps")
    wanted = sorted(output_times) if output_times is not None else [t_final]
    traj = MacroTrajectory()
    state = init.copy()
    mass0 = state.mass()

    def snapshot(st: MacroState):
        traj.times.append(st.time)
        traj.rho.append(st.rho.copy())
        traj.upsilon1.append(st.upsilon1.copy())

    next_out = 0
    while next_out < len(wanted) and wanted[next_out] <= state.time + 0.25 * dt:
        snapshot(state)
        next_out += 1
    for _ in range(n_steps):
        state, hits = step(state, p, v, dt, scheme=scheme)
        traj.floor_events += hits
        drift = abs(state.mass() - mass0) / mass0 if mass0 > 0 else 0.0
        traj.max_mass_drift = max(traj.max_mass_drift, drift)
        while next_out < len(wanted) and wanted[next_out] <= state.time + 0.25 * dt:
            snapshot(state)
            next_out += 1
    traj.final = state
    return traj
