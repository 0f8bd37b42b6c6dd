"""Model constants, the risk-averse strategy, the quadratic trading cost, and the velocity catalog.

Every solver in the library pulls its coefficients from here. An agent
holding wealth ``y`` in a market with mean wealth ``u1`` and second moment
``u2`` trades at rate ``a = d*u2/(u2 - u1**2)`` (the less uncertain the
market, the more it trades) toward the market-dependent optimum
``-b/a``, with ``b = -(1+kappa)*d*u1`` encoding the risk level ``1/kappa``
the population tolerates at equilibrium.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateVarianceError, OutOfDomainError

#: Moment pairs with relative variance below this floor are rejected: the
#: trading rate diverges there and downstream implicit solves become
#: ill-conditioned.
VARIANCE_FLOOR = 1e-12

PHI_KINDS = ("zero", "sine_bump", "compact_bump")
PSI_KINDS = ("one", "saturating")


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the model.

    d : variance rate of the multiplicative volatility (the noise amplitude
        in the wealth SDE is ``sqrt(2*d)*y``).
    kappa : target inverse risk level; the equilibrium variation coefficient
        of wealth is ``1/kappa``. Must be positive for the equilibrium
        variance to be finite.
    epsilon : scale separation between trading and configuration motion;
        trading is the fast process.
    """

    d: float
    kappa: float
    epsilon: float = 1.0

    def __post_init__(self):
        if not (self.d > 0.0):
            raise ValueError(f"d must be positive, got {self.d}")
        if not (self.kappa > 0.0):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not (self.epsilon > 0.0):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class MomentPair:
    """First two wealth moments (mean, second moment) of a market."""

    upsilon1: float
    upsilon2: float

    def __post_init__(self):
        if not (self.upsilon1 > 0.0):
            raise ValueError(f"upsilon1 must be positive, got {self.upsilon1}")
        if not (self.upsilon2 > 0.0) or not math.isfinite(self.upsilon2):
            raise ValueError(f"upsilon2 must be positive and finite, got {self.upsilon2}")
        if self.variance <= VARIANCE_FLOOR * self.upsilon1**2:
            raise DegenerateVarianceError(
                f"wealth variance {self.variance:.3e} below floor for mean {self.upsilon1:.3e}"
            )

    @property
    def variance(self) -> float:
        return self.upsilon2 - self.upsilon1**2

    @property
    def variation_ratio(self) -> float:
        """Dimensionless market uncertainty, variance over squared mean."""
        return self.variance / self.upsilon1**2


@dataclass(frozen=True)
class CostFunction:
    """Quadratic trading cost ``0.5*a*y**2 + b*y + c`` with zero minimum value.

    The offset ``c`` is pinned to ``b**2/(2a)`` so the cost vanishes at the
    optimum ``y = -b/a``; the constant plays no role in the drift.
    """

    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0.0):
            raise ValueError(f"trading rate a must be positive, got {self.a}")

    @property
    def c(self) -> float:
        return self.b**2 / (2.0 * self.a)

    @property
    def optimum(self) -> float:
        return -self.b / self.a

    def value(self, y):
        return 0.5 * self.a * (y + self.b / self.a) ** 2

    def drift(self, y):
        """Steepest-descent action, the negative wealth-gradient of the cost."""
        return -(self.a * y + self.b)


def strategy_a(m: MomentPair, p: ModelParams) -> float:
    """Risk-averse trading rate ``d*u2/(u2 - u1**2)``; always exceeds ``d``."""
    if m.variance <= VARIANCE_FLOOR * m.upsilon1**2:
        raise DegenerateVarianceError(
            f"variance {m.variance:.3e} too small relative to mean {m.upsilon1:.3e}"
        )
    return p.d * m.upsilon2 / m.variance


def strategy_b(upsilon1: float, p: ModelParams) -> float:
    """Linear cost coefficient ``-(1+kappa)*d*u1``; nonpositive for u1 >= 0."""
    if upsilon1 < 0.0:
        raise ValueError(f"upsilon1 must be nonnegative, got {upsilon1}")
    return -(1.0 + p.kappa) * p.d * upsilon1


def cost_function(m: MomentPair, p: ModelParams) -> CostFunction:
    """Cost function an agent faces in a market with moments ``m``."""
    return CostFunction(a=strategy_a(m, p), b=strategy_b(m.upsilon1, p))


def best_reply_drift(y, m: MomentPair, p: ModelParams):
    """Drift ``-(a*y + b)`` of an agent descending its cost at frozen market moments."""
    return -(strategy_a(m, p) * y + strategy_b(m.upsilon1, p))


def cost_eval(y, m: MomentPair, p: ModelParams):
    """Trading cost at wealth ``y``; zero at the shifted-parabola minimum."""
    return cost_function(m, p).value(y)


@dataclass(frozen=True)
class VelocityField:
    """Separable configuration-space velocity ``V(x, y) = v0 * phi(x) * psi(y)``.

    The configuration factor ``phi`` vanishes at both endpoints of [0, 1],
    so no boundary condition on the density is ever needed; ``psi`` is
    bounded on [0, inf) so flux-coefficient integrals up to the second
    wealth moment converge whenever the equilibrium second moment does.

    phi_kind : 'zero', 'sine_bump' (``sin(mode*pi*x)``), or 'compact_bump'
        (a smooth bump supported on ``center +- width/2``).
    psi_kind : 'one' or 'saturating' (``y/(1+y)``).
    """

    phi_kind: str = "sine_bump"
    psi_kind: str = "one"
    v0: float = 1.0
    mode: int = 1
    center: float = 0.5
    width: float = 1.0

    def __post_init__(self):
        if self.phi_kind not in PHI_KINDS:
            raise ValueError(f"unknown phi_kind {self.phi_kind!r}; choose from {PHI_KINDS}")
        if self.psi_kind not in PSI_KINDS:
            raise ValueError(f"unknown psi_kind {self.psi_kind!r}; choose from {PSI_KINDS}")
        if self.phi_kind == "sine_bump" and (self.mode < 1 or self.mode != int(self.mode)):
            raise ValueError("sine_bump mode must be a positive integer")
        if self.phi_kind == "compact_bump":
            half = 0.5 * self.width
            if not (0.0 < self.width and self.center - half >= 0.0 and self.center + half <= 1.0):
                raise ValueError("compact_bump support must lie inside [0, 1]")

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        if self.phi_kind == "zero":
            return np.zeros_like(x)
        if self.phi_kind == "sine_bump":
            return np.sin(self.mode * np.pi * x)
        s = 2.0 * (x - self.center) / self.width
        out = np.zeros_like(x)
        inside = np.abs(s) < 1.0
        si = s[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - si**2))
        return out

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        if self.psi_kind == "one":
            return np.ones_like(y)
        return y / (1.0 + y)

    def __call__(self, x, y):
        return self.v0 * self.phi(x) * self.psi(y)

    @property
    def is_zero(self) -> bool:
        return self.phi_kind == "zero" or self.v0 == 0.0


def velocity_eval(v: VelocityField, x, y):
    """Velocity at a configuration/wealth point; the point must lie in [0, 1]."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0.0) or np.any(xa > 1.0):
        raise OutOfDomainError(f"configuration point outside [0, 1]: {x}")
    out = v(xa, y)
    if np.isscalar(x) and np.isscalar(y):
        return float(out)
    return out
