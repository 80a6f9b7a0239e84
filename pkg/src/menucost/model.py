"""Closed forms for a lump-sum menu-cost monopolist with linear demand.

The firm faces demand Y = alpha - beta*P + u and cost C(Y) = a + b*Y + c*Y**2,
where u is a symmetric demand disturbance.  Because demand is linear, the
price elasticity is not constant, so the quadratic loss coefficient ``theta``
(the per-period profit loss from an unadjusted price is theta*u**2) depends on
the disturbance-free output level.  That link is what ties sales volume to the
width of the optimal symmetric adjustment band, and the comparative statics
exported here make the connection explicit:

    d theta / d beta < 0,   d h / d theta < 0,   d Y / d beta < 0,   d h / d beta > 0

so a demand shift that raises output narrows the inaction band.

All functions are pure and validate their parameters eagerly: outside the
admissible region (1 + c*beta > 0 for the second-order condition and
alpha - beta*b > 0 for positive output) the formulas silently produce garbage,
so invalid economies are rejected up front.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "ParameterError",
    "DomainError",
    "ModelParams",
    "ComparativeStatics",
    "profit",
    "optimal_price",
    "optimal_output",
    "disturbance_free_output",
    "sticky_price",
    "profit_gain_flexible",
    "profit_gain_sticky",
    "theta",
    "theta_of_output",
    "passthrough_slope",
    "band_halfwidth",
    "comparative_statics",
]


class ParameterError(ValueError):
    """An economy violates a structural restriction."""


class DomainError(ValueError):
    """A disturbance falls outside the admissible range."""


@dataclass(frozen=True)
class ModelParams:
    """One menu-cost economy.

    Parameters
    ----------
    alpha : demand intercept (units).
    beta : demand slope (units per price unit), > 0.
    a, b, c : fixed, linear, and quadratic cost coefficients; c > 0.
    gamma : lump-sum menu cost paid per price change.
    sigma : scale of one step of the driving random walk (sigma**2 is the
        per-step variance of the Bernoulli disturbance process).
    u_min, u_max : admissible disturbance range.  Defaults to
        +/- (alpha - beta*b) / 2, which keeps output strictly positive with a
        wide margin; override to taste.
    """

    alpha: float
    beta: float
    a: float = 0.0
    b: float = 0.0
    c: float = 1.0
    gamma: float = 0.0
    sigma: float = 0.0
    u_min: float | None = field(default=None)
    u_max: float | None = field(default=None)

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ParameterError(f"beta must be > 0, got {self.beta}")
        if self.c <= 0:
            raise ParameterError(f"c must be > 0, got {self.c}")
        if self.a < 0 or self.b < 0:
            raise ParameterError("cost coefficients a and b must be >= 0")
        if self.gamma < 0:
            raise ParameterError(f"gamma must be >= 0, got {self.gamma}")
        if self.sigma < 0:
            raise ParameterError(f"sigma must be >= 0, got {self.sigma}")
        if 1.0 + self.c * self.beta <= 0:
            raise ParameterError("second-order condition 1 + c*beta > 0 violated")
        if self.alpha - self.beta * self.b <= 0:
            raise ParameterError(
                f"alpha - beta*b must be > 0 for positive output, "
                f"got {self.alpha - self.beta * self.b}"
            )
        default_half_range = (self.alpha - self.beta * self.b) / 2.0
        if self.u_min is None:
            object.__setattr__(self, "u_min", -default_half_range)
        if self.u_max is None:
            object.__setattr__(self, "u_max", default_half_range)
        if not (self.u_min <= 0.0 <= self.u_max):
            raise ParameterError(
                f"disturbance range must bracket 0, got [{self.u_min}, {self.u_max}]"
            )

    def _check_u(self, u: float) -> None:
        if not (self.u_min <= u <= self.u_max):
            raise DomainError(
                f"disturbance u={u} outside admissible range "
                f"[{self.u_min}, {self.u_max}]"
            )


@dataclass(frozen=True)
class ComparativeStatics:
    """The four partial derivatives linking demand slope, output, and band width."""

    dtheta_dbeta: float
    dh_dtheta: float
    dY_dbeta: float
    dh_dbeta: float


def profit(p: ModelParams, price: float, u: float) -> float:
    """Profit price*Y - C(Y) at the demand realization Y = alpha - beta*price + u."""
    p._check_u(u)
    y = p.alpha - p.beta * price + u
    return price * y - (p.a + p.b * y + p.c * y * y)


def optimal_price(p: ModelParams, u: float) -> float:
    """Flexible-price optimum: the price equating marginal revenue and cost."""
    denom = 2.0 * p.beta * (1.0 + p.c * p.beta)
    base = (p.alpha + p.beta * (2.0 * p.c * p.alpha + p.b)) / denom
    slope = (1.0 + 2.0 * p.c * p.beta) / denom
    return base + slope * u


def optimal_output(p: ModelParams, u: float) -> float:
    """Output at the flexible-price optimum; equals alpha - beta*P*(u) + u."""
    denom = 2.0 * (1.0 + p.c * p.beta)
    return (p.alpha - p.beta * p.b) / denom + u / denom


def disturbance_free_output(p: ModelParams) -> float:
    """Optimal output at u = 0, the expected output of the economy."""
    return (p.alpha - p.beta * p.b) / (2.0 * (1.0 + p.c * p.beta))


def sticky_price(p: ModelParams) -> float:
    """The price the firm is stuck at: the optimum of the disturbance-free economy."""
    return (p.alpha + p.beta * (2.0 * p.c * p.alpha + p.b)) / (
        2.0 * p.beta * (1.0 + p.c * p.beta)
    )


def profit_gain_flexible(p: ModelParams, u: float) -> float:
    """Profit change when the disturbance moves 0 -> u and the price adjusts freely."""
    p._check_u(u)
    denom = 2.0 * p.beta * (1.0 + p.c * p.beta)
    return (p.alpha - p.beta * p.b) / denom * u + u * u / (2.0 * denom)


def profit_gain_sticky(p: ModelParams, u: float) -> float:
    """Profit change when the disturbance moves 0 -> u but the price stays put."""
    p._check_u(u)
    denom = 2.0 * p.beta * (1.0 + p.c * p.beta)
    return (p.alpha - p.beta * p.b) / denom * u - p.c * u * u


def theta(p: ModelParams) -> float:
    """Quadratic loss coefficient: not adjusting to a shock u costs theta*u**2."""
    one_2cb = 1.0 + 2.0 * p.c * p.beta
    return one_2cb * one_2cb / (4.0 * p.beta * (1.0 + p.c * p.beta))


def theta_of_output(p: ModelParams) -> float:
    """theta rewritten as disturbance-free output times a demand-side factor.

    Algebraically identical to :func:`theta`; the output form makes the
    volume channel visible: holding the bracketed factor fixed, the loss
    coefficient scales linearly with expected output.
    """
    one_2cb = 1.0 + 2.0 * p.c * p.beta
    factor = one_2cb * one_2cb / (2.0 * p.beta * (p.alpha - p.beta * p.b))
    return disturbance_free_output(p) * factor


def passthrough_slope(p: ModelParams) -> float:
    """dP*/du: converts a disturbance gap at adjustment into a price-change size."""
    return (1.0 + 2.0 * p.c * p.beta) / (2.0 * p.beta * (1.0 + p.c * p.beta))


def band_halfwidth(p: ModelParams) -> float:
    """Half-width of the optimal symmetric adjustment band, in disturbance units.

    h = sqrt(sigma) * (6*gamma/theta) ** 0.25.  Zero menu cost or a
    degenerate disturbance are meaningful limits and return 0 (adjust at
    every step, or never drift) rather than erroring.
    """
    if p.gamma == 0.0 or p.sigma == 0.0:
        return 0.0
    return math.sqrt(p.sigma) * (6.0 * p.gamma / theta(p)) ** 0.25


def comparative_statics(p: ModelParams) -> ComparativeStatics:
    """Closed-form partials of theta, output, and the band half-width in beta.

    Signs over the valid region: dtheta_dbeta < 0, dh_dtheta < 0,
    dY_dbeta < 0, dh_dbeta > 0, so higher expected output (via a lower
    demand slope) comes with a narrower band.  With gamma == 0 or
    sigma == 0 the band is identically zero and its partials are reported
    as 0.
    """
    one_2cb = 1.0 + 2.0 * p.c * p.beta
    one_cb = 1.0 + p.c * p.beta
    dtheta_dbeta = -one_2cb / (4.0 * p.beta**2 * one_cb**2)
    dY_dbeta = -(p.alpha * p.c + p.b) / (2.0 * one_cb**2)
    if p.gamma == 0.0 or p.sigma == 0.0:
        dh_dtheta = 0.0
        dh_dbeta = 0.0
    else:
        th = theta(p)
        dh_dtheta = -math.sqrt(p.sigma) * (6.0 * p.gamma) ** 0.25 / (4.0 * th**1.25)
        inner = p.gamma * p.beta * one_cb / one_2cb**2
        dh_dbeta = (
            (1.5) ** 0.25
            * p.gamma
            * math.sqrt(p.sigma)
            / (2.0 * one_2cb**3 * inner**0.75)
        )
    return ComparativeStatics(
        dtheta_dbeta=dtheta_dbeta,
        dh_dtheta=dh_dtheta,
        dY_dbeta=dY_dbeta,
        dh_dbeta=dh_dbeta,
    )
