"""Tour of the closed-form economy.

Walks one menu-cost monopolist through its profit function, the flexible
optimum, the loss from a stuck price, and the comparative statics that tie
expected output to the width of the inaction band.
"""

import numpy as np

from menucost import (
    ModelParams,
    band_halfwidth,
    comparative_statics,
    disturbance_free_output,
    optimal_output,
    optimal_price,
    passthrough_slope,
    profit_gain_flexible,
    profit_gain_sticky,
    sticky_price,
    theta,
)

p = ModelParams(alpha=10, beta=1, a=1, b=1, c=0.5, gamma=1, sigma=1)

print("The economy: demand Y = 10 - P + u, cost C(Y) = 1 + Y + 0.5 Y^2, menu cost 1")
print(f"  sticky price        P^ = {sticky_price(p):.4f}")
print(f"  expected output     Y* = {disturbance_free_output(p):.4f}")
print(f"  loss coefficient theta = {theta(p):.4f}")
print(f"  pass-through     dP/du = {passthrough_slope(p):.4f}")
print(f"  band half-width      h = {band_halfwidth(p):.4f}")

print("\nThe price response to a shock u = 1:")
print(f"  optimal price moves {sticky_price(p):.3f} -> {optimal_price(p, 1.0):.4f}")
print(f"  optimal output moves {disturbance_free_output(p):.3f} -> {optimal_output(p, 1.0):.4f}")

print("\nProfit accounting at u = 1:")
flex = profit_gain_flexible(p, 1.0)
stick = profit_gain_sticky(p, 1.0)
print(f"  gain if the price adjusts:      {flex:.4f}")
print(f"  gain if the price stays put:    {stick:.4f}")
print(f"  loss from not adjusting:        {flex - stick:.4f}  (= theta * u^2 = {theta(p):.4f})")

print("\nThe quadratic-loss identity on a grid of shocks:")
for u in np.linspace(-2, 2, 5):
    loss = profit_gain_flexible(p, u) - profit_gain_sticky(p, u)
    print(f"  u = {u:+.1f}   loss = {loss:.5f}   theta*u^2 = {theta(p) * u * u:.5f}")

print("\nComparative statics (the sign pattern -, -, -, + is the whole point):")
cs = comparative_statics(p)
print(f"  d theta / d beta = {cs.dtheta_dbeta:+.5f}")
print(f"  d h / d theta    = {cs.dh_dtheta:+.5f}")
print(f"  d Y / d beta     = {cs.dY_dbeta:+.5f}")
print(f"  d h / d beta     = {cs.dh_dbeta:+.5f}  (chain rule: {cs.dh_dtheta * cs.dtheta_dbeta:+.5f})")

print("\nSo a demand shift that raises expected output narrows the inaction band:")
for beta in (1.5, 1.0, 0.5):
    q = ModelParams(alpha=10, beta=beta, a=1, b=1, c=0.5, gamma=1, sigma=1)
    print(
        f"  beta = {beta:.1f}:  Y* = {disturbance_free_output(q):6.3f}   "
        f"h = {band_halfwidth(q):6.4f}"
    )
