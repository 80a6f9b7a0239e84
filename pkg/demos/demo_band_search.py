"""Brute-force verification of the optimal band.

Simulates the symmetric random-walk economy over a grid of candidate
half-widths and shows that the cost-minimizing band lands on the closed
form, that the menu-cost / flow-loss trade-off flips across the grid, and
that first-passage times behave like k^2.
"""

import numpy as np

from menucost import (
    BandPolicy,
    ModelParams,
    band_cost_profile,
    band_halfwidth,
    expected_hitting_time,
    inter_adjustment_intervals,
    passthrough_slope,
    theta,
)

p = ModelParams(alpha=10, beta=1, a=1, b=1, c=0.5, gamma=1.0, sigma=0.05)
h_hat = band_halfwidth(p)
print(f"economy: theta = {theta(p):.4f}, sigma = {p.sigma}, gamma = {p.gamma}")
print(f"closed-form band half-width: {h_hat:.5f}\n")

print("first-passage sanity: expected steps to exit a k-step band is k^2")
for k in (1, 2, 3, 5):
    analytic = expected_hitting_time(k)
    enum = expected_hitting_time(k, "enumerate")
    iv = inter_adjustment_intervals(
        ModelParams(alpha=10, beta=1, a=1, b=1, c=0.5, gamma=1, sigma=1.0),
        BandPolicy(float(k), passthrough_slope(p)),
        200_000,
        seed=k,
    )
    print(
        f"  k = {k}:  analytic {analytic:5.1f}   recurrence {enum:7.3f}   "
        f"simulated {iv.mean():7.3f}  (n = {len(iv)})"
    )

print("\ncost profile over a 21-point grid around the closed form:")
grid = np.linspace(0.2 * h_hat, 3.0 * h_hat, 21)
profile = band_cost_profile(p, grid, horizon=200_000, seed=11)
best_idx = profile["avg_cost_rate"].idxmin()
for _, row in profile.iloc[::4].iterrows():
    marker = "  <- argmin" if row.name == best_idx else ""
    print(
        f"  h = {row['halfwidth']:.4f}  menu {row['menu_cost_paid'] / 2e5:.5f}"
        f"  flow {row['flow_loss'] / 2e5:.5f}  total {row['avg_cost_rate']:.5f}{marker}"
    )
best = profile.loc[best_idx, "halfwidth"]
print(f"\nsimulated argmin h = {best:.5f} vs closed form {h_hat:.5f} "
      f"({100 * abs(best - h_hat) / h_hat:.1f}% off)")
print("narrow bands burn menu cost, wide bands burn misalignment flow; the")
print("closed form sits where the two costs trade off.")
