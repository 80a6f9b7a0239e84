"""Demand-slope sweep: output up, band down, adjustments up.

Re-solves the economy across a range of demand slopes and simulates each
optimal policy against a common shock path.  Ordered by rising expected
output: the band half-width (in shock units) falls strictly and the
adjustment rate rises.

One honest wrinkle worth seeing in numbers: the *cent* size of a price
change is pass-through x exit gap, and the pass-through slope rises faster
than the band narrows when only the demand slope moves.  So along this
sweep, higher-output economies adjust more often but by *larger* cent
amounts -- the per-firm volume channel in the synthetic panel generator
instead scales the whole market (see demo_scanner_pipeline.py), which is
what makes high-volume products adjust both more often and by fewer cents.
"""

from menucost import ModelParams, beta_sweep_experiment

base = ModelParams(alpha=10, beta=1, a=1, b=1, c=0.5, gamma=1.0, sigma=0.005)
betas = [4.5, 3.0, 2.0, 1.2, 0.7, 0.4, 0.22, 0.12]

table = beta_sweep_experiment(base, betas, horizon=300_000, seed=37, small_threshold=0.35)
cols = ["beta", "y_star", "theta", "h_hat", "adjustment_rate", "mean_abs_change", "share_small"]
print(table[cols].to_string(index=False, float_format=lambda v: f"{v:.4f}"))

print("\nreading the table bottom-up (output rising):")
print("  h_hat falls strictly, the adjustment rate rises -- the band story;")
print("  mean |dP| rises because pass-through outruns the narrowing band.")
