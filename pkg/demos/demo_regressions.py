"""Fixed-effects regressions over a synthetic panel.

Runs the pooled small-change regressions (baseline, with controls, with the
9-ending dummy, regular prices only), one per-category preset, and the
per-product rollup, printing the volume coefficient with clustered errors.
"""

import os
import tempfile

from menucost import presets, regress
from menucost.analyze import run_analysis
from menucost.io import read_meta, read_table
from menucost.synth import SynthConfig, write_panel

cfg = SynthConfig(n_stores=15, n_products=100, n_weeks=250, seed=123)

with tempfile.TemporaryDirectory() as td:
    data_dir = os.path.join(td, "data")
    adir = os.path.join(td, "analysis")
    info = write_panel(cfg, data_dir)
    run_analysis(info["movement"], adir, meta_path=info["meta"],
                 stores_path=info["stores"], calendar_path=info["calendar"])
    data = presets.load_event_dataset(adir, meta_path=info["meta"], stores_path=info["stores"])
    print(f"event-level dataset: {len(data)} price changes, "
          f"{data['small'].mean():.1%} small\n")

    print("pooled small-change regressions (clustered by product):")
    for name in ("pooled_baseline", "pooled_controls", "pooled_nine_ending", "pooled_regular_only"):
        preset = presets.get_preset(name)
        res = regress.fit(data, preset.spec)
        coef = res.coefficients["ln(avg_volume)"]
        se = res.std_errors["ln(avg_volume)"]
        note = f" (dropped: {', '.join(res.dropped_columns)})" if res.dropped_columns else ""
        print(f"  {name}:  ln(volume) = {coef:+.4f} ({se:.4f}) "
              f"{regress.stars(res.tstat('ln(avg_volume)'))}  n = {res.n_obs}{note}")

    print("\nper-category baseline (first five categories):")
    results = regress.run_per_category(data, presets.get_preset("bycat_baseline").spec)
    for cat in list(results)[:5]:
        r = results[cat]
        if isinstance(r, str):
            print(f"  category {cat}: {r}")
        else:
            coef = r.coefficients["ln(avg_volume)"]
            print(f"  category {cat}: {coef:+.4f} ({r.std_errors['ln(avg_volume)']:.4f}) "
                  f"{regress.stars(r.tstat('ln(avg_volume)'))}  n = {r.n_obs}")

    print("\nvolume vs revenue horse race (one category):")
    cat0 = data[data["category"] == data["category"].dropna().iloc[0]]
    both = regress.fit(cat0, presets.get_preset("bycat_volume_revenue").spec)
    for term, est in both.coefficients.items():
        print(f"  {term}: {est:+.4f} ({both.std_errors[term]:.4f})")

    print("\nper-product regressions (share of small changes on volume, by store):")
    stats = read_table(os.path.join(adir, "product_store_stats.csv"))
    meta = read_meta(info["meta"])
    per_upc, rollup = regress.per_product_regressions(stats, meta, min_stores=10)
    print(rollup.head(6).to_string(index=False, float_format=lambda v: f"{v:.3f}"))
