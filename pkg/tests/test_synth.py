"""Generator contracts: reproducibility, schema validity, mechanism wiring."""

import os

import numpy as np
import pandas as pd
import pytest

from menucost import presets, regress
from menucost.analyze import AnalyzeOptions, run_analysis
from menucost.io import load_movement, read_calendar, read_meta, read_stores
from menucost.model import ModelParams
from menucost.synth import SynthConfig, synth_panel, write_panel

SMALL = dict(n_stores=6, n_products=30, n_weeks=80, seed=7)


class TestConfig:
    def test_defaults_valid(self):
        cfg = SynthConfig()
        assert cfg.n_stores == 50 and cfg.n_products == 200 and cfg.n_weeks == 300

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            SynthConfig(n_stores=0)

    def test_rejects_infeasible_beta_range(self):
        with pytest.raises(ValueError, match="beta_range"):
            SynthConfig(beta_range=(0.5, 11.0))  # alpha/b = 10

    def test_rejects_degenerate_base(self):
        base = ModelParams(alpha=10, beta=1, a=1, b=1, c=0.5, gamma=0, sigma=0.01)
        with pytest.raises(ValueError):
            SynthConfig(base=base)


class TestGeneration:
    def test_reproducible(self):
        m1, meta1, s1, c1 = synth_panel(SynthConfig(**SMALL))
        m2, meta2, s2, c2 = synth_panel(SynthConfig(**SMALL))
        pd.testing.assert_frame_equal(m1, m2)
        pd.testing.assert_frame_equal(meta1, meta2)
        m3, _, _, _ = synth_panel(SynthConfig(**{**SMALL, "seed": 8}))
        assert not m1.equals(m3)

    def test_sorted_and_unique(self):
        movement, _, _, _ = synth_panel(SynthConfig(**SMALL))
        key = movement[["store", "upc", "week"]].to_numpy()
        assert (np.lexsort((key[:, 2], key[:, 1], key[:, 0])) == np.arange(len(key))).all()
        assert not movement.duplicated(["store", "upc", "week"]).any()

    def test_zero_weeks_are_missing_rows(self):
        cfg = SynthConfig(**SMALL)
        movement, _, _, _ = synth_panel(cfg)
        n_possible = cfg.n_stores * cfg.n_products * cfg.n_weeks
        assert len(movement) < n_possible
        assert (movement["units"] >= 1).all()

    def test_volume_near_target(self):
        movement, _, _, _ = synth_panel(SynthConfig(n_stores=15, n_products=80, n_weeks=150, seed=3))
        assert movement["units"].mean() == pytest.approx(10.0, rel=0.35)

    def test_mechanism_correlation(self):
        cfg = SynthConfig(n_stores=10, n_products=60, n_weeks=200, seed=11)
        movement, meta, _, _ = synth_panel(cfg)
        from menucost.analyze import analyze_frames

        out = analyze_frames(movement, meta)
        st = out["stats"]
        st = st[st["n_changes"] > 0]
        corr = np.corrcoef(np.log(st["avg_volume"]), st["n_small"] / st["n_changes"])[0, 1]
        assert corr > 0.25

    def test_sale_flags_present(self):
        movement, _, _, _ = synth_panel(SynthConfig(**SMALL))
        flags = set(movement["sale_flag"].unique())
        assert "S" in flags

    def test_nine_ending_bias(self):
        cfg = SynthConfig(**{**SMALL, "nine_ending_bias": 0.9})
        movement, _, _, _ = synth_panel(cfg)
        share_nine = (movement["price"] % 10 == 9).mean()
        base_share = (synth_panel(SynthConfig(**SMALL))[0]["price"] % 10 == 9).mean()
        assert share_nine > base_share + 0.3


class TestWritePanel:
    def test_files_parse_through_readers(self, tmp_path):
        cfg = SynthConfig(**SMALL)
        info = write_panel(cfg, tmp_path)
        df = load_movement(info["movement"])
        meta = read_meta(info["meta"])
        stores = read_stores(info["stores"])
        cal = read_calendar(info["calendar"])
        assert len(df) == info["rows"]
        assert set(df["upc"]).issubset(set(meta["upc"]))
        assert len(stores) == cfg.n_stores
        assert len(cal) == cfg.n_weeks
        # file round trip preserves the in-memory panel exactly
        mem, _, _, _ = synth_panel(cfg)
        pd.testing.assert_frame_equal(
            df.reset_index(drop=True),
            mem[df.columns].reset_index(drop=True),
            check_dtype=False,
        )

    def test_collapsed_store_and_ps_variation_kills_mechanism(self, tmp_path):
        cfg = SynthConfig(
            n_stores=12,
            n_products=60,
            n_weeks=200,
            seed=5,
            beta_range=(1.0, 1.0),
            store_sigma=0.0,
            ps_sigma=0.0,
        )
        info = write_panel(cfg, tmp_path / "data")
        adir = tmp_path / "analysis"
        run_analysis(info["movement"], adir, meta_path=info["meta"])
        df = presets.load_event_dataset(adir, meta_path=info["meta"])
        res = regress.fit(df, presets.get_preset("pooled_baseline").spec)
        assert abs(res.tstat("ln(avg_volume)")) < 2.0


class TestMechanismTables:
    """The qualitative patterns the empirical design is built to detect."""

    def test_per_product_majority_positive(self, mid_panel):
        from menucost.io import read_meta, read_table
        from menucost.regress import per_product_regressions

        stats = read_table(mid_panel["adir"] / "product_store_stats.csv")
        meta = read_meta(mid_panel["info"]["meta"])
        per_upc, rollup = per_product_regressions(stats, meta, min_stores=30)
        assert len(per_upc) >= 50
        assert (per_upc["coefficient"] > 0).mean() > 0.5
        assert (rollup["pct_positive"] > 0.5).mean() > 0.6

    def test_high_volume_tercile_has_more_small_mass(self, mid_panel):
        from menucost.io import read_table

        hist = read_table(mid_panel["adir"] / "histogram_cents.csv")
        mass = hist[hist["size"] <= 10].groupby("volume_group")["frequency"].sum()
        assert mass["high"] > mass["low"]

    def test_volume_revenue_correlation_strong(self, mid_panel):
        from menucost.io import read_table

        cats = read_table(mid_panel["adir"] / "category_summary.csv")
        assert (cats["corr_ln_volume_revenue"] > 0.5).all()
