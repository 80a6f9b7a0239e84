"""Empirical procedures: hand-traced examples and structural properties."""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from menucost.stats import (
    BOUNCE,
    REGULAR,
    SALE,
    PriceChangeEvent,
    SmallChangeRule,
    average_sales_volume,
    category_summary,
    classify_small,
    compute_product_store_stats,
    decile_table,
    detect_price_changes,
    is_small_change,
    nine_ending,
    peak_weeks,
    producer_size,
    rolling_volume,
    sales_filter,
    size_histogram,
    small_change_mask,
    synchronization_features,
    volume_terciles,
)


def panel_from_rows(rows):
    df = pd.DataFrame(
        rows, columns=["store", "upc", "week", "price", "units", "sale_flag"]
    )
    df["pack_qty"] = 1
    df["margin_pct"] = 25.0
    return df


class TestAverageVolume:
    def test_gap_example(self):
        assert average_sales_volume({1: 5, 3: 7}) == pytest.approx(6.0)

    def test_single_week_guard(self):
        assert average_sales_volume({4: 10}) == pytest.approx(10.0)

    def test_contiguous_exceeds_observed_mean(self):
        # denominator last - first = n - 1 pushes the figure above the mean
        assert average_sales_volume({1: 2, 2: 2, 3: 2}) == pytest.approx(3.0)

    def test_empty_series(self):
        with pytest.raises(ValueError):
            average_sales_volume({})

    @given(
        weeks=st.lists(st.integers(0, 200), min_size=2, max_size=30, unique=True),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=60, deadline=None)
    def test_gap_penalty_property(self, weeks, seed):
        rng = np.random.default_rng(seed)
        weeks = sorted(weeks)
        units = rng.integers(1, 50, size=len(weeks))
        series = dict(zip(weeks, units.tolist()))
        avg = average_sales_volume(series)
        observed_mean = units.mean()
        gapless = weeks[-1] - weeks[0] == len(weeks) - 1
        if gapless:
            assert avg >= observed_mean - 1e-12
        elif weeks[-1] - weeks[0] > len(weeks) - 1:
            assert avg <= observed_mean + 1e-12


class TestRollingVolume:
    def test_window_matches_example(self):
        assert rolling_volume({1: 5, 3: 7}, t=4, window=52) == pytest.approx(6.0)

    def test_empty_window_is_missing(self):
        assert np.isnan(rolling_volume({10: 5}, t=5, window=3))

    def test_full_window_equals_average(self):
        series = {1: 5, 3: 7, 6: 2}
        assert rolling_volume(series, t=7, window=52) == pytest.approx(
            average_sales_volume(series)
        )


class TestSalesFilter:
    def test_v_shape(self):
        flags, regular = sales_filter([199, 149, 199], depth=0.05, window=8)
        assert list(flags) == [REGULAR, SALE, BOUNCE]
        assert list(regular) == [199, 199, 199]

    def test_monotone_cuts_are_regular(self):
        flags, regular = sales_filter([199, 189, 179], depth=0.05, window=8)
        assert list(flags) == [REGULAR, REGULAR, REGULAR]
        assert list(regular) == [199, 189, 179]

    def test_flat_series(self):
        flags, _ = sales_filter([250, 250, 250, 250])
        assert not flags.any()

    def test_window_limits_lookahead(self):
        # return arrives outside the window: not a sale
        prices = [200, 150, 150, 150, 200]
        flags, _ = sales_filter(prices, weeks=[0, 1, 2, 3, 4], depth=0.05, window=2)
        assert list(flags) == [REGULAR] * 5

    def test_multiweek_sale(self):
        flags, regular = sales_filter([300, 240, 240, 300, 300], depth=0.1, window=8)
        assert list(flags) == [REGULAR, SALE, SALE, BOUNCE, REGULAR]
        assert list(regular) == [300, 300, 300, 300, 300]

    @given(
        prices=st.lists(st.integers(80, 400), min_size=1, max_size=40),
        depth=st.sampled_from([0.05, 0.1, 0.25]),
        window=st.integers(2, 10),
    )
    @settings(max_examples=80, deadline=None)
    def test_idempotent_on_regular_series(self, prices, depth, window):
        _, regular = sales_filter(prices, depth=depth, window=window)
        flags2, regular2 = sales_filter(regular, depth=depth, window=window)
        assert not flags2.any()
        assert list(regular2) == list(regular)


class TestNineEnding:
    @pytest.mark.parametrize("price,expected", [(199, True), (200, False), (1099, True)])
    def test_examples(self, price, expected):
        assert nine_ending(price) is expected


class TestDetection:
    def test_survival_trace(self):
        panel = panel_from_rows(
            [(1, 10, w, p, 5, "") for w, p in zip([1, 2, 3, 4], [199, 199, 189, 189])]
        )
        ev = detect_price_changes(panel, mode="survived2w")
        assert len(ev) == 1
        row = ev.iloc[0]
        assert row["week"] == 3 and row["delta_cents"] == -10
        assert bool(row["survived_two_weeks"])
        assert row["direction"] == "decrease"
        assert row["delta_pct"] == pytest.approx(-10 / 199)

    def test_leq_2c_filter(self):
        panel = panel_from_rows(
            [(1, 10, w, p, 5, "") for w, p in zip([1, 2, 3], [199, 197, 199])]
        )
        ev = detect_price_changes(panel, mode="all_adjacent", filters=("exclude_leq_2c",))
        assert len(ev) == 0
        ev_all = detect_price_changes(panel, mode="all_adjacent")
        assert len(ev_all) == 2

    def test_gap_means_no_event(self):
        panel = panel_from_rows([(1, 10, 1, 199, 5, ""), (1, 10, 3, 199, 5, "")])
        assert len(detect_price_changes(panel, mode="all_adjacent")) == 0
        gap_diff = panel_from_rows([(1, 10, 1, 199, 5, ""), (1, 10, 3, 189, 5, "")])
        assert len(detect_price_changes(gap_diff, mode="all_adjacent")) == 0

    def test_survived_subset_of_all(self):
        rng = np.random.default_rng(4)
        rows = []
        for upc in range(6):
            price = 200
            for w in range(40):
                if rng.uniform() < 0.3:
                    price += int(rng.integers(-30, 31))
                    price = max(price, 50)
                if rng.uniform() < 0.1:
                    continue
                rows.append((1, upc, w, price, 5, ""))
        panel = panel_from_rows(rows)
        all_ev = detect_price_changes(panel, mode="all_adjacent")
        surv = detect_price_changes(panel, mode="survived2w")
        key = ["store", "upc", "week"]
        all_keys = set(map(tuple, all_ev[key].to_numpy()))
        surv_keys = set(map(tuple, surv[key].to_numpy()))
        assert surv_keys <= all_keys
        for f in ("exclude_leq_2c", "exclude_coupon_adjacent", "exclude_sale_bounceback", "regular_only"):
            filt = detect_price_changes(panel, mode="all_adjacent", filters=(f,))
            assert set(map(tuple, filt[key].to_numpy())) <= all_keys

    def test_coupon_adjacent_filter(self):
        panel = panel_from_rows(
            [
                (1, 10, 1, 199, 5, ""),
                (1, 10, 2, 189, 5, "C"),
                (1, 10, 3, 189, 5, ""),
                (1, 10, 4, 179, 5, ""),
                (1, 10, 5, 179, 5, ""),
            ]
        )
        ev = detect_price_changes(panel, mode="all_adjacent")
        assert len(ev) == 2
        filt = detect_price_changes(
            panel, mode="all_adjacent", filters=("exclude_coupon_adjacent",)
        )
        # week-2 change is coupon-flagged, week-3 change has a coupon at t-1,
        # week-4 change is clean
        assert list(filt["week"]) == [4]


class TestClassification:
    def test_abs_inclusive(self):
        rule = SmallChangeRule("abs_cents", 10)
        assert is_small_change(10, 500, rule)
        assert is_small_change(-10, 500, rule)
        assert not is_small_change(11, 500, rule)

    def test_pct_boundary_exact(self):
        rule = SmallChangeRule("pct", 2)
        assert is_small_change(4, 200, rule)  # exactly 2%
        assert not is_small_change(5, 200, rule)

    def test_kappa_boundary(self):
        rule = SmallChangeRule("relative_kappa", 0.5)
        assert is_small_change(15, 400, rule, mean_abs_change=30.0)
        assert not is_small_change(16, 400, rule, mean_abs_change=30.0)

    def test_kappa_needs_positive_mean(self):
        rule = SmallChangeRule("relative_kappa", 0.5)
        with pytest.raises(ValueError):
            is_small_change(5, 100, rule, mean_abs_change=0.0)

    def test_classify_small_wrapper(self):
        ev = PriceChangeEvent(1, 2, 3, 200, 210, 10, 0.05, "increase", True, False, False, False)
        assert classify_small(ev, SmallChangeRule("abs_cents", 10))

    def test_rule_parsing(self):
        assert SmallChangeRule.parse("abs:10") == SmallChangeRule("abs_cents", 10)
        assert SmallChangeRule.parse("pct:2") == SmallChangeRule("pct", 2)
        assert SmallChangeRule.parse("kappa:0.5") == SmallChangeRule("relative_kappa", 0.5)
        with pytest.raises(ValueError):
            SmallChangeRule.parse("nope:1")
        with pytest.raises(ValueError):
            SmallChangeRule("relative_kappa", 1.5)

    def test_closure_brute_force(self):
        rng = np.random.default_rng(11)
        rule10 = SmallChangeRule("abs_cents", 10)
        rule_pct = SmallChangeRule("pct", 2)
        for _ in range(10_000):
            d = int(rng.integers(-80, 81))
            if d == 0:
                continue
            pre = int(rng.integers(50, 1200))
            small = is_small_change(d, pre, rule10)
            assert small == (abs(d) <= 10)
            assert not (small and abs(d) > 10)
            assert is_small_change(d, pre, rule_pct) == (100 * abs(d) <= 2 * pre)

    def test_unit_covariance(self):
        # doubling deltas, prices, and thresholds together flips nothing
        rng = np.random.default_rng(12)
        for _ in range(2000):
            d = int(rng.integers(1, 60))
            pre = int(rng.integers(50, 900))
            t = int(rng.integers(1, 25))
            assert is_small_change(d, pre, SmallChangeRule("abs_cents", t)) == is_small_change(
                2 * d, 2 * pre, SmallChangeRule("abs_cents", 2 * t)
            )
            assert is_small_change(d, pre, SmallChangeRule("pct", t)) == is_small_change(
                2 * d, 2 * pre, SmallChangeRule("pct", t)
            )


def _stats_frame(volumes, n_changes=None, n_small=None):
    n = len(volumes)
    return pd.DataFrame(
        {
            "store": np.ones(n, dtype=int),
            "upc": np.arange(n),
            "avg_volume": volumes,
            "n_changes": n_changes if n_changes is not None else np.full(n, 10),
            "n_small": n_small if n_small is not None else np.full(n, 3),
        }
    )


class TestDeciles:
    def test_rank_arithmetic(self):
        stats = _stats_frame(np.arange(1, 21, dtype=float))
        dec = decile_table(stats)
        assert list(dec["n_product_stores"]) == [2] * 10

    def test_partition_properties(self):
        rng = np.random.default_rng(3)
        stats = _stats_frame(rng.uniform(1, 100, size=57))
        dec = decile_table(stats)
        sizes = dec["n_product_stores"].to_numpy()
        assert sizes.sum() == 57
        assert sizes.max() - sizes.min() <= 1

    def test_too_few_groups(self):
        with pytest.raises(ValueError):
            decile_table(_stats_frame(np.arange(9, dtype=float)))

    def test_share_small_pools_events(self):
        volumes = np.arange(1.0, 11.0)
        n_changes = np.full(10, 4)
        n_small = np.arange(10)  # 0..9 small of 4... capped later
        n_small = np.minimum(n_small, n_changes)
        dec = decile_table(_stats_frame(volumes, n_changes, n_small))
        assert dec.loc[0, "share_small"] == pytest.approx(0.0)
        assert dec.loc[9, "share_small"] == pytest.approx(1.0)


class TestHistogram:
    def test_single_size_mass_one(self):
        stats = _stats_frame(np.arange(1.0, 13.0))
        events = pd.DataFrame(
            {
                "store": 1,
                "upc": np.arange(12),
                "week": 5,
                "delta_cents": 10,
                "pre_price": 200,
                "delta_pct": 10 / 200,
            }
        )
        hist = size_histogram(events, stats, unit="cents")
        by_group = hist[hist["size"] == 10].set_index("volume_group")["frequency"]
        assert by_group["low"] == pytest.approx(1.0)
        assert by_group["high"] == pytest.approx(1.0)
        other_mass = hist[hist["size"] != 10]["count"].sum()
        assert other_mass == 0

    def test_empty_group_zero_rows(self):
        stats = _stats_frame(np.arange(1.0, 13.0))
        events = pd.DataFrame(
            {
                "store": [1],
                "upc": [11],  # highest volume -> high tercile only
                "week": [5],
                "delta_cents": [7],
                "pre_price": [100],
                "delta_pct": [0.07],
            }
        )
        hist = size_histogram(events, stats, unit="cents")
        assert hist[hist["volume_group"] == "low"]["count"].sum() == 0

    def test_percent_bins_inclusive_upper(self):
        stats = _stats_frame(np.arange(1.0, 13.0))
        events = pd.DataFrame(
            {
                "store": 1,
                "upc": [0, 1],
                "week": 5,
                "delta_cents": [4, 5],
                "pre_price": [200, 200],
                "delta_pct": [0.02, 0.025],
            }
        )
        hist = size_histogram(events, stats, unit="percent")
        low = hist[hist["volume_group"] == "low"].set_index("size")
        assert low.loc[2, "count"] == 1  # exactly 2% lands in bin 2
        assert low.loc[3, "count"] == 1  # 2.5% lands in bin 3

    def test_empty_events_error(self):
        with pytest.raises(ValueError):
            size_histogram(pd.DataFrame(), _stats_frame(np.arange(1.0, 13.0)), "cents")


class TestSynchronization:
    def _setup(self):
        # four products in one category; three change at week 2
        rows = []
        for upc, prices in {
            1: [100, 120, 120],
            2: [200, 220, 220],
            3: [300, 260, 260],
            4: [400, 400, 400],
        }.items():
            rows += [(1, upc, w, p, 5, "") for w, p in zip([1, 2, 3], prices)]
        panel = panel_from_rows(rows)
        meta = pd.DataFrame(
            {
                "upc": [1, 2, 3, 4],
                "category": [7, 7, 7, 7],
                "producer": [1, 1, 2, 2],
                "brand": "national",
                "pack_qty": 1,
                "storable": 1,
            }
        )
        events = detect_price_changes(panel, mode="all_adjacent")
        return panel, meta, events

    def test_share_excludes_self(self):
        panel, meta, events = self._setup()
        sync = synchronization_features(events, panel, meta, level="category")
        row = sync[(sync["upc"] == 1) & (sync["week"] == 2)].iloc[0]
        assert row["share_others_changing"] == pytest.approx(2.0 / 3.0)

    def test_mean_abs_others(self):
        panel, meta, events = self._setup()
        sync = synchronization_features(events, panel, meta, level="category")
        row = sync[(sync["upc"] == 1) & (sync["week"] == 2)].iloc[0]
        # peers changed by +20 and -40
        assert row["mean_abs_others"] == pytest.approx(30.0)

    def test_same_producer_share(self):
        panel, meta, events = self._setup()
        sync = synchronization_features(events, panel, meta, level="category")
        row = sync[(sync["upc"] == 1) & (sync["week"] == 2)].iloc[0]
        # producer 1 = {1, 2}; the other product changed
        assert row["share_same_producer_changing"] == pytest.approx(1.0)
        row3 = sync[(sync["upc"] == 3) & (sync["week"] == 2)].iloc[0]
        # producer 2 = {3, 4}; product 4 did not change
        assert row3["share_same_producer_changing"] == pytest.approx(0.0)

    def test_single_product_is_missing(self):
        rows = [(1, 1, w, p, 5, "") for w, p in zip([1, 2], [100, 140])]
        panel = panel_from_rows(rows)
        meta = pd.DataFrame(
            {"upc": [1], "category": [3], "producer": [9], "brand": "national",
             "pack_qty": 1, "storable": 1}
        )
        events = detect_price_changes(panel, mode="all_adjacent")
        sync = synchronization_features(events, panel, meta, level="category")
        assert np.isnan(sync.iloc[0]["share_others_changing"])
        assert np.isnan(sync.iloc[0]["mean_abs_others"])


class TestProducerSize:
    def test_constant_offering(self):
        rows = []
        for upc in (1, 2, 3):
            rows += [(1, upc, w, 100, 5, "") for w in range(4)]
        panel = panel_from_rows(rows)
        meta = pd.DataFrame(
            {"upc": [1, 2, 3], "category": 0, "producer": 5, "brand": "national",
             "pack_qty": 1, "storable": 1}
        )
        out = producer_size(panel, meta)
        assert out.loc[0, "avg_weekly_products"] == pytest.approx(3.0)

    def test_partial_presence_averages_over_all_weeks(self):
        rows = []
        for upc in (1, 2):
            rows += [(1, upc, w, 100, 5, "") for w in (0, 1)]
        rows += [(1, 99, w, 100, 5, "") for w in range(4)]  # anchors the 4-week panel
        panel = panel_from_rows(rows)
        meta = pd.DataFrame(
            {"upc": [1, 2, 99], "category": 0, "producer": [5, 5, 6],
             "brand": "national", "pack_qty": 1, "storable": 1}
        )
        out = producer_size(panel, meta).set_index("producer")
        assert out.loc[5, "avg_weekly_products"] == pytest.approx(1.0)

    def test_quartiles_even_split(self):
        rows = []
        for producer in range(8):
            for j in range(producer + 1):
                upc = producer * 100 + j
                rows += [(1, upc, w, 100, 5, "") for w in range(3)]
        panel = panel_from_rows(rows)
        meta_rows = []
        for producer in range(8):
            for j in range(producer + 1):
                meta_rows.append(
                    {"upc": producer * 100 + j, "category": 0, "producer": producer,
                     "brand": "national", "pack_qty": 1, "storable": 1}
                )
        out = producer_size(panel, pd.DataFrame(meta_rows))
        assert sorted(out["size_quartile"]) == [1, 1, 2, 2, 3, 3, 4, 4]


class TestPeakWeeks:
    def _events(self, week_counts):
        rows = []
        upc = 0
        for week, count in week_counts.items():
            for _ in range(count):
                rows.append({"store": 1, "upc": upc, "week": week, "delta_cents": 10})
                upc += 1
        return pd.DataFrame(rows)

    def test_half_coverage(self):
        events = self._events({1: 10, 2: 5, 3: 3, 4: 2})
        peaks, dummy = peak_weeks(events, by="store")
        assert set(peaks["week"]) == {1}
        assert dummy.sum() == 10

    def test_tie_goes_to_earlier_week(self):
        events = self._events({4: 1, 2: 1, 3: 1, 1: 1})
        peaks, _ = peak_weeks(events, by="store")
        assert sorted(peaks["week"]) == [1, 2]

    def test_single_week(self):
        events = self._events({7: 3})
        peaks, dummy = peak_weeks(events, by="store")
        assert list(peaks["week"]) == [7]
        assert dummy.all()

    def test_minimality(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            counts = {w: int(rng.integers(1, 30)) for w in range(int(rng.integers(2, 12)))}
            events = self._events(counts)
            peaks, _ = peak_weeks(events, by="store")
            total = sum(counts.values())
            covered = peaks["n_changes"].sum()
            assert 2 * covered >= total
            smallest = peaks["n_changes"].min()
            assert 2 * (covered - smallest) < total


class TestCategorySummary:
    def _mk(self, volumes, revenues):
        n = len(volumes)
        stats = pd.DataFrame(
            {
                "store": 1,
                "upc": np.arange(n),
                "avg_volume": volumes,
                "avg_revenue": revenues,
                "avg_price": 100.0,
                "n_changes": 5,
                "n_small": 2,
            }
        )
        meta = pd.DataFrame(
            {"upc": np.arange(n), "category": 0, "producer": 0, "brand": "national",
             "pack_qty": 1, "storable": 1}
        )
        return stats, meta

    def test_perfect_correlation(self):
        stats, meta = self._mk([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
        out = category_summary(stats, meta)
        assert out.loc[0, "corr_ln_volume_revenue"] == pytest.approx(1.0)

    def test_perfect_anticorrelation(self):
        stats, meta = self._mk([2.0, 4.0], [4.0, 2.0])
        out = category_summary(stats, meta)
        assert out.loc[0, "corr_ln_volume_revenue"] == pytest.approx(-1.0)

    def test_counts(self):
        stats, meta = self._mk([1.0, 2.0, 4.0], [1.0, 2.0, 4.0])
        out = category_summary(stats, meta)
        assert out.loc[0, "n_changes"] == 15
        assert out.loc[0, "n_upcs"] == 3
        assert out.loc[0, "share_small"] == pytest.approx(6 / 15)


class TestProductStoreStats:
    def test_counts_match_rule(self):
        panel = panel_from_rows(
            [(1, 10, w, p, 3, "") for w, p in zip(range(6), [200, 200, 195, 195, 260, 260])]
        )
        events = detect_price_changes(panel, mode="survived2w")
        stats = compute_product_store_stats(panel, events, SmallChangeRule("abs_cents", 10))
        row = stats.iloc[0]
        assert row["n_changes"] == 2
        assert row["n_small"] == 1
        assert row["mean_abs_change"] == pytest.approx((5 + 65) / 2)
        assert row["avg_volume"] == pytest.approx(18 / 5)

    def test_small_change_mask_kappa_joins_stats(self):
        events = pd.DataFrame(
            {"store": [1, 1], "upc": [10, 10], "delta_cents": [15, 16], "pre_price": [200, 200]}
        )
        stats = pd.DataFrame({"store": [1], "upc": [10], "mean_abs_change": [30.0]})
        mask = small_change_mask(events, SmallChangeRule("relative_kappa", 0.5), stats)
        assert list(mask) == [True, False]

    def test_terciles(self):
        stats = _stats_frame(np.arange(1.0, 10.0))
        groups = volume_terciles(stats)
        assert list(groups) == ["low"] * 3 + ["mid"] * 3 + ["high"] * 3
