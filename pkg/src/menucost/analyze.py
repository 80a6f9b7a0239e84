"""End-to-end panel analysis: movement file in, feature tables out.

`run_analysis` streams a movement file one product-store series at a time
and writes:

    events.csv                one row per detected price change, with flags,
                              wholesale change, rolling volume, small dummy,
                              month / year / holiday
    product_store_stats.csv   per-series aggregates (gap-aware volume, price,
                              revenue, margin, change counts)
    deciles.csv               share of small changes by volume decile
    histogram_cents.csv       change-size frequencies by volume tercile, 1-50c
    histogram_pct.csv         same in percent bins, 1-30%
    sync_features.csv         peer-change shares per event (self excluded)
                              plus the peak-week dummy
    category_summary.csv      per-category counts and the volume-revenue
                              correlation
    producer_size.csv         average weekly product count per producer
    peak_weeks.csv            the minimal half-coverage week sets

Peak memory is bounded by one series plus per product-store aggregates and
per (store, group, week) counters -- never by the row count.  The heavy
per-event tables are written incrementally and re-streamed for the second
pass (histograms, synchronization, peaks), so a 10-million-row panel runs in
a few hundred MB.
"""

from __future__ import annotations

import csv
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import io as mio
from . import stats as mstats
from .stats import (
    SmallChangeRule,
    _event_keep_mask,
    _series_events,
    _series_stats,
    rolling_volume,
    sales_filter,
)

__all__ = ["AnalyzeOptions", "run_analysis", "analyze_frames"]

EVENTS_FILE_COLUMNS = [
    "store",
    "upc",
    "week",
    "pre_price",
    "post_price",
    "delta_cents",
    "delta_pct",
    "direction",
    "survived_two_weeks",
    "nine_ending_pre",
    "on_sale_or_bounceback",
    "coupon_adjacent",
    "regular_pair",
    "wholesale_change_pct",
    "rolling_volume",
    "small",
    "month",
    "year",
    "holiday",
]

STATS_FILE_COLUMNS = [
    "store",
    "upc",
    "avg_volume",
    "avg_volume_52w",
    "avg_price",
    "avg_revenue",
    "avg_margin",
    "mean_abs_change",
    "n_changes",
    "n_small",
    "n_obs",
    "first_week",
    "last_week",
    "single_week",
]


@dataclass(frozen=True)
class AnalyzeOptions:
    mode: str = "survived2w"
    rule: SmallChangeRule = field(default_factory=lambda: SmallChangeRule("abs_cents", 10))
    filters: tuple[str, ...] = ()
    sale_depth: float = 0.05
    sale_window: int = 8
    sale_tol: int = 0
    rolling_window: int = 52
    single_units_only: bool = False
    sync_level: str = "category"
    peak_by: str = "store"
    event_weighted_deciles: bool = False
    chunksize: int = 500_000
    output_format: str = "csv"


class _GroupWeekCounts:
    """Per (key, week) counters held as growable arrays: [at_risk, changed, sum_abs]."""

    def __init__(self) -> None:
        self._data: dict = {}

    def _arr(self, key, need_len: int) -> np.ndarray:
        arr = self._data.get(key)
        if arr is None:
            arr = np.zeros((max(need_len, 64), 3), dtype=np.float64)
            self._data[key] = arr
        elif arr.shape[0] < need_len:
            grown = np.zeros((max(need_len, arr.shape[0] * 2), 3), dtype=np.float64)
            grown[: arr.shape[0]] = arr
            arr = grown
            self._data[key] = arr
        return arr

    def add(self, key, weeks: np.ndarray, col: int, vals=1.0) -> None:
        if len(weeks) == 0:
            return
        arr = self._arr(key, int(weeks.max()) + 1)
        np.add.at(arr[:, col], weeks, vals)

    def get(self, key, week: int) -> tuple[float, float, float]:
        arr = self._data.get(key)
        if arr is None or week >= arr.shape[0]:
            return 0.0, 0.0, 0.0
        return float(arr[week, 0]), float(arr[week, 1]), float(arr[week, 2])

    def items(self):
        return self._data.items()


def _load_meta_map(meta_path) -> tuple[dict, pd.DataFrame | None]:
    if meta_path is None:
        return {}, None
    meta = mio.read_meta(meta_path)
    mmap = {
        int(r.upc): (int(r.category), int(r.producer), str(r.brand), int(r.pack_qty), int(r.storable))
        for r in meta.itertuples()
    }
    return mmap, meta


def _load_calendar_map(calendar_path) -> dict:
    if calendar_path is None:
        return {}
    cal = mio.read_calendar(calendar_path)
    out = {}
    for r in cal.itertuples():
        month = int(r.month) if "month" in cal.columns else None
        year = int(r.year) if "year" in cal.columns else None
        out[int(r.week)] = (int(r.holiday), month, year)
    return out


def _week_tags(week: int, calendar: dict) -> tuple[int, int, int]:
    entry = calendar.get(week)
    month, year = mio.week_month_year(week)
    if entry is None:
        return (0, month, year)
    holiday, cmonth, cyear = entry
    return (holiday, cmonth if cmonth is not None else month, cyear if cyear is not None else year)


def run_analysis(
    movement_path,
    out_dir,
    meta_path=None,
    stores_path=None,
    calendar_path=None,
    alias_path=None,
    options: AnalyzeOptions | None = None,
) -> dict:
    """Stream the movement file and write every analysis table to ``out_dir``."""
    opt = options or AnalyzeOptions()
    os.makedirs(out_dir, exist_ok=True)
    alias = mio.read_upc_alias(alias_path) if alias_path else None
    meta_map, meta_df = _load_meta_map(meta_path)
    calendar = _load_calendar_map(calendar_path)
    warned_missing_meta = False

    cat_counts = _GroupWeekCounts()  # key (store, category)
    prod_counts = _GroupWeekCounts()  # key (store, producer)
    store_counts = _GroupWeekCounts()  # key store
    upc_weeks: dict[int, set] = {}
    week_universe: set = set()

    stats_rows: list[tuple] = []
    events_path = os.path.join(out_dir, "events.csv")
    n_events = 0
    n_series = 0
    n_rows = 0
    fmt = opt.output_format
    sep = {"csv": ",", "tsv": "\t"}[fmt]

    buf: dict[str, list] = {c: [] for c in EVENTS_FILE_COLUMNS}
    buf_rows = 0
    buf_chunks = 0

    with open(events_path, "w", newline="") as ev_fh:
        ev_fh.write(sep.join(EVENTS_FILE_COLUMNS) + "\n")

        def _flush():
            nonlocal buf, buf_rows, buf_chunks
            if buf_rows:
                frame = pd.DataFrame(
                    {c: np.concatenate(buf[c]) for c in EVENTS_FILE_COLUMNS}
                )
                frame.to_csv(ev_fh, sep=sep, index=False, header=False, na_rep="")
                buf = {c: [] for c in EVENTS_FILE_COLUMNS}
                buf_rows = 0
                buf_chunks = 0

        for store, upc, arrays in mio.iter_series_blocks(
            movement_path, alias, opt.chunksize
        ):
            weeks = arrays["week"]
            n_rows += len(weeks)
            if opt.single_units_only and (arrays["pack_qty"] > 1).any():
                continue
            n_series += 1
            meta_row = meta_map.get(upc)
            if meta_row is None:
                if meta_map and not warned_missing_meta:
                    print(
                        f"warning: upc {upc} missing from meta; using unknowns",
                        file=sys.stderr,
                    )
                    warned_missing_meta = True
                category, producer = -1, -1
            else:
                category, producer = meta_row[0], meta_row[1]

            prices = arrays["price"]
            units = arrays["units"]
            margins = arrays["margin_pct"]
            raw_flags = arrays["sale_flag"]
            week_universe.update(weeks.tolist())
            upc_weeks.setdefault(upc, set()).update(weeks.tolist())

            fs_flags, _ = sales_filter(
                prices, weeks, opt.sale_depth, opt.sale_window, opt.sale_tol
            )
            ev = _series_events(weeks, prices, raw_flags, fs_flags)
            kept = None
            if ev is not None:
                keep = _event_keep_mask(ev, opt.mode, opt.filters)
                if keep.any():
                    kept = {k: v[keep] for k, v in ev.items()}

            deltas = (
                {"delta_cents": kept["delta_cents"], "pre_price": kept["pre_price"]}
                if kept
                else None
            )
            srow = _series_stats(
                weeks, prices, units, margins, deltas, opt.rule, opt.rolling_window
            )
            srow["store"] = store
            srow["upc"] = upc
            stats_rows.append(tuple(srow[c] for c in STATS_FILE_COLUMNS))

            # at-risk weeks: price observed this week and the week before
            risk_weeks = weeks[1:][np.diff(weeks) == 1]
            cat_counts.add((store, category), risk_weeks, 0)
            prod_counts.add((store, producer), risk_weeks, 0)

            if kept is None:
                continue
            ev_weeks = kept["week"]
            abs_delta = np.abs(kept["delta_cents"]).astype(np.float64)
            cat_counts.add((store, category), ev_weeks, 1)
            cat_counts.add((store, category), ev_weeks, 2, abs_delta)
            prod_counts.add((store, producer), ev_weeks, 1)
            prod_counts.add((store, producer), ev_weeks, 2, abs_delta)
            store_counts.add(store, ev_weeks, 1)

            idx = kept["obs_index"]
            wholesale = prices * (1.0 - margins / 100.0)
            with np.errstate(invalid="ignore", divide="ignore"):
                wchange = (wholesale[idx] - wholesale[idx - 1]) / wholesale[idx - 1]
            mean_abs = srow["mean_abs_change"]
            if opt.rule.kind == "abs_cents":
                small = abs_delta <= opt.rule.threshold
            elif opt.rule.kind == "pct":
                small = 100.0 * abs_delta <= opt.rule.threshold * kept["pre_price"]
            else:
                small = abs_delta <= opt.rule.threshold * mean_abs
            tags = np.array([_week_tags(int(w), calendar) for w in ev_weeks])
            roll = np.array(
                [
                    rolling_volume((weeks, units), int(w), opt.rolling_window)
                    for w in ev_weeks
                ]
            )
            n_ev = len(ev_weeks)
            cols = {
                "store": np.full(n_ev, store, dtype=np.int64),
                "upc": np.full(n_ev, upc, dtype=np.int64),
                "week": ev_weeks,
                "pre_price": kept["pre_price"],
                "post_price": kept["post_price"],
                "delta_cents": kept["delta_cents"],
                "delta_pct": kept["delta_cents"] / kept["pre_price"],
                "direction": np.where(kept["delta_cents"] > 0, "increase", "decrease"),
                "survived_two_weeks": kept["survived_two_weeks"].astype(np.int64),
                "nine_ending_pre": kept["nine_ending_pre"].astype(np.int64),
                "on_sale_or_bounceback": kept["on_sale_or_bounceback"].astype(np.int64),
                "coupon_adjacent": kept["coupon_adjacent"].astype(np.int64),
                "regular_pair": kept["regular_pair"].astype(np.int64),
                "wholesale_change_pct": wchange,
                "rolling_volume": roll,
                "small": small.astype(np.int64),
                "holiday": tags[:, 0],
                "month": tags[:, 1],
                "year": tags[:, 2],
            }
            for c in EVENTS_FILE_COLUMNS:
                buf[c].append(cols[c])
            buf_rows += n_ev
            buf_chunks += 1
            n_events += n_ev
            # cap both rows and chunk count: many tiny per-series arrays
            # cost more in headers than in payload
            if buf_rows >= 200_000 or buf_chunks >= 20_000:
                _flush()
        _flush()

    stats_df = pd.DataFrame.from_records(stats_rows, columns=STATS_FILE_COLUMNS)
    stats_df["single_week"] = stats_df["single_week"].astype(int)
    mio.write_table(stats_df, os.path.join(out_dir, "product_store_stats.csv"), fmt)

    # deciles ------------------------------------------------------------
    deciles_path = os.path.join(out_dir, "deciles.csv")
    if len(stats_df) >= 10 and not opt.event_weighted_deciles:
        dec = mstats.decile_table(stats_df)
        mio.write_table(dec, deciles_path, fmt)
    elif not opt.event_weighted_deciles:
        print("warning: fewer than 10 product-stores; deciles skipped", file=sys.stderr)
        mio.write_table(
            pd.DataFrame(columns=["decile", "n_product_stores", "n_changes", "n_small", "share_small"]),
            deciles_path,
            fmt,
        )

    # peak week sets -------------------------------------------------------
    peak_sets: dict = {}
    peak_rows = []
    if opt.peak_by == "store":
        sources = [((key,), arr) for key, arr in store_counts.items()]
        dims = ["store"]
    else:
        sources = [(key, arr) for key, arr in cat_counts.items()]
        dims = ["store", "category"]
    for key, arr in sources:
        counts = arr[:, 1] if arr.ndim == 2 else arr
        weeks_nz = np.nonzero(counts > 0)[0]
        if len(weeks_nz) == 0:
            continue
        order = sorted(weeks_nz, key=lambda w: (-counts[w], w))
        total = counts[weeks_nz].sum()
        cum = 0.0
        chosen = set()
        for w in order:
            cum += counts[w]
            chosen.add(int(w))
            rec = dict(zip(dims, key))
            rec.update(week=int(w), n_changes=int(counts[w]), cum_share=cum / total)
            peak_rows.append(rec)
            if 2 * cum >= total:
                break
        peak_sets[key if len(key) > 1 else key[0]] = chosen
    peak_df = pd.DataFrame(peak_rows, columns=dims + ["week", "n_changes", "cum_share"])
    mio.write_table(peak_df, os.path.join(out_dir, "peak_weeks.csv"), fmt)

    # producer size --------------------------------------------------------
    n_panel_weeks = max(len(week_universe), 1)
    producer_of: dict[int, int] = {}
    for u in upc_weeks:
        m = meta_map.get(u)
        producer_of[u] = m[1] if m else -1
    presence: dict[int, int] = {}
    for u, wset in upc_weeks.items():
        presence[producer_of[u]] = presence.get(producer_of[u], 0) + len(wset)
    psize = pd.DataFrame(
        {
            "producer": list(presence.keys()),
            "avg_weekly_products": [v / n_panel_weeks for v in presence.values()],
        }
    ).sort_values("producer", ignore_index=True)
    if len(psize):
        psize["size_quartile"] = mstats._rank_groups(
            psize["avg_weekly_products"].to_numpy(), 4
        )
    else:
        psize["size_quartile"] = pd.Series(dtype=np.int64)
    mio.write_table(psize, os.path.join(out_dir, "producer_size.csv"), fmt)

    # category summary -------------------------------------------------
    if meta_df is not None:
        summary = mstats.category_summary(stats_df, meta_df)
    else:
        pseudo_meta = pd.DataFrame({"upc": stats_df["upc"].unique()})
        pseudo_meta["category"] = -1
        summary = mstats.category_summary(stats_df, pseudo_meta)
    mio.write_table(summary, os.path.join(out_dir, "category_summary.csv"), fmt)

    # second pass over events: histograms, synchronization, peaks ------
    tercile = dict(
        zip(
            zip(stats_df["store"], stats_df["upc"]),
            mstats.volume_terciles(stats_df) if len(stats_df) else [],
        )
    )
    hist_cents = {g: np.zeros(51, dtype=np.int64) for g in ("low", "mid", "high")}
    hist_pct = {g: np.zeros(31, dtype=np.int64) for g in ("low", "mid", "high")}
    group_totals = {g: 0 for g in ("low", "mid", "high")}
    dec_events: list = []

    sync_path = os.path.join(out_dir, "sync_features.csv")
    with open(sync_path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=sep)
        writer.writerow(
            [
                "store",
                "upc",
                "week",
                "share_others_changing",
                "mean_abs_others",
                "share_same_producer_changing",
                "peak_week",
            ]
        )
        if n_events:
            avg_vol_lookup = {
                (s, u): v
                for s, u, v in zip(
                    stats_df["store"], stats_df["upc"], stats_df["avg_volume"]
                )
            }
            use_cat_level = opt.sync_level == "category"
            for chunk in pd.read_csv(events_path, sep=sep, chunksize=opt.chunksize):
                stores = chunk["store"].to_numpy()
                upcs = chunk["upc"].to_numpy()
                weeks_arr = chunk["week"].to_numpy()
                deltas = np.abs(chunk["delta_cents"].to_numpy()).astype(np.float64)
                pres = chunk["pre_price"].to_numpy().astype(np.float64)
                smalls = chunk["small"].to_numpy()
                for i in range(len(chunk)):
                    s, u, w, d = int(stores[i]), int(upcs[i]), int(weeks_arr[i]), deltas[i]
                    grp = tercile.get((s, u), "mid")
                    group_totals[grp] += 1
                    di = int(d)
                    if 1 <= di <= 50 and di == d:
                        hist_cents[grp][di] += 1
                    pct = 100.0 * d / pres[i] if pres[i] else 0.0
                    pbin = int(math.ceil(pct - 1e-12)) if pct > 0 else 0
                    if 1 <= pbin <= 30:
                        hist_pct[grp][pbin] += 1
                    meta_row = meta_map.get(u)
                    category = meta_row[0] if meta_row else -1
                    producer = meta_row[1] if meta_row else -1
                    if use_cat_level:
                        at_risk, changed, sum_abs = cat_counts.get((s, category), w)
                    else:
                        at_risk, changed, sum_abs = prod_counts.get((s, producer), w)
                    share_others = (
                        (changed - 1) / (at_risk - 1) if at_risk > 1 else float("nan")
                    )
                    mean_abs_others = (
                        (sum_abs - d) / (changed - 1) if changed > 1 else float("nan")
                    )
                    p_risk, p_changed, _ = prod_counts.get((s, producer), w)
                    share_prod = (
                        (p_changed - 1) / (p_risk - 1) if p_risk > 1 else float("nan")
                    )
                    pk_key = s if opt.peak_by == "store" else (s, category)
                    is_peak = int(w in peak_sets.get(pk_key, ()))
                    writer.writerow(
                        [
                            s,
                            u,
                            w,
                            _fmt(share_others),
                            _fmt(mean_abs_others),
                            _fmt(share_prod),
                            is_peak,
                        ]
                    )
                    if opt.event_weighted_deciles:
                        dec_events.append((avg_vol_lookup.get((s, u), 0.0), int(smalls[i])))

    for unit, table, n_bins in (("cents", hist_cents, 50), ("percent", hist_pct, 30)):
        rows = []
        for g in ("low", "mid", "high"):
            total = group_totals[g]
            for b in range(1, n_bins + 1):
                c = int(table[g][b])
                rows.append(
                    {
                        "volume_group": g,
                        "size": b,
                        "count": c,
                        "frequency": c / total if total else 0.0,
                    }
                )
        mio.write_table(
            pd.DataFrame(rows),
            os.path.join(out_dir, f"histogram_{'cents' if unit == 'cents' else 'pct'}.csv"),
            fmt,
        )

    if opt.event_weighted_deciles:
        if len(dec_events) >= 10:
            vols = np.array([v for v, _ in dec_events])
            small_flags = np.array([s for _, s in dec_events])
            dec_ids = mstats._rank_groups(vols, 10)
            rows = []
            for d in range(1, 11):
                sel = dec_ids == d
                n = int(sel.sum())
                ns = int(small_flags[sel].sum())
                rows.append(
                    {
                        "decile": d,
                        "n_changes": n,
                        "n_small": ns,
                        "share_small": ns / n if n else float("nan"),
                    }
                )
            mio.write_table(pd.DataFrame(rows), deciles_path, fmt)
        else:
            print("warning: fewer than 10 events; deciles skipped", file=sys.stderr)
            mio.write_table(
                pd.DataFrame(columns=["decile", "n_changes", "n_small", "share_small"]),
                deciles_path,
                fmt,
            )

    return {
        "rows": n_rows,
        "series": n_series,
        "events": n_events,
        "out_dir": out_dir,
        "mode": opt.mode,
        "rule": opt.rule.label(),
    }


def _fmt(x: float) -> str:
    x = float(x)
    return "" if (x != x) else repr(x)


def analyze_frames(
    panel: pd.DataFrame,
    meta: pd.DataFrame,
    mode: str = "survived2w",
    rule: SmallChangeRule | None = None,
    filters=(),
    sale_depth: float = 0.05,
    sale_window: int = 8,
    sale_tol: int = 0,
) -> dict:
    """In-memory convenience composition of the stats operations.

    Returns dict with events, stats, deciles, histograms, sync, categories,
    producer_size, peaks.  Suitable for panels that fit comfortably in RAM;
    the streaming path above is the scale-proof equivalent.
    """
    rule = rule or SmallChangeRule("abs_cents", 10)
    events = mstats.detect_price_changes(
        panel, mode=mode, filters=filters, sale_depth=sale_depth,
        sale_window=sale_window, sale_tol=sale_tol,
    )
    stats_df = mstats.compute_product_store_stats(panel, events, rule)
    out = {"events": events, "stats": stats_df}
    if len(stats_df) >= 10:
        out["deciles"] = mstats.decile_table(stats_df)
    if len(events):
        out["histogram_cents"] = mstats.size_histogram(events, stats_df, "cents")
        out["histogram_pct"] = mstats.size_histogram(events, stats_df, "percent")
        out["sync"] = mstats.synchronization_features(events, panel, meta, "category")
        peaks, dummy = mstats.peak_weeks(events, "store")
        out["peak_weeks"] = peaks
        out["peak_dummy"] = dummy
    out["categories"] = mstats.category_summary(stats_df, meta)
    out["producer_size"] = mstats.producer_size(panel, meta)
    return out
