"""Named regression presets, dataset assembly, and the spec-file format.

`load_event_dataset` joins the analysis outputs (events, product-store
stats, synchronization features, producer sizes) with the meta and store
side tables into one flat frame of price-change events; presets below are
declarative RegressionSpec values over that frame.  ``pooled_*`` presets run
once on everything with category fixed effects; ``bycat_*`` presets run one
regression per category.  The catalog covers the small-change regressions
(baseline, with price/wholesale/sale controls, with the 9-ending dummy, on
regular prices only), the revenue variants and the volume-revenue horse
race, synchronization and producer-size controls, peak-week, markup, zone,
holiday, brand, pack, direction, and measurement-error variants, and the
any-change weekly regressions.

A spec file is a small key: value text format::

    dependent: small
    regressors: ln(avg_volume), ln(avg_price), nine_ending_pre
    fixed_effects: month, year, store, upc
    cluster: upc
    se: clustered
    filters: regular_only

Regressor grammar: ``col``, ``ln(col)``, ``ln1p(col)``, each optionally
``*dummy`` for an interaction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import io as mio
from .regress import RegressionSpec, Term
from .stats import SmallChangeRule, small_change_mask, sales_filter, _series_events, _event_keep_mask

__all__ = [
    "Preset",
    "PRESETS",
    "get_preset",
    "list_presets",
    "load_event_dataset",
    "build_weekly_dataset",
    "parse_spec_file",
    "run_spec",
    "results_frame",
]


@dataclass(frozen=True)
class Preset:
    name: str
    spec: RegressionSpec
    per_category: bool = False
    unit: str = "event"  # or "week"
    description: str = ""


_VOL = Term("avg_volume", "ln")
_PRICE = Term("avg_price", "ln")
_WHOLESALE = Term("abs_wholesale_change_pct", "ln1p")
_SALEBB = Term("on_sale_or_bounceback")
_NINE = Term("nine_ending_pre")

_FE_POOLED = ("month", "year", "category", "store", "upc")
_FE_CAT = ("month", "year", "store", "upc")


def _spec(regressors, fe=_FE_CAT, dep="small", filters=(), cluster="upc"):
    return RegressionSpec(
        dependent=dep,
        regressors=tuple(regressors),
        fixed_effects=tuple(fe),
        cluster=cluster,
        se_kind="clustered",
        sample_filters=tuple(filters),
    )


def _build_presets() -> dict:
    p: dict[str, Preset] = {}

    def add(name, spec, per_category=False, unit="event", description=""):
        p[name] = Preset(name, spec, per_category, unit, description)

    controls = [_VOL, _PRICE, _WHOLESALE, _SALEBB]
    with_nine = controls + [_NINE]

    add("pooled_baseline", _spec([_VOL], _FE_POOLED),
        description="pooled small-change LPM: ln volume + month/year/category/store/product FEs")
    add("pooled_controls", _spec(controls, _FE_POOLED),
        description="pooled, adding price, wholesale-change, and sale controls")
    add("pooled_nine_ending", _spec(with_nine, _FE_POOLED),
        description="pooled, adding the 9-ending dummy")
    add("pooled_regular_only", _spec(with_nine, _FE_POOLED, filters=("regular_only",)),
        description="pooled, regular prices only")

    add("bycat_baseline", _spec([_VOL]), per_category=True,
        description="per-category baseline")
    add("bycat_controls", _spec(controls), per_category=True,
        description="per-category with controls")
    add("bycat_nine_ending", _spec(with_nine), per_category=True,
        description="per-category with 9-ending dummy")
    add("bycat_regular_only", _spec(with_nine, filters=("regular_only",)), per_category=True,
        description="per-category, regular prices only")

    add("bycat_revenue", _spec([Term("avg_revenue", "ln")]), per_category=True,
        description="revenue in place of volume")
    add("bycat_volume_revenue", _spec([_VOL, Term("avg_revenue", "ln")]), per_category=True,
        description="volume and revenue together")
    add("pooled_volume_revenue", _spec([_VOL, Term("avg_revenue", "ln")], _FE_POOLED),
        description="volume and revenue together, pooled across categories")
    add("bycat_revenue_hat", _spec([Term("revenue_hat", "ln")]), per_category=True,
        description="revenue defined as avg volume x avg price")

    add("bycat_producer_size", _spec([_VOL, Term("avg_weekly_products")]), per_category=True,
        description="volume + producer size")
    add("bycat_sync_share",
        _spec([_VOL, Term("avg_weekly_products"), Term("share_others_changing")]),
        per_category=True, description="+ share of peers changing")
    add("bycat_sync_size",
        _spec([
            _VOL, Term("avg_weekly_products"), Term("share_others_changing"),
            Term("mean_abs_others"),
        ]),
        per_category=True, description="+ mean |change| of changing peers")
    add("bycat_sync_producer",
        _spec([
            _VOL, Term("avg_weekly_products"), Term("share_others_changing"),
            Term("mean_abs_others"), Term("share_same_producer_changing"),
        ]),
        per_category=True, description="+ same-producer synchronization")

    add("bycat_exclude_2c", _spec([_VOL], filters=("exclude_leq_2c",)), per_category=True,
        description="measurement errors: drop |change| <= 2c")
    add("bycat_exclude_coupon", _spec([_VOL], filters=("exclude_coupon_adjacent",)),
        per_category=True, description="measurement errors: drop coupon-adjacent")
    add("bycat_rolling_volume", _spec([Term("rolling_volume", "ln")]), per_category=True,
        description="rolling 52-week volume instead of full-sample volume")
    add("bycat_zones", _spec(controls, _FE_CAT + ("zone",)), per_category=True,
        description="adds pricing-zone fixed effects")
    add("bycat_markup", _spec([_VOL, Term("avg_margin")]), per_category=True,
        description="adds the average markup")
    add("bycat_holiday", _spec([_VOL], filters=("holiday_only",)), per_category=True,
        description="holiday-period subsample")
    add("bycat_peak_weeks", _spec([_VOL, Term("peak_week")]), per_category=True,
        description="adds the peak-week dummy")
    add("bycat_single_units", _spec([_VOL], filters=("single_units",)), per_category=True,
        description="drops multi-unit packs")
    add("pooled_storable_interaction",
        _spec(
            [_VOL, Term("avg_volume", "ln", interact="non_storable"), Term("non_storable")],
            _FE_POOLED,
        ),
        description="pooled with non-storable interaction (dummy absorbed by product FEs)")
    add("bycat_increases", _spec([_VOL], filters=("increases",)), per_category=True,
        description="price increases only")
    add("bycat_decreases", _spec([_VOL], filters=("decreases",)), per_category=True,
        description="price decreases only")
    add("bycat_national_brands", _spec([_VOL], filters=("brand:national",)), per_category=True,
        description="national brands only")
    add("bycat_private_labels", _spec([_VOL], filters=("brand:private",)), per_category=True,
        description="private labels only")
    for q in (1, 2, 3, 4):
        add(f"bycat_producer_quartile{q}", _spec([_VOL], filters=(f"quartile:{q}",)),
            per_category=True, description=f"producer-size quartile {q}")

    add("bycat_any_change", _spec([_VOL], dep="price_change"), per_category=True,
        unit="week", description="likelihood of any price change, weekly panel")
    add("bycat_any_change_regular",
        _spec([_VOL], dep="price_change", filters=("regular_only",)),
        per_category=True, unit="week",
        description="any-change likelihood on regular prices")

    return p


PRESETS = _build_presets()


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    return PRESETS[name]


def list_presets() -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "name": p.name,
                "per_category": p.per_category,
                "unit": p.unit,
                "description": p.description,
            }
            for p in PRESETS.values()
        ]
    )


# ---------------------------------------------------------------------------
# dataset assembly
# ---------------------------------------------------------------------------


def load_event_dataset(
    analysis_dir,
    meta_path=None,
    stores_path=None,
    rule: SmallChangeRule | None = None,
    fmt: str = "csv",
) -> pd.DataFrame:
    """Flat per-event frame: events + stats + sync + producer size + meta + stores.

    ``rule`` recomputes the small dummy under a different threshold than the
    one used at analysis time (the events carry the raw change sizes, so any
    rule can be evaluated after the fact).
    """
    events = mio.read_table(os.path.join(analysis_dir, "events.csv"), fmt)
    stats = mio.read_table(os.path.join(analysis_dir, "product_store_stats.csv"), fmt)
    df = events.merge(
        stats[
            [
                "store",
                "upc",
                "avg_volume",
                "avg_volume_52w",
                "avg_price",
                "avg_revenue",
                "avg_margin",
                "mean_abs_change",
            ]
        ],
        on=["store", "upc"],
        how="left",
    )
    sync_path = os.path.join(analysis_dir, "sync_features.csv")
    if os.path.exists(sync_path):
        sync = mio.read_table(sync_path, fmt)
        df = df.merge(sync, on=["store", "upc", "week"], how="left")
    psize_path = os.path.join(analysis_dir, "producer_size.csv")
    producer_sizes = (
        mio.read_table(psize_path, fmt) if os.path.exists(psize_path) else None
    )
    if meta_path is not None:
        meta = mio.read_meta(meta_path)
        df = df.merge(meta, on="upc", how="left")
        df["non_storable"] = 1 - df["storable"].fillna(1)
        if producer_sizes is not None and len(producer_sizes):
            df = df.merge(producer_sizes, on="producer", how="left")
    if stores_path is not None:
        stores = mio.read_stores(stores_path)
        df = df.merge(stores.drop(columns=["holiday_calendar"]), on="store", how="left")
    df["abs_wholesale_change_pct"] = df["wholesale_change_pct"].abs()
    df["revenue_hat"] = df["avg_volume"] * df["avg_price"]
    if rule is not None:
        df["small"] = small_change_mask(
            df, rule, stats[["store", "upc", "mean_abs_change"]]
        ).astype(int)
    return df


def build_weekly_dataset(
    movement_path,
    analysis_dir,
    meta_path=None,
    mode: str = "survived2w",
    filters=(),
    sale_depth: float = 0.05,
    sale_window: int = 8,
    sale_tol: int = 0,
    alias_path=None,
    calendar_path=None,
    fmt: str = "csv",
) -> pd.DataFrame:
    """Weekly at-risk panel with a price-change dummy, for likelihood regressions.

    One row per product-store-week where the previous week's price is
    observed; the dummy marks weeks with a detected change under the given
    mode and filters.  The regular_only filter here keeps weeks whose sale
    state is regular.  This builder materializes the panel in memory, which
    is fine up to a few million rows.
    """
    stats = mio.read_table(os.path.join(analysis_dir, "product_store_stats.csv"), fmt)
    alias = mio.read_upc_alias(alias_path) if alias_path else None
    cal = {}
    if calendar_path:
        caldf = mio.read_calendar(calendar_path)
        for r in caldf.itertuples():
            cal[int(r.week)] = int(r.holiday)
    regular_only = "regular_only" in filters
    ev_filters = tuple(f for f in filters if f != "regular_only")
    rows = {
        "store": [], "upc": [], "week": [], "price_change": [],
        "on_sale_or_bounceback": [], "nine_ending_pre": [],
        "wholesale_change_pct": [], "month": [], "year": [], "holiday": [],
    }
    for store, upc, arrays in mio.iter_series_blocks(movement_path, alias):
        weeks = arrays["week"]
        if len(weeks) < 2:
            continue
        prices = arrays["price"]
        margins = arrays["margin_pct"]
        fs_flags, _ = sales_filter(prices, weeks, sale_depth, sale_window, sale_tol)
        adjacent = np.nonzero(np.diff(weeks) == 1)[0] + 1
        if len(adjacent) == 0:
            continue
        changed_at = np.zeros(len(weeks), dtype=bool)
        ev = _series_events(weeks, prices, arrays["sale_flag"], fs_flags)
        if ev is not None:
            keep = _event_keep_mask(ev, mode, ev_filters)
            changed_at[ev["obs_index"][keep]] = True
        sale_state = fs_flags != 0
        mask = adjacent
        if regular_only:
            mask = adjacent[(~sale_state[adjacent]) & (~sale_state[adjacent - 1])]
        if len(mask) == 0:
            continue
        wholesale = prices * (1.0 - margins / 100.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            wch = (wholesale[mask] - wholesale[mask - 1]) / wholesale[mask - 1]
        n = len(mask)
        rows["store"].append(np.full(n, store, dtype=np.int64))
        rows["upc"].append(np.full(n, upc, dtype=np.int64))
        rows["week"].append(weeks[mask])
        rows["price_change"].append(changed_at[mask].astype(np.int64))
        rows["on_sale_or_bounceback"].append(
            (sale_state[mask] | sale_state[mask - 1]).astype(np.int64)
        )
        rows["nine_ending_pre"].append((prices[mask - 1] % 10 == 9).astype(np.int64))
        rows["wholesale_change_pct"].append(wch)
        months, years, hols = [], [], []
        for w in weeks[mask]:
            m, y = mio.week_month_year(int(w))
            months.append(m)
            years.append(y)
            hols.append(cal.get(int(w), 0))
        rows["month"].append(np.asarray(months))
        rows["year"].append(np.asarray(years))
        rows["holiday"].append(np.asarray(hols))
    df = pd.DataFrame({k: np.concatenate(v) if v else np.array([]) for k, v in rows.items()})
    df = df.merge(
        stats[["store", "upc", "avg_volume", "avg_price", "avg_margin"]],
        on=["store", "upc"],
        how="left",
    )
    df["abs_wholesale_change_pct"] = df["wholesale_change_pct"].abs()
    if meta_path is not None:
        meta = mio.read_meta(meta_path)
        df = df.merge(meta, on="upc", how="left")
        df["non_storable"] = 1 - df["storable"].fillna(1)
    return df


def run_spec(data: pd.DataFrame, spec_or_preset, per_category: bool | None = None):
    """Fit a preset (by name), a Preset, or a bare RegressionSpec on the data.

    Per-category presets return {category: result-or-error-string}; everything
    else returns one RegressionResult.  ``per_category`` overrides the
    preset's own setting when given.
    """
    from .regress import fit, run_per_category

    if isinstance(spec_or_preset, str):
        preset = get_preset(spec_or_preset)
        spec, by_cat = preset.spec, preset.per_category
    elif isinstance(spec_or_preset, Preset):
        spec, by_cat = spec_or_preset.spec, spec_or_preset.per_category
    else:
        spec, by_cat = spec_or_preset, False
    if per_category is not None:
        by_cat = per_category
    if by_cat:
        return run_per_category(data, spec)
    return fit(data, spec)


# ---------------------------------------------------------------------------
# spec files and result tables
# ---------------------------------------------------------------------------


def parse_spec_file(path) -> RegressionSpec:
    """Parse the key: value spec format into a RegressionSpec."""
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if ":" not in line:
                raise ValueError(f"{path}: cannot parse line {raw!r}")
            key, val = line.split(":", 1)
            values[key.strip().lower()] = val.strip()
    if "dependent" not in values or "regressors" not in values:
        raise ValueError(f"{path}: spec needs at least dependent and regressors")

    def _list(key, default=""):
        raw = values.get(key, default)
        return [s.strip() for s in raw.split(",") if s.strip()]

    return RegressionSpec(
        dependent=values["dependent"],
        regressors=tuple(Term.parse(s) for s in _list("regressors")),
        fixed_effects=tuple(_list("fixed_effects", "month, year, store, upc")),
        cluster=values.get("cluster") or None,
        se_kind=values.get("se", "clustered"),
        sample_filters=tuple(_list("filters")),
    )


def results_frame(results, focus: str | None = None) -> pd.DataFrame:
    """Summarize one result or a per-category dict into the output CSV shape."""
    from .regress import RegressionResult

    rows = []

    def _emit(result, category=""):
        if isinstance(result, RegressionResult):
            frame = result.summary_frame()
            frame.insert(0, "category", category)
            if focus is not None:
                frame = frame[frame["term"] == focus]
            rows.append(frame)
        else:
            rows.append(
                pd.DataFrame(
                    [
                        {
                            "category": category,
                            "term": "(failed)",
                            "estimate": np.nan,
                            "se": np.nan,
                            "t": np.nan,
                            "stars": "",
                            "n_obs": 0,
                            "n_clusters": "",
                            "error": str(result),
                        }
                    ]
                )
            )

    if isinstance(results, dict):
        for cat, res in results.items():
            _emit(res, category=cat)
    else:
        _emit(results)
    out = pd.concat(rows, ignore_index=True)
    if "error" not in out.columns:
        out["error"] = ""
    return out
