"""Empirical procedures for weekly scanner price panels.

Everything here operates on (store, upc, week) panels of integer-cent prices:
gap-aware volume averaging, price-change detection with survival and
measurement-error filters, small-change classification under absolute,
percentage, and relative thresholds, sale/bounce-back flagging, volume
deciles and terciles, size histograms, synchronization features, producer
size, peak weeks, and category summaries.

Prices are integer cents throughout and every threshold comparison is
boundary-inclusive and carried out in exact arithmetic (|d| * 100 <= T * pre
rather than a float ratio), so a 4-cent change on a 200-cent price is exactly
a 2% change.

The per-series kernels (`sales_filter`, `_series_events`, ...) are shared by
the in-memory API below and by the streaming pipeline in
:mod:`menucost.analyze`, which applies them one product-store series at a
time so memory stays bounded by the number of product-stores, not rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = [
    "REGULAR",
    "SALE",
    "BOUNCE",
    "SmallChangeRule",
    "PriceChangeEvent",
    "ProductStoreStats",
    "average_sales_volume",
    "rolling_volume",
    "sales_filter",
    "nine_ending",
    "is_small_change",
    "classify_small",
    "detect_price_changes",
    "small_change_mask",
    "compute_product_store_stats",
    "decile_table",
    "size_histogram",
    "synchronization_features",
    "producer_size",
    "peak_weeks",
    "category_summary",
]

# sale-filter week states
REGULAR = 0
SALE = 1
BOUNCE = 2

EVENT_COLUMNS = [
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
    "rolling_volume",
]

MODES = ("all_adjacent", "survived2w")
FILTERS = (
    "exclude_leq_2c",
    "exclude_coupon_adjacent",
    "exclude_sale_bounceback",
    "regular_only",
)


@dataclass(frozen=True)
class SmallChangeRule:
    """How to call a price change "small".

    kind:
      * ``abs_cents``  -- |delta| <= threshold cents,
      * ``pct``        -- |delta| / pre-change price <= threshold percent,
      * ``relative_kappa`` -- |delta| <= threshold * mean |delta| of the
        product-store.

    All thresholds are inclusive.
    """

    kind: str
    threshold: float

    def __post_init__(self) -> None:
        if self.kind not in ("abs_cents", "pct", "relative_kappa"):
            raise ValueError(f"unknown rule kind {self.kind!r}")
        if self.kind == "relative_kappa":
            if not (0.0 < self.threshold <= 1.0):
                raise ValueError(f"kappa must be in (0, 1], got {self.threshold}")
        elif self.threshold <= 0:
            raise ValueError(f"threshold must be > 0, got {self.threshold}")

    @classmethod
    def parse(cls, text: str) -> "SmallChangeRule":
        """Parse "abs:10", "pct:2", or "kappa:0.5"."""
        try:
            kind, raw = text.split(":", 1)
            value = float(raw)
        except ValueError as err:
            raise ValueError(f"cannot parse small-change rule {text!r}") from err
        kinds = {"abs": "abs_cents", "pct": "pct", "kappa": "relative_kappa"}
        if kind not in kinds:
            raise ValueError(f"unknown small-change rule kind {kind!r}")
        return cls(kind=kinds[kind], threshold=value)

    def label(self) -> str:
        short = {"abs_cents": "abs", "pct": "pct", "relative_kappa": "kappa"}[self.kind]
        return f"{short}:{self.threshold:g}"


@dataclass(frozen=True)
class PriceChangeEvent:
    """One detected price change (record form of an events-table row)."""

    store: int
    upc: int
    week: int
    pre_price: int
    post_price: int
    delta_cents: int
    delta_pct: float
    direction: str
    survived_two_weeks: bool
    nine_ending_pre: bool
    on_sale_or_bounceback: bool
    coupon_adjacent: bool


@dataclass(frozen=True)
class ProductStoreStats:
    """Per product-store aggregates used as regressors and ranking keys."""

    store: int
    upc: int
    avg_volume: float
    avg_volume_52w: float
    avg_price: float
    avg_revenue: float
    avg_margin: float
    mean_abs_change: float
    n_changes: int
    n_small: int
    n_obs: int
    first_week: int
    last_week: int
    single_week: bool


# ---------------------------------------------------------------------------
# volume averaging
# ---------------------------------------------------------------------------


def _series_arrays(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, pd.Series):
        weeks = series.index.to_numpy()
        units = series.to_numpy()
    elif isinstance(series, dict):
        weeks = np.fromiter(series.keys(), dtype=np.int64)
        units = np.fromiter(series.values(), dtype=np.float64)
        order = np.argsort(weeks, kind="stable")
        weeks, units = weeks[order], units[order]
    else:
        weeks, units = series
        weeks = np.asarray(weeks)
        units = np.asarray(units)
    if len(weeks) == 0:
        raise ValueError("volume series is empty")
    return weeks, units


def average_sales_volume(series) -> float:
    """Gap-penalizing average volume: total units / (last week - first week).

    Missing weeks count as zero-sale weeks through the denominator.  A series
    observed in a single week divides by 1 (the denominator would otherwise
    be zero); note that for a gap-free series the divisor is n - 1, so the
    result then *exceeds* the per-observed-week mean.  The formula is applied
    as defined either way and the single-week case is flagged in the stats
    table.
    """
    weeks, units = _series_arrays(series)
    span = int(weeks[-1]) - int(weeks[0])
    return float(units.sum()) / max(span, 1)


def rolling_volume(series, t: int, window: int = 52) -> float:
    """Same averaging rule applied to observations in [t - window, t - 1].

    Returns NaN when the window holds no observations.
    """
    weeks, units = _series_arrays(series)
    lo = np.searchsorted(weeks, t - window, side="left")
    hi = np.searchsorted(weeks, t, side="left")
    if hi <= lo:
        return float("nan")
    w = weeks[lo:hi]
    span = int(w[-1]) - int(w[0])
    return float(units[lo:hi].sum()) / max(span, 1)


# ---------------------------------------------------------------------------
# sale / bounce-back filter
# ---------------------------------------------------------------------------


def sales_filter(
    prices,
    weeks=None,
    depth: float = 0.05,
    window: int = 8,
    tol_cents: int = 0,
):
    """Flag temporary discounts on one price series.

    A week opens a candidate sale when its price falls to at least ``depth``
    below the prevailing regular price; the spell is confirmed if, within
    ``window`` calendar weeks of its start, the price comes back to within
    ``tol_cents`` of the regular level.  The first return week is the
    bounce-back, and its price becomes the new regular level.  A drop that
    never returns is a genuine price cut: the lower price becomes regular.
    The regular price is carried forward through sale weeks.

    Returns (flags, regular) where flags holds REGULAR/SALE/BOUNCE codes and
    regular is the carried-forward regular price.  Re-running the filter on
    its own regular series flags nothing.
    """
    prices = np.asarray(prices, dtype=np.int64)
    n = len(prices)
    if n == 0:
        raise ValueError("price series is empty")
    if weeks is None:
        weeks = np.arange(n, dtype=np.int64)
    else:
        weeks = np.asarray(weeks, dtype=np.int64)
    flags = np.zeros(n, dtype=np.int8)
    regular = np.empty(n, dtype=np.int64)

    reg = int(prices[0])
    regular[0] = reg
    i = 1
    while i < n:
        p = int(prices[i])
        if p <= reg * (1.0 - depth):
            limit = weeks[i] + window
            found = -1
            j = i + 1
            while j < n and weeks[j] <= limit:
                if prices[j] >= reg - tol_cents:
                    found = j
                    break
                j += 1
            if found >= 0:
                flags[i:found] = SALE
                regular[i:found] = reg
                flags[found] = BOUNCE
                reg = int(prices[found])
                regular[found] = reg
                i = found + 1
                continue
        reg = p
        regular[i] = reg
        i += 1
    return flags, regular


def nine_ending(price: int) -> bool:
    """True when the cent digit is 9."""
    return price % 10 == 9


# ---------------------------------------------------------------------------
# small-change classification
# ---------------------------------------------------------------------------


def is_small_change(
    delta_cents: int,
    pre_price: int,
    rule: SmallChangeRule,
    mean_abs_change: float | None = None,
) -> bool:
    """Boundary-inclusive small test for one change; exact at the threshold."""
    d = abs(int(delta_cents))
    if rule.kind == "abs_cents":
        return d <= rule.threshold
    if rule.kind == "pct":
        # exact integer comparison: |d|/pre <= T/100  <=>  100*|d| <= T*pre
        return 100.0 * d <= rule.threshold * int(pre_price)
    if mean_abs_change is None or not mean_abs_change > 0:
        raise ValueError("relative_kappa rule needs a positive mean |change|")
    return d <= rule.threshold * mean_abs_change


def classify_small(event, rule: SmallChangeRule, stats=None) -> bool:
    """Record-level wrapper around :func:`is_small_change`."""
    mean_abs = getattr(stats, "mean_abs_change", None) if stats is not None else None
    return is_small_change(event.delta_cents, event.pre_price, rule, mean_abs)


def small_change_mask(
    events: pd.DataFrame,
    rule: SmallChangeRule,
    stats: pd.DataFrame | None = None,
) -> np.ndarray:
    """Vectorized small-change classification for an events table."""
    d = events["delta_cents"].abs().to_numpy()
    if rule.kind == "abs_cents":
        return d <= rule.threshold
    if rule.kind == "pct":
        return 100.0 * d <= rule.threshold * events["pre_price"].to_numpy()
    if stats is None:
        raise ValueError("relative_kappa rule needs the product-store stats table")
    key = events[["store", "upc"]]
    merged = key.merge(
        stats[["store", "upc", "mean_abs_change"]], on=["store", "upc"], how="left"
    )
    mean_abs = merged["mean_abs_change"].to_numpy()
    if np.any(~(mean_abs > 0)):
        raise ValueError("relative_kappa rule hit a product-store with zero mean |change|")
    return d <= rule.threshold * mean_abs


# ---------------------------------------------------------------------------
# change detection
# ---------------------------------------------------------------------------


def _series_events(weeks, prices, raw_flags, fs_flags):
    """Detect all adjacent-week price changes for one sorted series.

    Returns a dict of aligned arrays (one entry per event).  An event needs
    the price observed in both week t-1 and week t; survival additionally
    needs week t+1 observed at the same price.
    """
    weeks = np.asarray(weeks, dtype=np.int64)
    prices = np.asarray(prices, dtype=np.int64)
    n = len(weeks)
    if n < 2:
        return None
    adjacent = weeks[1:] - weeks[:-1] == 1
    changed = prices[1:] != prices[:-1]
    idx = np.nonzero(adjacent & changed)[0] + 1  # observation index of week t
    if len(idx) == 0:
        return None
    nxt = idx + 1
    has_next = nxt < n
    survived = np.zeros(len(idx), dtype=bool)
    ok = np.nonzero(has_next)[0]
    survived[ok] = (weeks[nxt[ok]] == weeks[idx[ok]] + 1) & (
        prices[nxt[ok]] == prices[idx[ok]]
    )
    coupon_here = raw_flags == "C"
    sale_bb = fs_flags != REGULAR
    return {
        "week": weeks[idx],
        "pre_price": prices[idx - 1],
        "post_price": prices[idx],
        "delta_cents": prices[idx] - prices[idx - 1],
        "survived_two_weeks": survived,
        "nine_ending_pre": prices[idx - 1] % 10 == 9,
        "on_sale_or_bounceback": sale_bb[idx] | sale_bb[idx - 1],
        "coupon_adjacent": coupon_here[idx] | coupon_here[idx - 1],
        "regular_pair": (fs_flags[idx] == REGULAR) & (fs_flags[idx - 1] == REGULAR),
        "sale_bb_post": sale_bb[idx],
        "obs_index": idx,
    }


def _event_keep_mask(ev: dict, mode: str, filters) -> np.ndarray:
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    keep = np.ones(len(ev["week"]), dtype=bool)
    if mode == "survived2w":
        keep &= ev["survived_two_weeks"]
    for f in filters:
        if f == "exclude_leq_2c":
            keep &= np.abs(ev["delta_cents"]) > 2
        elif f == "exclude_coupon_adjacent":
            keep &= ~ev["coupon_adjacent"]
        elif f == "exclude_sale_bounceback":
            keep &= ~ev["sale_bb_post"]
        elif f == "regular_only":
            keep &= ev["regular_pair"]
        else:
            raise ValueError(f"unknown filter {f!r}; expected one of {FILTERS}")
    return keep


def detect_price_changes(
    panel: pd.DataFrame,
    mode: str = "survived2w",
    filters=(),
    sale_depth: float = 0.05,
    sale_window: int = 8,
    sale_tol: int = 0,
    rolling_window: int = 52,
) -> pd.DataFrame:
    """Detect price changes across a whole panel and return the events table.

    ``mode`` is ``all_adjacent`` (any adjacent-week change) or ``survived2w``
    (post-change price also holds in week t + 1).  ``filters`` drop events by
    name: exclude_leq_2c, exclude_coupon_adjacent, exclude_sale_bounceback
    (week t is a sale or bounce-back week), regular_only (both endpoints
    regular).  The sale/bounce flags come from :func:`sales_filter` with the
    given calibration; the raw coupon flag comes from the panel's sale_flag
    column.
    """
    panel = _sorted_panel(panel)
    frames = []
    sale_raw = panel["sale_flag"] if "sale_flag" in panel.columns else None
    for (store, upc), grp in panel.groupby(["store", "upc"], sort=False):
        weeks = grp["week"].to_numpy()
        prices = grp["price"].to_numpy()
        units = grp["units"].to_numpy() if "units" in grp.columns else np.zeros(len(grp))
        raw = (
            sale_raw.loc[grp.index].fillna("").to_numpy(dtype=object)
            if sale_raw is not None
            else np.full(len(grp), "", dtype=object)
        )
        fs_flags, _ = sales_filter(prices, weeks, sale_depth, sale_window, sale_tol)
        ev = _series_events(weeks, prices, raw, fs_flags)
        if ev is None:
            continue
        keep = _event_keep_mask(ev, mode, filters)
        if not keep.any():
            continue
        df = pd.DataFrame({k: v[keep] for k, v in ev.items() if k != "obs_index"})
        df.insert(0, "upc", upc)
        df.insert(0, "store", store)
        df["rolling_volume"] = [
            rolling_volume((weeks, units), int(w), rolling_window) for w in df["week"]
        ]
        frames.append(df)
    if not frames:
        return _empty_events()
    out = pd.concat(frames, ignore_index=True)
    out["delta_pct"] = out["delta_cents"] / out["pre_price"]
    out["direction"] = np.where(out["delta_cents"] > 0, "increase", "decrease")
    return out[EVENT_COLUMNS].sort_values(["store", "upc", "week"], ignore_index=True)


def _empty_events() -> pd.DataFrame:
    return pd.DataFrame(
        {
            c: pd.Series(dtype=t)
            for c, t in zip(
                EVENT_COLUMNS,
                [
                    "int64",
                    "int64",
                    "int64",
                    "int64",
                    "int64",
                    "int64",
                    "float64",
                    "object",
                    "bool",
                    "bool",
                    "bool",
                    "bool",
                    "bool",
                    "float64",
                ],
            )
        }
    )


def _sorted_panel(panel: pd.DataFrame) -> pd.DataFrame:
    # cheap vectorized sortedness check; sort a copy only when needed
    if len(panel) > 1:
        s = panel["store"].to_numpy()
        u = panel["upc"].to_numpy()
        w = panel["week"].to_numpy()
        ds = np.diff(s)
        du = np.diff(u)
        dw = np.diff(w)
        ok = (ds > 0) | ((ds == 0) & (du > 0)) | ((ds == 0) & (du == 0) & (dw > 0))
        if not ok.all():
            return panel.sort_values(["store", "upc", "week"], ignore_index=True)
    return panel


# ---------------------------------------------------------------------------
# product-store stats
# ---------------------------------------------------------------------------


def _series_stats(weeks, prices, units, margins, filtered_deltas, rule, rolling_window=52):
    weeks = np.asarray(weeks, dtype=np.int64)
    span = int(weeks[-1]) - int(weeks[0])
    avg_volume = float(np.sum(units)) / max(span, 1)
    revenue = np.asarray(prices, dtype=np.float64) * np.asarray(units, dtype=np.float64)
    avg_revenue = float(revenue.sum()) / max(span, 1)
    tail = rolling_volume((weeks, units), int(weeks[-1]) + 1, rolling_window)
    n_changes = len(filtered_deltas["delta_cents"]) if filtered_deltas else 0
    if n_changes:
        abs_d = np.abs(filtered_deltas["delta_cents"])
        mean_abs = float(abs_d.mean())
        if rule.kind == "relative_kappa":
            n_small = int(np.sum(abs_d <= rule.threshold * mean_abs))
        elif rule.kind == "pct":
            n_small = int(
                np.sum(100.0 * abs_d <= rule.threshold * filtered_deltas["pre_price"])
            )
        else:
            n_small = int(np.sum(abs_d <= rule.threshold))
    else:
        mean_abs = 0.0
        n_small = 0
    return {
        "avg_volume": avg_volume,
        "avg_volume_52w": tail,
        "avg_price": float(np.mean(prices)),
        "avg_revenue": avg_revenue,
        "avg_margin": float(np.mean(margins)) if margins is not None else float("nan"),
        "mean_abs_change": mean_abs,
        "n_changes": n_changes,
        "n_small": n_small,
        "n_obs": len(weeks),
        "first_week": int(weeks[0]),
        "last_week": int(weeks[-1]),
        "single_week": span == 0,
    }


def compute_product_store_stats(
    panel: pd.DataFrame,
    events: pd.DataFrame,
    rule: SmallChangeRule,
    rolling_window: int = 52,
) -> pd.DataFrame:
    """Aggregate each product-store series; change counts use the given events."""
    panel = _sorted_panel(panel)
    ev_groups = (
        {k: g for k, g in events.groupby(["store", "upc"], sort=False)}
        if len(events)
        else {}
    )
    rows = []
    for (store, upc), grp in panel.groupby(["store", "upc"], sort=False):
        ev = ev_groups.get((store, upc))
        deltas = (
            {
                "delta_cents": ev["delta_cents"].to_numpy(),
                "pre_price": ev["pre_price"].to_numpy(),
            }
            if ev is not None
            else None
        )
        margins = (
            grp["margin_pct"].to_numpy() if "margin_pct" in grp.columns else None
        )
        units = grp["units"].to_numpy() if "units" in grp.columns else np.zeros(len(grp))
        row = _series_stats(
            grp["week"].to_numpy(),
            grp["price"].to_numpy(),
            units,
            margins,
            deltas,
            rule,
            rolling_window,
        )
        row["store"] = store
        row["upc"] = upc
        rows.append(row)
    cols = [
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
    return pd.DataFrame(rows, columns=cols)


# ---------------------------------------------------------------------------
# deciles, terciles, histograms
# ---------------------------------------------------------------------------


def _rank_groups(values: np.ndarray, n_groups: int) -> np.ndarray:
    """Equal-count group labels 1..n_groups from ranks; sizes differ by <= 1."""
    n = len(values)
    order = np.argsort(values, kind="stable")
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.arange(n) * n_groups // n + 1
    return labels


def decile_table(
    stats: pd.DataFrame,
    events: pd.DataFrame | None = None,
    rule: SmallChangeRule | None = None,
    event_weighted: bool = False,
) -> pd.DataFrame:
    """Share of small changes by sales-volume decile.

    Default ranks product-stores by average volume (ties resolved by the
    stable input order) and pools each decile's events through the stats
    table's change counts.  ``event_weighted=True`` instead ranks the events
    themselves by their product-store's volume, so deciles hold equal numbers
    of events rather than of product-stores; that variant needs the events
    table and a rule.
    """
    if event_weighted:
        if events is None or rule is None:
            raise ValueError("event-weighted deciles need the events table and a rule")
        if len(events) < 10:
            raise ValueError("need at least 10 events for event-weighted deciles")
        merged = events.merge(
            stats[["store", "upc", "avg_volume", "mean_abs_change"]],
            on=["store", "upc"],
        )
        small = small_change_mask(
            merged, rule, stats[["store", "upc", "mean_abs_change"]]
        )
        dec = _rank_groups(merged["avg_volume"].to_numpy(), 10)
        df = pd.DataFrame({"decile": dec, "small": small.astype(int)})
        out = df.groupby("decile").agg(n_changes=("small", "size"), n_small=("small", "sum"))
    else:
        if len(stats) < 10:
            raise ValueError(
                f"need at least 10 product-stores for deciles, got {len(stats)}"
            )
        dec = _rank_groups(stats["avg_volume"].to_numpy(), 10)
        df = stats.assign(decile=dec)
        out = df.groupby("decile").agg(
            n_product_stores=("decile", "size"),
            n_changes=("n_changes", "sum"),
            n_small=("n_small", "sum"),
        )
    out = out.reindex(range(1, 11), fill_value=0)
    out["share_small"] = np.where(
        out["n_changes"] > 0, out["n_small"] / out["n_changes"].replace(0, 1), np.nan
    )
    return out.reset_index().rename(columns={"index": "decile"})


def volume_terciles(stats: pd.DataFrame) -> pd.Series:
    """low / mid / high sales-volume labels per product-store."""
    labels = _rank_groups(stats["avg_volume"].to_numpy(), 3)
    names = np.array(["low", "mid", "high"], dtype=object)
    return pd.Series(names[labels - 1], index=stats.index, name="volume_group")


def size_histogram(
    events: pd.DataFrame,
    stats: pd.DataFrame,
    unit: str = "cents",
) -> pd.DataFrame:
    """Frequency of changes by size bin and volume tercile.

    ``cents`` bins are exact |delta| values 1..50; ``percent`` bins b cover
    |delta_pct| in (b-1, b] for b = 1..30.  Frequencies are normalized by the
    tercile's total event count, including events outside the binned range,
    so the bars of one group sum to at most 1.
    """
    if len(events) == 0:
        raise ValueError("events table is empty")
    if unit == "cents":
        n_bins = 50
        raw = events["delta_cents"].abs().to_numpy()
        bins = raw.astype(np.int64)
        in_range = (bins >= 1) & (bins <= n_bins) & (raw == bins)
    elif unit == "percent":
        n_bins = 30
        raw = np.abs(events["delta_pct"].to_numpy()) * 100.0
        bins = np.ceil(raw - 1e-12).astype(np.int64)
        in_range = (bins >= 1) & (bins <= n_bins)
    else:
        raise ValueError(f"unknown unit {unit!r}")

    terc = stats.assign(volume_group=volume_terciles(stats))
    merged = events[["store", "upc"]].merge(
        terc[["store", "upc", "volume_group"]], on=["store", "upc"], how="left"
    )
    group = merged["volume_group"].fillna("mid").to_numpy()

    rows = []
    for name in ("low", "mid", "high"):
        sel = group == name
        total = int(sel.sum())
        counts = (
            np.bincount(bins[sel & in_range], minlength=n_bins + 1)[1:]
            if total
            else np.zeros(n_bins, dtype=np.int64)
        )
        for b in range(1, n_bins + 1):
            rows.append(
                {
                    "volume_group": name,
                    "size": b,
                    "count": int(counts[b - 1]),
                    "frequency": counts[b - 1] / total if total else 0.0,
                }
            )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# synchronization
# ---------------------------------------------------------------------------


def _at_risk_table(panel: pd.DataFrame) -> pd.DataFrame:
    """(store, upc, week) rows where a change was observable (week - 1 present)."""
    panel = _sorted_panel(panel)
    s = panel["store"].to_numpy()
    u = panel["upc"].to_numpy()
    w = panel["week"].to_numpy()
    same = np.zeros(len(panel), dtype=bool)
    if len(panel) > 1:
        same[1:] = (s[1:] == s[:-1]) & (u[1:] == u[:-1]) & (w[1:] == w[:-1] + 1)
    return pd.DataFrame({"store": s[same], "upc": u[same], "week": w[same]})


def synchronization_features(
    events: pd.DataFrame,
    panel: pd.DataFrame,
    meta: pd.DataFrame,
    level: str = "category",
) -> pd.DataFrame:
    """Peer-change features per event, excluding the event itself.

    For event (i, s, t): among the *other* products of the same store and
    ``level`` group that could have changed at t (price observed in t-1 and
    t), the share that did change, the mean |delta| of those that changed,
    and the share of same-producer products that changed.  Events with no
    eligible peers get NaN, to be dropped downstream.
    """
    if level not in ("category", "producer"):
        raise ValueError(f"unknown level {level!r}")
    meta_cols = meta[["upc", "category", "producer"]]
    risk = _at_risk_table(panel).merge(meta_cols, on="upc", how="left")
    ev = events[["store", "upc", "week", "delta_cents"]].merge(
        meta_cols, on="upc", how="left"
    )

    def _agg(frame, dims, with_abs):
        spec = {"n": ("upc", "size")}
        if with_abs:
            spec["sum_abs"] = ("abs_delta", "sum")
        return frame.groupby(dims, as_index=False).agg(**spec)

    ev = ev.assign(abs_delta=ev["delta_cents"].abs())
    lvl = ["store", level, "week"]
    risk_lvl = _agg(risk, lvl, with_abs=False).rename(columns={"n": "n_at_risk"})
    chg_lvl = _agg(ev, lvl, with_abs=True).rename(columns={"n": "n_changed"})
    prod = ["store", "producer", "week"]
    risk_prod = _agg(risk, prod, with_abs=False).rename(columns={"n": "n_at_risk_prod"})
    chg_prod = _agg(ev[prod + ["upc"]], prod, with_abs=False).rename(
        columns={"n": "n_changed_prod"}
    )

    out = (
        ev.merge(risk_lvl, on=lvl, how="left")
        .merge(chg_lvl, on=lvl, how="left")
        .merge(risk_prod, on=prod, how="left")
        .merge(chg_prod, on=prod, how="left")
    )
    for col in ("n_at_risk", "n_changed", "sum_abs", "n_at_risk_prod", "n_changed_prod"):
        out[col] = out[col].fillna(0)

    others_risk = out["n_at_risk"] - 1
    others_chg = out["n_changed"] - 1
    out["share_others_changing"] = np.where(
        others_risk > 0, others_chg / others_risk.replace(0, 1), np.nan
    )
    out["mean_abs_others"] = np.where(
        others_chg > 0,
        (out["sum_abs"] - out["abs_delta"]) / others_chg.replace(0, 1),
        np.nan,
    )
    prod_risk = out["n_at_risk_prod"] - 1
    prod_chg = out["n_changed_prod"] - 1
    out["share_same_producer_changing"] = np.where(
        prod_risk > 0, prod_chg / prod_risk.replace(0, 1), np.nan
    )
    return out[
        [
            "store",
            "upc",
            "week",
            "share_others_changing",
            "mean_abs_others",
            "share_same_producer_changing",
        ]
    ]


# ---------------------------------------------------------------------------
# producer size, peak weeks, category summaries
# ---------------------------------------------------------------------------


def producer_size(panel: pd.DataFrame, meta: pd.DataFrame) -> pd.DataFrame:
    """Average weekly count of distinct products per producer, plus size quartiles.

    The weekly counts are averaged over *all* panel weeks, so weeks where a
    producer offers nothing count as zero.  Quartile 1 holds the smallest
    producers.
    """
    n_weeks = panel["week"].nunique()
    with_prod = panel[["upc", "week"]].merge(
        meta[["upc", "producer"]], on="upc", how="left"
    )
    weekly = with_prod.drop_duplicates(["producer", "week", "upc"]).groupby(
        ["producer", "week"]
    )["upc"].nunique()
    totals = weekly.groupby("producer").sum() / n_weeks
    out = totals.rename("avg_weekly_products").reset_index()
    out["size_quartile"] = _rank_groups(out["avg_weekly_products"].to_numpy(), 4)
    return out


def peak_weeks(events: pd.DataFrame, by: str = "store") -> tuple[pd.DataFrame, pd.Series]:
    """Minimal sets of most-active weeks covering half of each group's changes.

    ``by`` is "store" or "store_category" (the latter needs a category column
    on the events).  Weeks are ranked by change count, ties toward the
    earlier week; the peak set is the shortest prefix whose cumulative count
    reaches 50% of the group total.  Returns the peak table and a per-event
    peak dummy aligned with ``events``.
    """
    if by == "store":
        dims = ["store"]
    elif by == "store_category":
        if "category" not in events.columns:
            raise ValueError("store_category peaks need a category column on events")
        dims = ["store", "category"]
    else:
        raise ValueError(f"unknown grouping {by!r}")
    counts = events.groupby(dims + ["week"]).size().rename("n_changes").reset_index()
    rows = []
    for key, grp in counts.groupby(dims, sort=False):
        grp = grp.sort_values(["n_changes", "week"], ascending=[False, True])
        total = grp["n_changes"].sum()
        cum = 0
        for _, r in grp.iterrows():
            cum += r["n_changes"]
            rec = {d: r[d] for d in dims}
            rec.update(week=r["week"], n_changes=r["n_changes"], cum_share=cum / total)
            rows.append(rec)
            if 2 * cum >= total:
                break
    peaks = pd.DataFrame(rows, columns=dims + ["week", "n_changes", "cum_share"])
    keyset = set(map(tuple, peaks[dims + ["week"]].to_numpy().tolist()))
    dummy = pd.Series(
        [tuple(t) in keyset for t in events[dims + ["week"]].to_numpy().tolist()],
        index=events.index,
        name="peak_week",
    )
    return peaks, dummy


def category_summary(
    stats: pd.DataFrame, meta: pd.DataFrame
) -> pd.DataFrame:
    """Per-category change counts, volume, price, and the volume-revenue link.

    The correlation column is the Pearson correlation of ln(average volume)
    and ln(average revenue) across the category's product-stores; pairs with
    a nonpositive value on either side are dropped.
    """
    merged = stats.merge(meta[["upc", "category"]], on="upc", how="left")
    rows = []
    for cat, grp in merged.groupby("category", sort=True):
        vol = grp["avg_volume"].to_numpy()
        rev = grp["avg_revenue"].to_numpy()
        keep = (vol > 0) & (rev > 0)
        if keep.sum() >= 2:
            lv, lr = np.log(vol[keep]), np.log(rev[keep])
            sd = lv.std() * lr.std()
            corr = float(np.corrcoef(lv, lr)[0, 1]) if sd > 0 else float("nan")
        else:
            corr = float("nan")
        n_changes = int(grp["n_changes"].sum())
        rows.append(
            {
                "category": cat,
                "n_changes": n_changes,
                "n_small": int(grp["n_small"].sum()),
                "share_small": grp["n_small"].sum() / n_changes if n_changes else np.nan,
                "avg_volume": float(grp["avg_volume"].mean()),
                "n_upcs": int(grp["upc"].nunique()),
                "avg_price": float(grp["avg_price"].mean()),
                "corr_ln_volume_revenue": corr,
            }
        )
    return pd.DataFrame(rows)
