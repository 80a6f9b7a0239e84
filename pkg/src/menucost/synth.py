"""Synthetic scanner-panel generator driven by band-pricing firms.

Products draw their demand slope from ``beta_range`` and the economy scales
with it as a market-size replication: a product with beta = m * base.beta has
demand intercept m * alpha, curvature c / m, and disturbance scale m * sigma,
with the menu cost gamma held fixed.  Under this scaling expected output (and
so sales volume) is proportional to m while the optimal policy's exit
trigger, measured in steps, shrinks like m ** -0.25 -- so high-volume
products adjust more often and by fewer cents, exactly the pattern a fixed
lump-sum adjustment cost implies when the benefit of adjusting accumulates
over more units.  A pure slope pivot holding the intercept and curvature
fixed would instead make the per-unit pass-through explode as beta falls and
hand the *largest* cent-size changes to the highest-volume products; the
scale economy is the configuration in which volume alone carries the
mechanism.

One convenient invariant of the scaling: the sticky-price level and the
price change per gap step (pass-through times step size) are the same for
every m, so cent sizes differ across products only through the exit trigger
and an optional per-product price-level factor.

Weekly unit sales are lognormal around the product-store's expected output,
with occasional zero-sale weeks dropped from the output so gap-aware volume
averaging has real gaps to handle.  V-shaped temporary discounts with a
volume lift are injected so the sale filter has true positives; the band
walk freezes during a sale spell and the price returns to the regular level
afterwards.

Generation is vectorized across a store's products week by week, and each
store uses its own seed substream, so output is reproducible for a given
config and independent of how stores are batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .io import MOVEMENT_COLUMNS
from .model import ModelParams, band_halfwidth, passthrough_slope, sticky_price

__all__ = ["SynthConfig", "synth_panel", "write_panel", "default_config"]


@dataclass(frozen=True)
class SynthConfig:
    """Everything the generator needs; defaults give a mid-sized panel."""

    n_stores: int = 50
    n_products: int = 200
    n_weeks: int = 300
    base: ModelParams = field(
        default_factory=lambda: ModelParams(
            alpha=10.0, beta=1.0, a=1.0, b=1.0, c=0.5, gamma=1.0, sigma=0.0125
        )
    )
    beta_range: tuple[float, float] = (0.25, 9.75)
    demand_noise: float = 0.5
    price_unit: float = 100.0  # cents per model price unit
    categories: int = 12
    producers: int = 60
    share_private_label: float = 0.3
    seed: int = 20240229
    # dispersion and event-injection knobs
    volume_target: float = 10.0
    store_sigma: float = 0.25
    ps_sigma: float = 0.35  # product-store idiosyncratic market size
    price_scale_sigma: float = 0.25
    zero_week_prob: float = 0.05
    sale_prob: float = 0.015
    sale_depth: tuple[float, float] = (0.10, 0.30)
    sale_max_weeks: int = 3
    sale_lift: float = 3.0
    coupon_share: float = 0.05
    bonus_share: float = 0.05
    margin_mean: float = 25.0
    margin_sd: float = 4.0
    nine_ending_bias: float = 0.0
    holiday_weeks_mod52: tuple[int, ...] = (46, 47, 48, 49, 50, 51)

    def __post_init__(self) -> None:
        for name in ("n_stores", "n_products", "n_weeks", "categories", "producers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        lo, hi = self.beta_range
        if not (0 < lo <= hi):
            raise ValueError(f"beta_range must be positive and ordered, got {self.beta_range}")
        if self.base.b > 0 and hi >= self.base.alpha / self.base.b:
            raise ValueError(
                f"beta_range upper end {hi} infeasible for base economy "
                f"(needs beta < alpha/b = {self.base.alpha / self.base.b})"
            )
        if self.price_unit <= 0:
            raise ValueError("price_unit must be > 0")
        if self.base.sigma <= 0 or self.base.gamma <= 0:
            raise ValueError("base economy needs sigma > 0 and gamma > 0 to generate changes")


def default_config(**overrides) -> SynthConfig:
    return SynthConfig(**overrides)


def _product_draws(cfg: SynthConfig):
    rng = np.random.default_rng([cfg.seed, 0])
    lo, hi = cfg.beta_range
    m = np.exp(rng.uniform(math.log(lo), math.log(hi), size=cfg.n_products)) / cfg.base.beta
    price_scale = np.exp(rng.normal(0.0, cfg.price_scale_sigma, size=cfg.n_products))
    upc = np.arange(1, cfg.n_products + 1, dtype=np.int64) * 100 + 7
    category = np.arange(cfg.n_products, dtype=np.int64) * cfg.categories // cfg.n_products
    per_cat = max(1, cfg.producers // cfg.categories)
    within = np.zeros(cfg.n_products, dtype=np.int64)
    seen: dict[int, int] = {}
    for i, cat in enumerate(category):
        k = seen.get(int(cat), 0)
        within[i] = k
        seen[int(cat)] = k + 1
    producer = category * 1000 + (within % per_cat) + 1
    private = rng.uniform(size=cfg.n_products) < cfg.share_private_label
    pack = np.where(
        rng.uniform(size=cfg.n_products) < 0.85,
        1,
        rng.integers(2, 7, size=cfg.n_products),
    ).astype(np.int64)
    storable = (category % 4 != 3).astype(np.int64)
    return m, price_scale, upc, category, producer, private, pack, storable


def _store_draws(cfg: SynthConfig):
    rng = np.random.default_rng([cfg.seed, 1])
    factors = np.exp(rng.normal(0.0, cfg.store_sigma, size=cfg.n_stores))
    income = rng.integers(30_000, 90_001, size=cfg.n_stores)
    minority = np.round(rng.uniform(0.02, 0.6, size=cfg.n_stores), 3)
    unemployed = np.round(rng.uniform(0.02, 0.15, size=cfg.n_stores), 3)
    return factors, income, minority, unemployed


def synth_panel(cfg: SynthConfig):
    """Generate (movement, meta, stores, calendar) frames.

    Movement rows are sorted by (store, upc, week); weeks with a zero unit
    draw are omitted entirely.  Prices are integer cents exposed as
    two-decimal dollars by :func:`write_panel`.
    """
    m_prod, price_scale, upc, category, producer, private, pack, storable = _product_draws(cfg)
    store_factor, income, minority, unemployed = _store_draws(cfg)

    base = cfg.base
    phat = sticky_price(base)
    pass_sigma = passthrough_slope(base) * base.sigma  # price move per gap step
    hb_steps = band_halfwidth(base) / base.sigma  # trigger in steps at m = 1

    # normalize units so the panel-wide mean volume is near the target
    norm = float(np.mean(np.outer(store_factor, m_prod)))
    store_ids = np.arange(1, cfg.n_stores + 1, dtype=np.int64)

    frames = []
    for s_idx, store in enumerate(store_ids):
        frames.append(
            _store_block(
                cfg,
                store,
                s_idx,
                m_prod * store_factor[s_idx],
                price_scale,
                upc,
                pack,
                phat,
                pass_sigma,
                hb_steps,
                norm,
            )
        )
    movement = pd.concat(frames, ignore_index=True).rename(
        columns={"move": "units", "qty": "pack_qty", "sale": "sale_flag", "profit": "margin_pct"}
    )

    meta = pd.DataFrame(
        {
            "upc": upc,
            "category": category,
            "producer": producer,
            "brand": np.where(private, "private", "national"),
            "pack_qty": pack,
            "storable": storable,
        }
    )
    stores = pd.DataFrame(
        {
            "store": store_ids,
            "zone": (store_ids - 1) % 16 + 1,
            "median_income": income,
            "pct_minority": minority,
            "pct_unemployed": unemployed,
            "holiday_calendar": "calendar.csv",
        }
    )
    weeks = np.arange(cfg.n_weeks, dtype=np.int64)
    calendar = pd.DataFrame(
        {
            "week": weeks,
            "holiday": np.isin(weeks % 52, cfg.holiday_weeks_mod52).astype(np.int64),
        }
    )
    return movement, meta, stores, calendar


def _store_block(
    cfg: SynthConfig,
    store: int,
    s_idx: int,
    m_is: np.ndarray,
    price_scale: np.ndarray,
    upc: np.ndarray,
    pack: np.ndarray,
    phat: float,
    pass_sigma: float,
    hb_steps: float,
    norm: float,
) -> pd.DataFrame:
    rng = np.random.default_rng([cfg.seed, 1_000_000 + s_idx])
    n = cfg.n_products
    pu = cfg.price_unit

    # product-store idiosyncratic market size: the within-product,
    # within-store variation the fixed-effects regressions identify from
    m_is = m_is * np.exp(rng.normal(0.0, cfg.ps_sigma, size=n))
    # exit trigger in steps scales like m ** -1/4 under the market-size economy
    k_trig = np.ceil(hb_steps * m_is ** -0.25 - 1e-9).astype(np.int64)
    base_units = cfg.volume_target * m_is / norm
    margin_ps = np.clip(
        rng.normal(cfg.margin_mean, cfg.margin_sd, size=n), 5.0, 60.0
    )

    def reg_price_cents(levels: np.ndarray) -> np.ndarray:
        cents = np.rint(pu * price_scale * (phat + pass_sigma * levels)).astype(np.int64)
        if cfg.nine_ending_bias > 0:
            hit = rng.uniform(size=n) < cfg.nine_ending_bias
            cents = np.where(hit, (cents // 10) * 10 + 9, cents)
        return np.maximum(cents, 1)

    gap = np.zeros(n, dtype=np.int64)
    level = np.zeros(n, dtype=np.int64)
    reg = reg_price_cents(level)
    sale_rem = np.zeros(n, dtype=np.int64)
    sale_price = np.zeros(n, dtype=np.int64)
    sale_lift = np.ones(n)

    cols: dict[str, list] = {k: [] for k in ("upc", "week", "price", "units", "sale", "margin")}
    half_noise_var = cfg.demand_noise**2 / 2.0

    for week in range(cfg.n_weeks):
        on_sale = sale_rem > 0
        free = ~on_sale
        steps = rng.integers(0, 2, size=n) * 2 - 1
        gap[free] += steps[free]
        trig = free & (np.abs(gap) >= k_trig)
        if trig.any():
            level[trig] += gap[trig]
            gap[trig] = 0
            reg = np.where(trig, reg_price_cents(level), reg)

        start = free & (rng.uniform(size=n) < cfg.sale_prob)
        if start.any():
            depth = rng.uniform(cfg.sale_depth[0], cfg.sale_depth[1], size=n)
            sale_rem = np.where(
                start, rng.integers(1, cfg.sale_max_weeks + 1, size=n), sale_rem
            )
            sale_price = np.where(
                start, np.maximum(np.rint(reg * (1.0 - depth)).astype(np.int64), 1), sale_price
            )
            sale_lift = np.where(start, 1.0 + cfg.sale_lift * depth, sale_lift)

        selling = sale_rem > 0
        price = np.where(selling, sale_price, reg)
        sale_rem = np.where(selling, sale_rem - 1, 0)

        mean_units = base_units * np.where(selling, sale_lift, 1.0)
        noise = np.exp(rng.normal(0.0, cfg.demand_noise, size=n) - half_noise_var)
        units = np.rint(mean_units * noise).astype(np.int64)
        emit = (units >= 1) & (rng.uniform(size=n) >= cfg.zero_week_prob)
        if not emit.any():
            continue

        flag = np.full(n, "", dtype=object)
        if selling.any():
            pick = rng.uniform(size=n)
            flag[selling] = "S"
            flag[selling & (pick < cfg.coupon_share)] = "C"
            flag[
                selling
                & (pick >= cfg.coupon_share)
                & (pick < cfg.coupon_share + cfg.bonus_share)
            ] = "B"
        margin = margin_ps + rng.normal(0.0, 0.3, size=n)

        cols["upc"].append(upc[emit])
        cols["week"].append(np.full(int(emit.sum()), week, dtype=np.int64))
        cols["price"].append(price[emit])
        cols["units"].append(units[emit])
        cols["sale"].append(flag[emit])
        cols["margin"].append(np.round(margin[emit], 2))

    out = {k: np.concatenate(v) if v else np.array([]) for k, v in cols.items()}
    order = np.lexsort((out["week"], out["upc"]))
    df = pd.DataFrame(
        {
            "store": np.full(len(order), store, dtype=np.int64),
            "upc": out["upc"][order].astype(np.int64),
            "week": out["week"][order].astype(np.int64),
            "price": out["price"][order].astype(np.int64),
            "move": out["units"][order].astype(np.int64),
            "qty": pack[np.searchsorted(upc, out["upc"][order])],
            "sale": out["sale"][order],
            "profit": out["margin"][order],
        }
    )
    return df


def write_panel(cfg: SynthConfig, out_dir, fmt: str = "csv") -> dict:
    """Generate and write movement.csv, meta.csv, stores.csv, calendar.csv.

    Stores are generated and appended one block at a time so the peak memory
    stays at one store block even for very large configurations.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    sep = {"csv": ",", "tsv": "\t"}[fmt]
    m_prod, price_scale, upc, category, producer, private, pack, storable = _product_draws(cfg)
    store_factor, income, minority, unemployed = _store_draws(cfg)
    base = cfg.base
    phat = sticky_price(base)
    pass_sigma = passthrough_slope(base) * base.sigma
    hb_steps = band_halfwidth(base) / base.sigma
    norm = float(np.mean(np.outer(store_factor, m_prod)))

    mv_path = os.path.join(out_dir, "movement.csv")
    n_rows = 0
    with open(mv_path, "w", newline="") as fh:
        fh.write(sep.join(MOVEMENT_COLUMNS) + "\n")
        for s_idx in range(cfg.n_stores):
            block = _store_block(
                cfg,
                s_idx + 1,
                s_idx,
                m_prod * store_factor[s_idx],
                price_scale,
                upc,
                pack,
                phat,
                pass_sigma,
                hb_steps,
                norm,
            )
            cents = block["price"].to_numpy()
            dollars = np.char.add(
                np.char.add((cents // 100).astype("U12"), "."),
                np.char.zfill((cents % 100).astype("U2"), 2),
            )
            block = block.assign(price=dollars)
            block.to_csv(fh, sep=sep, index=False, header=False)
            n_rows += len(block)

    meta = pd.DataFrame(
        {
            "upc": upc,
            "category": category,
            "producer": producer,
            "brand": np.where(private, "private", "national"),
            "pack_qty": pack,
            "storable": storable,
        }
    )
    store_ids = np.arange(1, cfg.n_stores + 1, dtype=np.int64)
    stores = pd.DataFrame(
        {
            "store": store_ids,
            "zone": (store_ids - 1) % 16 + 1,
            "median_income": income,
            "pct_minority": minority,
            "pct_unemployed": unemployed,
            "holiday_calendar": "calendar.csv",
        }
    )
    weeks = np.arange(cfg.n_weeks, dtype=np.int64)
    calendar = pd.DataFrame(
        {
            "week": weeks,
            "holiday": np.isin(weeks % 52, cfg.holiday_weeks_mod52).astype(np.int64),
        }
    )
    meta.to_csv(os.path.join(out_dir, "meta.csv"), sep=sep, index=False)
    stores.to_csv(os.path.join(out_dir, "stores.csv"), sep=sep, index=False)
    calendar.to_csv(os.path.join(out_dir, "calendar.csv"), sep=sep, index=False)
    return {
        "movement": mv_path,
        "meta": os.path.join(out_dir, "meta.csv"),
        "stores": os.path.join(out_dir, "stores.csv"),
        "calendar": os.path.join(out_dir, "calendar.csv"),
        "rows": n_rows,
    }
