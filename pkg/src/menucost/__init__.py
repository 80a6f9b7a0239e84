"""Menu-cost pricing laboratory.

Closed forms for a lump-sum menu-cost monopolist with linear demand, a Monte
Carlo engine that verifies the optimal adjustment band by brute force, a
synthetic scanner-panel generator, the empirical feature pipeline (price
change detection, small-change classification, volume statistics,
synchronization), and a high-dimensional fixed-effects regression estimator
with clustered standard errors.
"""

from .model import (
    ComparativeStatics,
    DomainError,
    ModelParams,
    ParameterError,
    band_halfwidth,
    comparative_statics,
    disturbance_free_output,
    optimal_output,
    optimal_price,
    passthrough_slope,
    profit,
    profit_gain_flexible,
    profit_gain_sticky,
    sticky_price,
    theta,
    theta_of_output,
)
from .bandsim import (
    BandPolicy,
    SimResult,
    band_cost_profile,
    beta_sweep_experiment,
    effective_trigger,
    expected_hitting_time,
    inter_adjustment_intervals,
    optimize_band_numeric,
    simulate_band,
)
from .synth import SynthConfig, synth_panel, write_panel
from .stats import (
    PriceChangeEvent,
    ProductStoreStats,
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
    synchronization_features,
)
from .regress import (
    RegressionResult,
    RegressionSpec,
    Term,
    absorb_fe,
    build_design,
    fit,
    ols_fit,
    per_product_regressions,
    run_per_category,
    standard_errors,
)
from .analyze import AnalyzeOptions, analyze_frames, run_analysis
from .presets import PRESETS, get_preset, load_event_dataset, parse_spec_file, run_spec

__version__ = "0.1.0"
