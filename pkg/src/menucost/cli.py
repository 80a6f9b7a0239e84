"""Command-line interface.

Subcommands:

    menucost model eval --params FILE
        closed-form quantities and comparative statics as name,value CSV
    menucost simulate band --params FILE --grid a,b,c|auto --horizon N --seed S
        simulated cost accounting per band half-width
    menucost simulate sweep --params FILE --betas ... --horizon N --seed S
        closed forms + simulated dynamics per demand slope
    menucost synth --config FILE --out DIR
        synthetic movement/meta/stores/calendar files
    menucost analyze --input movement.csv [--meta meta.csv ...] --out DIR
        streaming panel analysis producing the feature tables
    menucost regress --input DIR --preset NAME|--spec FILE --out results.csv
        fixed-effects regressions over the analysis outputs
    menucost pipeline --config FILE --out DIR [--preset NAME ...]
        synth -> analyze -> regress in one run

Exit codes: 0 success, 1 usage error, 2 data or runtime error.  Every
randomized command takes --seed; --threads caps parallelism (simulation grid
points fan out across processes, everything else runs single-threaded).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import pandas as pd

from . import analyze as manalyze
from . import bandsim, model, presets, regress, synth
from . import io as mio
from .stats import SmallChangeRule

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage problems, not argparse's 2
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# config file parsing (simple "key = value" lines)
# ---------------------------------------------------------------------------


def _read_kv(path) -> dict:
    values: dict[str, str] = {}
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            for sep in ("=", ":"):
                if sep in line:
                    key, val = line.split(sep, 1)
                    values[key.strip().lower()] = val.strip()
                    break
            else:
                raise mio.DataError(f"{path}: cannot parse line {raw!r}")
    return values


_PARAM_KEYS = ("alpha", "beta", "a", "b", "c", "gamma", "sigma", "u_min", "u_max")


def _read_params(path) -> model.ModelParams:
    values = _read_kv(path)
    unknown = sorted(set(values) - set(_PARAM_KEYS))
    if unknown:
        raise mio.DataError(f"{path}: unknown parameter keys {unknown}")
    kwargs = {k: float(v) for k, v in values.items()}
    return model.ModelParams(**kwargs)


def _read_synth_config(path, seed_override=None) -> synth.SynthConfig:
    values = _read_kv(path)
    base_kwargs = {}
    cfg_kwargs: dict = {}
    for key, val in values.items():
        if key.startswith("base."):
            base_kwargs[key[5:]] = float(val)
            continue
        if key in ("beta_range", "sale_depth", "holiday_weeks_mod52"):
            parts = tuple(float(x) for x in val.split(","))
            cfg_kwargs[key] = (
                tuple(int(x) for x in parts) if key == "holiday_weeks_mod52" else parts
            )
        elif key in (
            "n_stores", "n_products", "n_weeks", "categories", "producers",
            "seed", "sale_max_weeks",
        ):
            cfg_kwargs[key] = int(val)
        else:
            cfg_kwargs[key] = float(val)
    if base_kwargs:
        cfg_kwargs["base"] = model.ModelParams(**base_kwargs)
    if seed_override is not None:
        cfg_kwargs["seed"] = seed_override
    try:
        return synth.SynthConfig(**cfg_kwargs)
    except TypeError as err:
        raise mio.DataError(f"{path}: {err}") from err


def _emit(df: pd.DataFrame, out, fmt: str) -> None:
    if out:
        mio.write_table(df, out, fmt)
    else:
        sep = {"csv": ",", "tsv": "\t"}[fmt]
        df.to_csv(sys.stdout, sep=sep, index=False, na_rep="")


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_model(args) -> int:
    p = _read_params(args.params)
    cs = model.comparative_statics(p)
    rows = [
        ("sticky_price", model.sticky_price(p)),
        ("disturbance_free_output", model.disturbance_free_output(p)),
        ("theta", model.theta(p)),
        ("theta_of_output", model.theta_of_output(p)),
        ("passthrough_slope", model.passthrough_slope(p)),
        ("band_halfwidth", model.band_halfwidth(p)),
        ("dtheta_dbeta", cs.dtheta_dbeta),
        ("dh_dtheta", cs.dh_dtheta),
        ("dY_dbeta", cs.dY_dbeta),
        ("dh_dbeta", cs.dh_dbeta),
    ]
    _emit(pd.DataFrame(rows, columns=["name", "value"]), args.out, args.format)
    return 0


def _cmd_simulate(args) -> int:
    p = _read_params(args.params)
    if args.what == "band":
        if args.grid == "auto":
            h = model.band_halfwidth(p)
            if h <= 0:
                raise mio.DataError("auto grid needs gamma > 0 and sigma > 0")
            grid = [0.2 * h + i * (3.0 * h - 0.2 * h) / 20 for i in range(21)]
        else:
            grid = sorted(float(x) for x in args.grid.split(","))
        profile = bandsim.band_cost_profile(
            p, grid, args.horizon, args.seed, threads=args.threads
        )
        _emit(profile, args.out, args.format)
    else:
        betas = [float(x) for x in args.betas.split(",")]
        table = bandsim.beta_sweep_experiment(
            p, betas, args.horizon, args.seed, args.small_threshold
        )
        _emit(table, args.out, args.format)
    return 0


def _cmd_synth(args) -> int:
    cfg = _read_synth_config(args.config, args.seed)
    info = synth.write_panel(cfg, args.out, args.format)
    print(f"wrote {info['rows']} movement rows to {info['movement']}")
    return 0


def _rule_from_args(args) -> SmallChangeRule:
    return SmallChangeRule.parse(args.rule)


def _cmd_analyze(args) -> int:
    filters = []
    if args.exclude_leq_2c:
        filters.append("exclude_leq_2c")
    if args.exclude_coupon_adjacent:
        filters.append("exclude_coupon_adjacent")
    if args.exclude_sale_bounceback:
        filters.append("exclude_sale_bounceback")
    if args.regular_only:
        filters.append("regular_only")
    options = manalyze.AnalyzeOptions(
        mode=args.mode,
        rule=_rule_from_args(args),
        filters=tuple(filters),
        sale_depth=args.sale_depth,
        sale_window=args.sale_window,
        sale_tol=args.sale_tol,
        single_units_only=args.single_units_only,
        sync_level=args.sync_level,
        peak_by=args.peak_by,
        event_weighted_deciles=args.event_weighted_deciles,
        chunksize=args.chunksize,
        output_format=args.format,
    )
    summary = manalyze.run_analysis(
        args.input,
        args.out,
        meta_path=args.meta,
        stores_path=args.stores,
        calendar_path=args.calendar,
        alias_path=args.upc_alias,
        options=options,
    )
    print(
        f"analyzed {summary['rows']} rows / {summary['series']} series -> "
        f"{summary['events']} events in {summary['out_dir']}"
    )
    return 0


def _cmd_regress(args) -> int:
    rule = SmallChangeRule.parse(args.rule) if args.rule else None
    if args.spec:
        spec = presets.parse_spec_file(args.spec)
        preset = presets.Preset(name="custom", spec=spec, per_category=args.per_category)
    else:
        preset = presets.get_preset(args.preset)
    if preset.unit == "week":
        if not args.movement:
            raise mio.DataError(f"preset {preset.name} needs --movement for the weekly panel")
        data = presets.build_weekly_dataset(
            args.movement,
            args.input,
            meta_path=args.meta,
            mode=args.mode,
            filters=tuple(f for f in preset.spec.sample_filters if f == "regular_only"),
            calendar_path=args.calendar,
            fmt=args.format,
        )
        spec = dataclasses.replace(
            preset.spec,
            sample_filters=tuple(
                f for f in preset.spec.sample_filters if f != "regular_only"
            ),
        )
    else:
        data = presets.load_event_dataset(
            args.input,
            meta_path=args.meta,
            stores_path=args.stores,
            rule=rule,
            fmt=args.format,
        )
        spec = preset.spec
    if preset.per_category:
        if "category" not in data.columns:
            raise mio.DataError("per-category preset needs --meta for category labels")
        results = regress.run_per_category(data, spec)
    else:
        results = regress.fit(data, spec)
    out = presets.results_frame(results, focus=args.focus)
    out.insert(0, "preset", preset.name)
    _emit(out, args.out, args.format)
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _read_synth_config(args.config, args.seed)
    data_dir = os.path.join(args.out, "data")
    analysis_dir = os.path.join(args.out, "analysis")
    info = synth.write_panel(cfg, data_dir, "csv")
    options = manalyze.AnalyzeOptions(mode=args.mode, rule=_rule_from_args(args))
    manalyze.run_analysis(
        info["movement"],
        analysis_dir,
        meta_path=info["meta"],
        stores_path=info["stores"],
        calendar_path=info["calendar"],
        options=options,
    )
    frames = []
    for name in args.preset:
        preset = presets.get_preset(name)
        if preset.unit == "week":
            data = presets.build_weekly_dataset(
                info["movement"], analysis_dir, meta_path=info["meta"], mode=args.mode
            )
            spec = dataclasses.replace(
                preset.spec,
                sample_filters=tuple(
                    f for f in preset.spec.sample_filters if f != "regular_only"
                ),
            )
        else:
            data = presets.load_event_dataset(
                analysis_dir, meta_path=info["meta"], stores_path=info["stores"]
            )
            spec = preset.spec
        if preset.per_category:
            results = regress.run_per_category(data, spec)
        else:
            results = regress.fit(data, spec)
        frame = presets.results_frame(results)
        frame.insert(0, "preset", name)
        frames.append(frame)
    out_path = os.path.join(args.out, "results.csv")
    mio.write_table(pd.concat(frames, ignore_index=True), out_path, args.format)
    print(f"pipeline complete; results in {out_path}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_common(sp, *, seed=True, fmt=True, out=True, threads=False):
    if seed:
        sp.add_argument("--seed", type=int, default=12345)
    if fmt:
        sp.add_argument("--format", choices=("csv", "tsv"), default="csv")
    if out:
        sp.add_argument("--out", default=None)
    if threads:
        sp.add_argument("--threads", type=int, default=1)


def build_parser() -> _Parser:
    parser = _Parser(prog="menucost", description="menu-cost pricing laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_model = sub.add_parser("model", help="closed-form model quantities")
    msub = p_model.add_subparsers(dest="what", required=True)
    p_eval = msub.add_parser("eval")
    p_eval.add_argument("--params", required=True)
    _add_common(p_eval, seed=False)
    p_eval.set_defaults(handler=_cmd_model)

    p_sim = sub.add_parser("simulate", help="Monte Carlo band simulations")
    ssub = p_sim.add_subparsers(dest="what", required=True)
    p_band = ssub.add_parser("band")
    p_band.add_argument("--params", required=True)
    p_band.add_argument("--grid", default="auto")
    p_band.add_argument("--horizon", type=int, default=1_000_000)
    _add_common(p_band, threads=True)
    p_band.set_defaults(handler=_cmd_simulate)
    p_sweep = ssub.add_parser("sweep")
    p_sweep.add_argument("--params", required=True)
    p_sweep.add_argument("--betas", required=True)
    p_sweep.add_argument("--horizon", type=int, default=1_000_000)
    p_sweep.add_argument("--small-threshold", type=float, default=0.1)
    _add_common(p_sweep, threads=True)
    p_sweep.set_defaults(handler=_cmd_simulate)

    p_synth = sub.add_parser("synth", help="generate a synthetic panel")
    p_synth.add_argument("--config", required=True)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=None)
    p_synth.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p_synth.add_argument("--threads", type=int, default=1)
    p_synth.set_defaults(handler=_cmd_synth)

    p_an = sub.add_parser("analyze", help="streaming panel analysis")
    p_an.add_argument("--input", required=True)
    p_an.add_argument("--meta", default=None)
    p_an.add_argument("--stores", default=None)
    p_an.add_argument("--calendar", default=None)
    p_an.add_argument("--upc-alias", default=None)
    p_an.add_argument("--out", required=True)
    p_an.add_argument("--rule", default="abs:10")
    p_an.add_argument("--mode", choices=("survived2w", "all_adjacent"), default="survived2w")
    p_an.add_argument("--exclude-leq-2c", action="store_true")
    p_an.add_argument("--exclude-coupon-adjacent", action="store_true")
    p_an.add_argument("--exclude-sale-bounceback", action="store_true")
    p_an.add_argument("--regular-only", action="store_true")
    p_an.add_argument("--single-units-only", action="store_true")
    p_an.add_argument("--event-weighted-deciles", action="store_true")
    p_an.add_argument("--sale-depth", type=float, default=0.05)
    p_an.add_argument("--sale-window", type=int, default=8)
    p_an.add_argument("--sale-tol", type=int, default=0)
    p_an.add_argument("--sync-level", choices=("category", "producer"), default="category")
    p_an.add_argument("--peak-by", choices=("store", "store_category"), default="store")
    p_an.add_argument("--chunksize", type=int, default=500_000)
    p_an.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p_an.add_argument("--threads", type=int, default=1)
    p_an.set_defaults(handler=_cmd_analyze)

    p_reg = sub.add_parser("regress", help="fixed-effects regressions")
    p_reg.add_argument("--input", required=True, help="directory produced by analyze")
    p_reg.add_argument("--meta", default=None)
    p_reg.add_argument("--stores", default=None)
    p_reg.add_argument("--movement", default=None, help="movement file for weekly presets")
    p_reg.add_argument("--calendar", default=None)
    p_reg.add_argument("--preset", default="pooled_baseline")
    p_reg.add_argument("--spec", default=None, help="custom spec file (overrides --preset)")
    p_reg.add_argument(
        "--per-category", action="store_true", help="run a custom --spec once per category"
    )
    p_reg.add_argument("--rule", default=None, help="re-derive the small dummy, e.g. abs:5")
    p_reg.add_argument("--mode", choices=("survived2w", "all_adjacent"), default="survived2w")
    p_reg.add_argument("--focus", default=None, help="report only this term")
    _add_common(p_reg, seed=False, threads=True)
    p_reg.set_defaults(handler=_cmd_regress)

    p_pipe = sub.add_parser("pipeline", help="synth -> analyze -> regress")
    p_pipe.add_argument("--config", required=True)
    p_pipe.add_argument("--out", required=True)
    p_pipe.add_argument("--preset", action="append", default=None)
    p_pipe.add_argument("--rule", default="abs:10")
    p_pipe.add_argument("--mode", choices=("survived2w", "all_adjacent"), default="survived2w")
    p_pipe.add_argument("--seed", type=int, default=None)
    p_pipe.add_argument("--format", choices=("csv", "tsv"), default="csv")
    p_pipe.add_argument("--threads", type=int, default=1)
    p_pipe.set_defaults(handler=_cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    if getattr(args, "command", None) == "pipeline" and not args.preset:
        args.preset = ["pooled_baseline"]
    try:
        return args.handler(args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except (mio.DataError, FileNotFoundError, KeyError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
