"""Readers and writers for movement / meta / store files.

The movement schema is one CSV row per store x product x week:

    store,upc,week,price,move,qty,sale,profit

with price in dollars (exactly two decimals), move the units sold, qty the
pack quantity, sale one of '', 'S' (sale), 'B' (bonus), 'C' (coupon), and
profit the retailer margin in percent.  Prices become integer cents on read
and stay integer cents everywhere downstream; dollars exist only at file
boundaries, because the small-change thresholds are boundary-inclusive and
need exact arithmetic.

Reading is a two-pass affair so the stream can be guaranteed sorted without
holding the file in memory: one fast validation scan (field types, positive
two-decimal prices, duplicate keys, key order), then a typed streaming scan.
If the validation scan finds out-of-order keys, the file is external-merge
sorted into a temporary file first, so arbitrarily large unsorted files work
in bounded memory.  Duplicate (store, upc, week) keys are always an error.

When a wholesale price is needed and absent it is derived from the margin:
wholesale = price * (1 - profit / 100).
"""

from __future__ import annotations

import csv
import heapq
import os
import re
import tempfile
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import pandas as pd

__all__ = [
    "DataError",
    "PanelObservation",
    "MOVEMENT_COLUMNS",
    "META_COLUMNS",
    "STORE_COLUMNS",
    "dollars_to_cents",
    "cents_to_dollars",
    "read_movement",
    "load_movement",
    "iter_series_blocks",
    "read_meta",
    "read_stores",
    "read_calendar",
    "read_upc_alias",
    "write_table",
    "read_table",
    "week_month_year",
]

MOVEMENT_COLUMNS = ["store", "upc", "week", "price", "move", "qty", "sale", "profit"]
META_COLUMNS = ["upc", "category", "producer", "brand", "pack_qty", "storable"]
STORE_COLUMNS = [
    "store",
    "zone",
    "median_income",
    "pct_minority",
    "pct_unemployed",
    "holiday_calendar",
]
SALE_FLAGS = ("", "S", "B", "C")

_PRICE_RE = re.compile(r"(\d+)(?:\.(\d{1,2}))?")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class PanelObservation:
    """One store x product x week row, with meta fields when available."""

    store: int
    upc: int
    week: int
    price: int  # integer cents
    units: int
    pack_qty: int
    sale_flag: str
    margin_pct: float
    category: int | None = None
    producer: int | None = None
    brand: str | None = None


def dollars_to_cents(text: str) -> int:
    """Exact conversion of a two-decimal dollar string to integer cents."""
    m = _PRICE_RE.fullmatch(text.strip())
    if m is None:
        raise DataError(f"cannot parse price {text!r} (at most two decimals expected)")
    dollars, frac = m.group(1), m.group(2) or ""
    return int(dollars) * 100 + int(frac.ljust(2, "0") or "0")


def cents_to_dollars(cents: int) -> str:
    return f"{cents // 100}.{cents % 100:02d}"


def week_month_year(week: int) -> tuple[int, int]:
    """Default calendar: 52-week years, months of ~4.33 weeks, week 0 = Jan year 0."""
    year = week // 52
    month = 1 + ((week % 52) * 12) // 52
    return month, year


# ---------------------------------------------------------------------------
# movement: validation scan
# ---------------------------------------------------------------------------


def _check_header(header: list, expected: list, path) -> None:
    got = [str(h).strip() for h in header]
    if got != expected:
        raise DataError(f"{path}: header {got} does not match expected {expected}")


def _first_bad_line(mask: np.ndarray, offset: int) -> int:
    return int(np.nonzero(mask)[0][0]) + offset


def _to_int(col: pd.Series, name: str, offset: int) -> np.ndarray:
    vals = pd.to_numeric(col, errors="coerce")
    bad = vals.isna().to_numpy()
    if bad.any():
        line = _first_bad_line(bad, offset)
        raise DataError(f"line {line}: malformed integer in column {name!r}")
    out = vals.to_numpy()
    frac = out != np.floor(out)
    if frac.any():
        line = _first_bad_line(frac, offset)
        raise DataError(f"line {line}: non-integer value in column {name!r}")
    return out.astype(np.int64)


def _price_to_cents(col: pd.Series, offset: int) -> np.ndarray:
    vals = pd.to_numeric(col, errors="coerce").to_numpy()
    bad = np.isnan(vals)
    if bad.any():
        raise DataError(f"line {_first_bad_line(bad, offset)}: malformed price")
    cents = np.rint(vals * 100.0)
    off = np.abs(vals * 100.0 - cents) > 1e-6
    if off.any():
        line = _first_bad_line(off, offset)
        raise DataError(f"line {line}: price has more than two decimals")
    nonpos = cents <= 0
    if nonpos.any():
        line = _first_bad_line(nonpos, offset)
        raise DataError(f"line {line}: price must be positive")
    return cents.astype(np.int64)


def _apply_alias(upc: np.ndarray, alias: dict | None) -> np.ndarray:
    if not alias:
        return upc
    return pd.Series(upc).map(lambda u: alias.get(u, u)).to_numpy(dtype=np.int64)


def _diagnose_movement(path, chunksize: int = 50_000) -> None:
    """Slow string-typed rescan that pinpoints the first malformed line."""
    offset = 2
    reader = pd.read_csv(
        path, chunksize=chunksize, dtype=str, keep_default_na=False, skipinitialspace=True
    )
    for chunk in reader:
        for name in ("store", "upc", "week", "move", "qty"):
            _to_int(chunk[name], name, offset)
        _price_to_cents(chunk["price"], offset)
        profit = chunk["profit"].str.strip()
        bad = pd.to_numeric(profit.replace("", "nan"), errors="coerce").isna() & (
            profit != ""
        )
        if bad.to_numpy().any():
            line = _first_bad_line(bad.to_numpy(), offset)
            raise DataError(f"line {line}: malformed profit value")
        offset += len(chunk)


def _validate_movement(path, alias: dict | None, chunksize: int) -> bool:
    """Type-check every row and report whether keys are sorted without duplicates.

    The fast path parses with strict dtypes; if pandas chokes on a value the
    file is rescanned as strings to name the offending line.  Duplicates
    between *adjacent* rows raise here; for unsorted files the duplicate
    check is redone after sorting, when equal keys become adjacent.
    """
    sorted_ok = True
    prev = None
    offset = 2  # data starts on line 2
    try:
        reader = pd.read_csv(
            path,
            chunksize=chunksize,
            dtype={
                "store": np.int64,
                "upc": np.int64,
                "week": np.int64,
                "price": np.float64,
                "move": np.int64,
                "qty": np.int64,
                "sale": str,
                "profit": np.float64,
            },
            keep_default_na=False,
            na_values={"profit": [""]},
        )
    except pd.errors.EmptyDataError:
        raise DataError(f"{path}: empty file, header expected") from None
    got_any = False
    try:
        for chunk in reader:
            if not got_any:
                _check_header(list(chunk.columns), MOVEMENT_COLUMNS, path)
                got_any = True
            n = len(chunk)
            if n == 0:
                continue
            store = chunk["store"].to_numpy()
            upc = _apply_alias(chunk["upc"].to_numpy(), alias)
            week = chunk["week"].to_numpy()
            _price_to_cents(chunk["price"], offset)
            move = chunk["move"].to_numpy()
            if (move < 0).any():
                raise DataError(
                    f"line {_first_bad_line(move < 0, offset)}: units must be >= 0"
                )
            sale = chunk["sale"].str.strip()
            bad_sale = ~sale.isin(SALE_FLAGS).to_numpy()
            if bad_sale.any():
                line = _first_bad_line(bad_sale, offset)
                raise DataError(f"line {line}: sale flag must be one of {SALE_FLAGS}")

            if sorted_ok:
                keys = np.stack([store, upc, week], axis=1)
                full = keys if prev is None else np.vstack([prev, keys])
                d = np.diff(full, axis=0)
                later = (
                    (d[:, 0] > 0)
                    | ((d[:, 0] == 0) & (d[:, 1] > 0))
                    | ((d[:, 0] == 0) & (d[:, 1] == 0) & (d[:, 2] > 0))
                )
                equal = (d == 0).all(axis=1)
                if equal.any():
                    i = int(np.nonzero(equal)[0][0])
                    key = tuple(full[i + 1])
                    raise DataError(f"duplicate (store, upc, week) key {key}")
                if not later.all():
                    sorted_ok = False
                prev = keys[-1:]
            offset += n
    except (ValueError, TypeError) as err:
        if isinstance(err, DataError):
            raise
        # strict parse failed somewhere: rescan slowly for the line number
        _diagnose_movement(path)
        raise DataError(f"{path}: malformed data: {err}") from err
    if not got_any:
        # a file with no rows at all still needs a header
        with open(path) as fh:
            header = fh.readline()
        if not header.strip():
            raise DataError(f"{path}: empty file, header expected")
        _check_header(header.strip().split(","), MOVEMENT_COLUMNS, path)
    return sorted_ok


# ---------------------------------------------------------------------------
# movement: external sort fallback
# ---------------------------------------------------------------------------


def _iter_rows_csv(path, alias: dict | None) -> Iterator[tuple]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header already validated
        for row in reader:
            if not row:
                continue
            upc = int(row[1])
            if alias:
                upc = alias.get(upc, upc)
            yield (int(row[0]), upc, int(row[2]), row[3], row[4], row[5], row[6], row[7])


def _external_sort_movement(path, alias: dict | None, run_size: int = 500_000) -> str:
    """Sort an unsorted movement file into a temp file via sorted runs + merge."""
    tmpdir = tempfile.mkdtemp(prefix="menucost_sort_")
    run_paths = []
    buf = []

    def _flush():
        buf.sort(key=lambda r: (r[0], r[1], r[2]))
        p = os.path.join(tmpdir, f"run_{len(run_paths):04d}.csv")
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerows(buf)
        run_paths.append(p)

    for row in _iter_rows_csv(path, alias):
        buf.append(row)
        if len(buf) >= run_size:
            _flush()
            buf = []
    if buf:
        _flush()
        buf = []

    def _run_reader(p):
        with open(p, newline="") as fh:
            for row in csv.reader(fh):
                yield (int(row[0]), int(row[1]), int(row[2])) + tuple(row[3:])

    out_fd, out_path = tempfile.mkstemp(prefix="menucost_sorted_", suffix=".csv")
    prev = None
    with os.fdopen(out_fd, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MOVEMENT_COLUMNS)
        for row in heapq.merge(*(_run_reader(p) for p in run_paths), key=lambda r: r[:3]):
            if prev == row[:3]:
                raise DataError(f"duplicate (store, upc, week) key {row[:3]}")
            prev = row[:3]
            w.writerow(row)
    for p in run_paths:
        try:
            os.unlink(p)
        except OSError:
            pass
    try:
        os.rmdir(tmpdir)
    except OSError:
        pass
    return out_path


# ---------------------------------------------------------------------------
# movement: typed streaming
# ---------------------------------------------------------------------------


def _typed_chunks(path, alias: dict | None, chunksize: int):
    reader = pd.read_csv(
        path,
        chunksize=chunksize,
        dtype={
            "store": np.int64,
            "upc": np.int64,
            "week": np.int64,
            "price": np.float64,
            "move": np.int64,
            "qty": np.int64,
            "sale": str,
            "profit": np.float64,
        },
        keep_default_na=False,
        na_values={"profit": [""]},
    )
    for chunk in reader:
        yield {
            "store": chunk["store"].to_numpy(),
            "upc": _apply_alias(chunk["upc"].to_numpy(), alias),
            "week": chunk["week"].to_numpy(),
            "price": np.rint(chunk["price"].to_numpy() * 100.0).astype(np.int64),
            "units": chunk["move"].to_numpy(),
            "pack_qty": chunk["qty"].to_numpy(),
            "sale_flag": chunk["sale"].str.strip().to_numpy(dtype=object),
            "margin_pct": chunk["profit"].to_numpy(dtype=np.float64),
        }


_BLOCK_FIELDS = ("week", "price", "units", "pack_qty", "sale_flag", "margin_pct")


def iter_series_blocks(path, alias: dict | None = None, chunksize: int = 500_000):
    """Yield one (store, upc, arrays) bundle per product-store series, streaming.

    ``arrays`` maps week / price / units / pack_qty / sale_flag / margin_pct
    to aligned numpy arrays.  Peak memory is one chunk plus one series.  The
    validation pass runs first; unsorted input transparently detours through
    the external merge sort.
    """
    sorted_ok = _validate_movement(path, alias, chunksize)
    src = path
    cleanup = None
    applied_alias = alias
    if not sorted_ok:
        src = _external_sort_movement(path, alias)
        cleanup = src
        applied_alias = None  # already applied during the sort
    try:
        cur_key = None
        parts: dict[str, list] = {f: [] for f in _BLOCK_FIELDS}
        for chunk in _typed_chunks(src, applied_alias, chunksize):
            s, u = chunk["store"], chunk["upc"]
            n = len(s)
            if n == 0:
                continue
            breaks = np.nonzero((np.diff(s) != 0) | (np.diff(u) != 0))[0] + 1
            starts = np.concatenate([[0], breaks])
            ends = np.concatenate([breaks, [n]])
            for a, b in zip(starts, ends):
                key = (int(s[a]), int(u[a]))
                if key != cur_key:
                    if cur_key is not None:
                        yield cur_key[0], cur_key[1], {
                            f: np.concatenate(parts[f]) for f in _BLOCK_FIELDS
                        }
                    cur_key = key
                    parts = {f: [] for f in _BLOCK_FIELDS}
                for f in _BLOCK_FIELDS:
                    parts[f].append(chunk[f][a:b])
        if cur_key is not None:
            yield cur_key[0], cur_key[1], {
                f: np.concatenate(parts[f]) for f in _BLOCK_FIELDS
            }
    finally:
        if cleanup is not None:
            try:
                os.unlink(cleanup)
            except OSError:
                pass


def read_movement(path, alias: dict | None = None) -> Iterator[PanelObservation]:
    """Stream PanelObservation records in (store, upc, week) order."""
    for store, upc, arrays in iter_series_blocks(path, alias):
        for i in range(len(arrays["week"])):
            yield PanelObservation(
                store=store,
                upc=upc,
                week=int(arrays["week"][i]),
                price=int(arrays["price"][i]),
                units=int(arrays["units"][i]),
                pack_qty=int(arrays["pack_qty"][i]),
                sale_flag=str(arrays["sale_flag"][i]),
                margin_pct=float(arrays["margin_pct"][i]),
            )


def load_movement(path, alias: dict | None = None) -> pd.DataFrame:
    """Whole movement file as a canonical panel frame (for in-memory work)."""
    frames = []
    for store, upc, arrays in iter_series_blocks(path, alias):
        df = pd.DataFrame(arrays)
        df.insert(0, "upc", upc)
        df.insert(0, "store", store)
        frames.append(df)
    if not frames:
        return pd.DataFrame(
            columns=["store", "upc"] + list(_BLOCK_FIELDS)
        ).astype({"store": np.int64, "upc": np.int64})
    return pd.concat(frames, ignore_index=True)


# ---------------------------------------------------------------------------
# side tables
# ---------------------------------------------------------------------------


def read_meta(path) -> pd.DataFrame:
    df = pd.read_csv(path, keep_default_na=False)
    _check_header(list(df.columns), META_COLUMNS, path)
    for col in ("upc", "category", "producer", "pack_qty", "storable"):
        df[col] = df[col].astype(np.int64)
    return df


def read_stores(path) -> pd.DataFrame:
    df = pd.read_csv(path, keep_default_na=False)
    _check_header(list(df.columns), STORE_COLUMNS, path)
    df["store"] = df["store"].astype(np.int64)
    df["zone"] = df["zone"].astype(np.int64)
    return df


def read_calendar(path) -> pd.DataFrame:
    """week -> holiday flag, optionally with explicit month and year columns."""
    df = pd.read_csv(path)
    if "week" not in df.columns or "holiday" not in df.columns:
        raise DataError(f"{path}: calendar needs week and holiday columns")
    df["week"] = df["week"].astype(np.int64)
    df["holiday"] = df["holiday"].astype(np.int64)
    return df


def read_upc_alias(path) -> dict:
    """Optional upc -> canonical upc mapping used to merge product re-launches."""
    df = pd.read_csv(path)
    if "upc" not in df.columns or "canonical" not in df.columns:
        raise DataError(f"{path}: alias file needs upc and canonical columns")
    return dict(zip(df["upc"].astype(int), df["canonical"].astype(int)))


# ---------------------------------------------------------------------------
# generic table output
# ---------------------------------------------------------------------------


def write_table(df: pd.DataFrame, path, fmt: str = "csv") -> None:
    """Deterministic column order, header row, empty string for missing."""
    sep = {"csv": ",", "tsv": "\t"}.get(fmt)
    if sep is None:
        raise ValueError(f"unknown format {fmt!r}")
    df.to_csv(path, sep=sep, index=False, na_rep="")


def read_table(path, fmt: str = "csv") -> pd.DataFrame:
    sep = {"csv": ",", "tsv": "\t"}[fmt]
    return pd.read_csv(path, sep=sep)
