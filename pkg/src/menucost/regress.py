"""Linear probability models with many fixed effects and robust inference.

The estimator absorbs categorical fixed effects by alternating group
demeaning (the within transformation applied dimension by dimension until a
fixpoint), runs OLS on the demeaned design, and reports clustered,
heteroskedasticity-robust (HC1), or classical standard errors.  Explicit
dummies would need one column per product and are infeasible at panel scale;
on anything small enough to run both ways, the absorbed coefficients match
dummy OLS to numerical precision (Frisch-Waugh), which is what the test
suite checks.

Conventions that matter for reproducing numbers elsewhere:

* Rank handling drops the *later* column (in spec order) of any collinear
  set and reports it by name; columns are never reordered.
* The model degrees of freedom K counts kept regressors plus absorbed
  parameters, the latter as sum(levels per dimension) - (dims - 1).  With
  nested dimensions (say category inside product) this overcounts a little;
  at panel scale the effect on the dof correction is negligible and it is
  left uncorrected.
* Clustered covariance is the sandwich with cluster-summed scores and small
  sample factor G/(G-1) * (N-1)/(N-K); HC1 uses N/(N-K).  Singleton
  clusters are fine, a single cluster is not.
* Significance stars use normal critical values: * 10%, ** 5%, *** 1%.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

__all__ = [
    "Term",
    "RegressionSpec",
    "RegressionResult",
    "ConvergenceError",
    "build_design",
    "absorb_fe",
    "ols_fit",
    "standard_errors",
    "fit",
    "run_per_category",
    "per_product_regressions",
    "stars",
]

TRANSFORMS = ("identity", "ln", "ln1p")

_Z_10 = 1.6448536269514722
_Z_05 = 1.959963984540054
_Z_01 = 2.5758293035489004


class ConvergenceError(RuntimeError):
    """Alternating demeaning failed to reach the tolerance."""


@dataclass(frozen=True)
class Term:
    """One regressor: a column, an optional transform, an optional interaction."""

    column: str
    transform: str = "identity"
    interact: str | None = None

    def __post_init__(self) -> None:
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}")

    @property
    def name(self) -> str:
        base = (
            self.column
            if self.transform == "identity"
            else f"{self.transform}({self.column})"
        )
        return f"{base}*{self.interact}" if self.interact else base

    @classmethod
    def parse(cls, text: str) -> "Term":
        """Parse "col", "ln(col)", "ln1p(col)", optionally "*dummy" suffixed."""
        text = text.strip()
        interact = None
        if "*" in text:
            text, interact = (s.strip() for s in text.split("*", 1))
        for tr in ("ln1p", "ln"):
            if text.startswith(tr + "(") and text.endswith(")"):
                return cls(column=text[len(tr) + 1 : -1].strip(), transform=tr, interact=interact)
        return cls(column=text, transform="identity", interact=interact)


@dataclass(frozen=True)
class RegressionSpec:
    """Declarative description of one regression."""

    dependent: str
    regressors: tuple[Term, ...]
    fixed_effects: tuple[str, ...]
    cluster: str | None = None
    se_kind: str = "clustered"
    sample_filters: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.se_kind not in ("clustered", "hc1", "classical"):
            raise ValueError(f"unknown se_kind {self.se_kind!r}")
        if self.se_kind == "clustered" and not self.cluster:
            raise ValueError("clustered standard errors need a cluster dimension")
        if any(t.column == self.dependent for t in self.regressors):
            raise ValueError(f"dependent {self.dependent!r} also appears as a regressor")
        if not self.fixed_effects:
            raise ValueError("need at least one fixed-effect dimension")

    def with_filters(self, *extra: str) -> "RegressionSpec":
        return RegressionSpec(
            dependent=self.dependent,
            regressors=self.regressors,
            fixed_effects=self.fixed_effects,
            cluster=self.cluster,
            se_kind=self.se_kind,
            sample_filters=self.sample_filters + tuple(extra),
        )


@dataclass
class Design:
    """Numeric pieces of one regression, ready for absorption."""

    X: np.ndarray
    y: np.ndarray
    names: list
    fe_codes: list
    fe_names: list
    fe_levels: list
    cluster_codes: np.ndarray | None
    n_dropped_rows: int
    orig_norms: np.ndarray


@dataclass
class RegressionResult:
    coefficients: dict
    std_errors: dict
    n_obs: int
    n_clusters: int | None
    r2_within: float
    iterations: int
    final_residual: float
    k_model: int
    se_kind: str
    dropped_rows: int = 0
    dropped_columns: tuple = ()

    def tstat(self, term: str) -> float:
        se = self.std_errors[term]
        return self.coefficients[term] / se if se > 0 else float("inf")

    def summary_frame(self) -> pd.DataFrame:
        rows = []
        for name, est in self.coefficients.items():
            se = self.std_errors[name]
            t = est / se if se > 0 else float("inf")
            rows.append(
                {
                    "term": name,
                    "estimate": est,
                    "se": se,
                    "t": t,
                    "stars": stars(t),
                    "n_obs": self.n_obs,
                    "n_clusters": self.n_clusters if self.n_clusters is not None else "",
                }
            )
        return pd.DataFrame(rows)


def stars(t: float) -> str:
    at = abs(t)
    if at >= _Z_01:
        return "***"
    if at >= _Z_05:
        return "**"
    if at >= _Z_10:
        return "*"
    return ""


# ---------------------------------------------------------------------------
# sample filters
# ---------------------------------------------------------------------------


def _filter_mask(df: pd.DataFrame, name: str) -> np.ndarray:
    if ":" in name:
        key, value = name.split(":", 1)
        if key == "brand":
            return (df["brand"] == value).to_numpy()
        if key == "quartile":
            return (df["size_quartile"] == int(value)).to_numpy()
        if key == "category":
            return (df["category"] == int(value)).to_numpy()
        if key == "direction":
            return (df["direction"] == value).to_numpy()
        raise ValueError(f"unknown sample filter {name!r}")
    if name == "regular_only":
        return (~df["on_sale_or_bounceback"].astype(bool)).to_numpy()
    if name == "exclude_leq_2c":
        return (df["delta_cents"].abs() > 2).to_numpy()
    if name == "exclude_coupon_adjacent":
        return (~df["coupon_adjacent"].astype(bool)).to_numpy()
    if name == "survived_only":
        return df["survived_two_weeks"].astype(bool).to_numpy()
    if name == "holiday_only":
        return (df["holiday"] == 1).to_numpy()
    if name == "increases":
        return (df["direction"] == "increase").to_numpy()
    if name == "decreases":
        return (df["direction"] == "decrease").to_numpy()
    if name == "single_units":
        return (df["pack_qty"] == 1).to_numpy()
    raise ValueError(f"unknown sample filter {name!r}")


# ---------------------------------------------------------------------------
# design construction
# ---------------------------------------------------------------------------


def build_design(df: pd.DataFrame, spec: RegressionSpec) -> Design:
    """Materialize the numeric design: transforms, interactions, FE codes.

    Rows are dropped (and counted) when a log transform hits a nonpositive
    value or any used column is missing.  Unknown columns raise by name.
    """
    needed = {spec.dependent}
    for t in spec.regressors:
        needed.add(t.column)
        if t.interact:
            needed.add(t.interact)
    needed.update(spec.fixed_effects)
    if spec.cluster:
        needed.add(spec.cluster)
    missing = sorted(c for c in needed if c not in df.columns)
    if missing:
        raise KeyError(f"columns missing from data: {missing}")

    keep = np.ones(len(df), dtype=bool)
    for f in spec.sample_filters:
        keep &= _filter_mask(df, f)
    sub = df.loc[keep]

    ok = np.ones(len(sub), dtype=bool)
    ok &= sub[spec.dependent].notna().to_numpy()
    for t in spec.regressors:
        col = sub[t.column]
        ok &= col.notna().to_numpy()
        if t.transform == "ln":
            ok &= (col > 0).fillna(False).to_numpy()
        elif t.transform == "ln1p":
            ok &= (col > -1).fillna(False).to_numpy()
        if t.interact:
            ok &= sub[t.interact].notna().to_numpy()
    for dim in spec.fixed_effects:
        ok &= sub[dim].notna().to_numpy()
    if spec.cluster:
        ok &= sub[spec.cluster].notna().to_numpy()
    sub = sub.loc[ok]
    n_dropped = int(len(df) - len(sub))
    if len(sub) == 0:
        raise ValueError("all rows dropped while building the design")

    cols = []
    names = []
    for t in spec.regressors:
        x = sub[t.column].to_numpy(dtype=np.float64)
        if t.transform == "ln":
            x = np.log(x)
        elif t.transform == "ln1p":
            x = np.log1p(x)
        if t.interact:
            x = x * sub[t.interact].to_numpy(dtype=np.float64)
        cols.append(x)
        names.append(t.name)
    X = np.column_stack(cols) if cols else np.empty((len(sub), 0))
    y = sub[spec.dependent].to_numpy(dtype=np.float64)

    fe_codes = []
    fe_levels = []
    for dim in spec.fixed_effects:
        codes, uniques = pd.factorize(sub[dim], sort=True)
        fe_codes.append(codes.astype(np.int64))
        fe_levels.append(len(uniques))
    cluster_codes = None
    if spec.cluster:
        cluster_codes = pd.factorize(sub[spec.cluster], sort=True)[0].astype(np.int64)

    return Design(
        X=X,
        y=y,
        names=names,
        fe_codes=fe_codes,
        fe_names=list(spec.fixed_effects),
        fe_levels=fe_levels,
        cluster_codes=cluster_codes,
        n_dropped_rows=n_dropped,
        orig_norms=np.linalg.norm(X, axis=0) if X.size else np.zeros(0),
    )


# ---------------------------------------------------------------------------
# absorption, fit, covariance
# ---------------------------------------------------------------------------


def absorb_fe(
    M: np.ndarray,
    fe_codes,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> tuple[np.ndarray, int, float]:
    """Alternating group demeaning of every column of M over the FE dimensions.

    Stops when the largest adjustment applied in a sweep falls below
    tol * max(1, initial scale).  A single dimension converges in one pass
    (the second sweep just verifies a zero change).  Returns the demeaned
    copy, the sweep count, and the final sweep's largest adjustment.
    """
    if not fe_codes:
        raise ValueError("need at least one fixed-effect dimension")
    M = np.array(M, dtype=np.float64, copy=True)
    if M.ndim == 1:
        M = M[:, None]
    scale = max(1.0, float(np.abs(M).max())) if M.size else 1.0
    # unused code values get count 1; their means are never indexed back
    counts = [np.maximum(np.bincount(codes), 1).astype(np.float64) for codes in fe_codes]
    n_cols = M.shape[1]
    last = math.inf
    for sweep in range(1, max_iter + 1):
        last = 0.0
        for codes, cnt in zip(fe_codes, counts):
            for j in range(n_cols):
                col = M[:, j]
                means = np.bincount(codes, weights=col, minlength=len(cnt)) / cnt
                adj = means[codes]
                col -= adj
                if adj.size:
                    amax = float(np.abs(adj).max())
                    if amax > last:
                        last = amax
        if last <= tol * scale:
            return M, sweep, last
    raise ConvergenceError(
        f"demeaning did not converge in {max_iter} sweeps (last change {last:.3e})"
    )


def ols_fit(
    Xd: np.ndarray,
    yd: np.ndarray,
    names=None,
    orig_norms=None,
    rank_tol: float = 1e-8,
):
    """Least squares on the demeaned design with ordered rank handling.

    Columns that are (numerically) linear combinations of earlier kept
    columns are dropped and reported by name; the solve itself goes through
    a stable least-squares factorization.  Returns (beta, residuals,
    kept_indices, dropped_names).
    """
    n, k = Xd.shape
    if names is None:
        names = [f"x{j}" for j in range(k)]
    if orig_norms is None:
        orig_norms = np.linalg.norm(Xd, axis=0)
    kept = []
    dropped = []
    Q: list[np.ndarray] = []
    for j in range(k):
        v = Xd[:, j].astype(np.float64, copy=True)
        for q in Q:
            v -= (q @ v) * q
        for q in Q:  # second pass for numerical hygiene
            v -= (q @ v) * q
        nrm = float(np.linalg.norm(v))
        if nrm <= rank_tol * max(1.0, float(orig_norms[j])):
            dropped.append(names[j])
            continue
        kept.append(j)
        Q.append(v / nrm)
    if not kept:
        raise ValueError("no usable regressors: every column is collinear or zero")
    Xk = Xd[:, kept]
    beta, *_ = np.linalg.lstsq(Xk, yd, rcond=None)
    resid = yd - Xk @ beta
    return beta, resid, kept, dropped


def standard_errors(
    Xk: np.ndarray,
    resid: np.ndarray,
    kind: str,
    cluster_codes: np.ndarray | None,
    k_model: int,
) -> np.ndarray:
    """Covariance of the kept coefficients under the requested error structure."""
    n = Xk.shape[0]
    if n - k_model <= 0:
        raise ValueError(f"no residual degrees of freedom: n={n}, K={k_model}")
    bread = np.linalg.inv(Xk.T @ Xk)
    if kind == "classical":
        sigma2 = float(resid @ resid) / (n - k_model)
        cov = sigma2 * bread
    elif kind == "hc1":
        meat = Xk.T @ (Xk * (resid**2)[:, None])
        cov = (n / (n - k_model)) * bread @ meat @ bread
    elif kind == "clustered":
        if cluster_codes is None:
            raise ValueError("clustered errors need cluster codes")
        g = int(cluster_codes.max()) + 1 if len(cluster_codes) else 0
        if g < 2:
            raise ValueError(f"clustered errors need at least 2 clusters, got {g}")
        scores = Xk * resid[:, None]
        summed = np.zeros((g, Xk.shape[1]))
        np.add.at(summed, cluster_codes, scores)
        meat = summed.T @ summed
        factor = (g / (g - 1)) * ((n - 1) / (n - k_model))
        cov = factor * bread @ meat @ bread
    else:
        raise ValueError(f"unknown se kind {kind!r}")
    var = np.clip(np.diag(cov), 0.0, None)
    return np.sqrt(var)


def absorbed_parameter_count(fe_levels) -> int:
    """Parameters the fixed effects absorb: sum of levels minus (dims - 1)."""
    return int(sum(fe_levels) - (len(fe_levels) - 1))


def fit(
    df: pd.DataFrame,
    spec: RegressionSpec,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> RegressionResult:
    """Full pipeline: build design, absorb fixed effects, OLS, standard errors."""
    design = build_design(df, spec)
    stacked = np.column_stack([design.y, design.X])
    demeaned, sweeps, final_change = absorb_fe(stacked, design.fe_codes, tol, max_iter)
    yd = demeaned[:, 0]
    Xd = demeaned[:, 1:]
    beta, resid, kept, dropped = ols_fit(Xd, yd, design.names, design.orig_norms)
    if dropped:
        warnings.warn(f"dropped collinear regressors: {dropped}", stacklevel=2)
    k_model = len(kept) + absorbed_parameter_count(design.fe_levels)
    se = standard_errors(
        Xd[:, kept], resid, spec.se_kind, design.cluster_codes, k_model
    )
    tss = float(yd @ yd)
    rss = float(resid @ resid)
    names_kept = [design.names[j] for j in kept]
    n_clusters = (
        int(design.cluster_codes.max()) + 1 if design.cluster_codes is not None else None
    )
    return RegressionResult(
        coefficients=dict(zip(names_kept, beta.tolist())),
        std_errors=dict(zip(names_kept, se.tolist())),
        n_obs=len(yd),
        n_clusters=n_clusters,
        r2_within=1.0 - rss / tss if tss > 0 else float("nan"),
        iterations=sweeps,
        final_residual=final_change,
        k_model=k_model,
        se_kind=spec.se_kind,
        dropped_rows=design.n_dropped_rows,
        dropped_columns=tuple(dropped),
    )


def run_per_category(
    df: pd.DataFrame, spec: RegressionSpec, category_col: str = "category"
) -> dict:
    """Fit the spec once per category; failures recorded per category, not raised."""
    out: dict = {}
    for cat in sorted(df[category_col].dropna().unique()):
        sub = df[df[category_col] == cat]
        try:
            out[cat] = fit(sub, spec)
        except Exception as err:  # noqa: BLE001 - batch semantics
            out[cat] = f"error: {err}"
    return out


# ---------------------------------------------------------------------------
# product-level regressions
# ---------------------------------------------------------------------------


def _ols_with_intercept(x: np.ndarray, y: np.ndarray, controls: np.ndarray | None = None):
    """Tiny dense OLS of y on [1, x, controls] with HC1 errors on the x slope."""
    cols = [np.ones_like(x), x]
    if controls is not None:
        cols.extend(controls.T)
    X = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    n, k = X.shape
    if n - k <= 0:
        return float(beta[1]), float("nan"), n
    bread = np.linalg.pinv(X.T @ X)
    meat = X.T @ (X * (resid**2)[:, None])
    cov = (n / (n - k)) * bread @ meat @ bread
    return float(beta[1]), float(math.sqrt(max(cov[1, 1], 0.0))), n


def per_product_regressions(
    stats: pd.DataFrame,
    meta: pd.DataFrame,
    min_stores: int = 30,
    dependent: str = "share_small",
    control_cols: tuple[str, ...] = (),
    store_attrs: pd.DataFrame | None = None,
) -> tuple[pd.DataFrame, pd.DataFrame]:
    """One robust-SE OLS per product of its per-store outcome on its volume.

    The outcome is the share of small changes per store (or the per-store
    change frequency via ``dependent='share_changes'``); the regressor is the
    store-level average sales volume in levels.  Products observed in fewer
    than ``min_stores`` stores with a defined outcome are skipped.  Optional
    store attribute columns are added as controls.  Returns the per-product
    table and the per-category rollup: average coefficient, share positive,
    number significant at 5%, and the positive share among the significant.
    """
    work = stats.copy()
    if dependent == "share_small":
        ok = work["n_changes"] > 0
        work = work[ok]
        y_all = work["n_small"] / work["n_changes"]
    elif dependent == "share_changes":
        ok = work["n_obs"] > 0
        work = work[ok]
        y_all = work["n_changes"] / work["n_obs"]
    else:
        raise ValueError(f"unknown dependent {dependent!r}")
    work = work.assign(_y=y_all)
    if store_attrs is not None and control_cols:
        work = work.merge(store_attrs, on="store", how="left")

    rows = []
    for upc, grp in work.groupby("upc", sort=True):
        if len(grp) < min_stores:
            continue
        x = grp["avg_volume"].to_numpy(dtype=np.float64)
        y = grp["_y"].to_numpy(dtype=np.float64)
        controls = (
            grp[list(control_cols)].to_numpy(dtype=np.float64) if control_cols else None
        )
        if controls is not None and np.isnan(controls).any():
            keep = ~np.isnan(controls).any(axis=1)
            x, y, controls = x[keep], y[keep], controls[keep]
            if len(x) < min_stores:
                continue
        coef, se, n = _ols_with_intercept(x, y, controls)
        rows.append({"upc": upc, "coefficient": coef, "se": se, "n_stores": n})
    per_upc = pd.DataFrame(rows, columns=["upc", "coefficient", "se", "n_stores"])
    if len(per_upc) == 0:
        rollup = pd.DataFrame(
            columns=[
                "category",
                "avg_coefficient",
                "n_coefficients",
                "pct_positive",
                "n_significant",
                "pct_positive_significant",
            ]
        )
        return per_upc, rollup

    merged = per_upc.merge(meta[["upc", "category"]], on="upc", how="left")
    merged["significant"] = (merged["coefficient"].abs() / merged["se"]) > _Z_05
    groups = []
    for cat, grp in merged.groupby("category", sort=True):
        n_sig = int(grp["significant"].sum())
        pos_sig = int((grp["significant"] & (grp["coefficient"] > 0)).sum())
        groups.append(
            {
                "category": cat,
                "avg_coefficient": float(grp["coefficient"].mean()),
                "n_coefficients": len(grp),
                "pct_positive": float((grp["coefficient"] > 0).mean()),
                "n_significant": n_sig,
                "pct_positive_significant": pos_sig / n_sig if n_sig else float("nan"),
            }
        )
    return per_upc, pd.DataFrame(groups)
