"""Estimator oracles: explicit-dummy OLS and the dense sandwich.

The absorbed-FE path must reproduce, to numerical precision, the
coefficients of an OLS with every fixed effect expanded into dummies
(Frisch-Waugh), and the clustered covariance must match a from-scratch dense
computation that projects with an explicit annihilator matrix instead of
alternating demeaning.
"""

import numpy as np
import pandas as pd
import pytest

from menucost.regress import (
    ConvergenceError,
    RegressionSpec,
    Term,
    absorb_fe,
    absorbed_parameter_count,
    build_design,
    fit,
    ols_fit,
    per_product_regressions,
    run_per_category,
    standard_errors,
    stars,
)


def random_panel(rng, n_max=500, n_fe=None, n_x=None, binary_y=False):
    n = int(rng.integers(60, n_max + 1))
    n_fe = n_fe or int(rng.integers(1, 4))
    n_x = n_x or int(rng.integers(1, 5))
    df = pd.DataFrame({f"x{j}": rng.normal(size=n) for j in range(n_x)})
    fe_dims = []
    for d in range(n_fe):
        levels = int(rng.integers(2, 9))
        df[f"fe{d}"] = rng.integers(0, levels, size=n)
        fe_dims.append(f"fe{d}")
    df["cluster"] = rng.integers(0, int(rng.integers(4, 20)), size=n)
    y = rng.normal(size=n)
    for j in range(n_x):
        y = y + (j + 1) * 0.5 * df[f"x{j}"]
    for d in fe_dims:
        effects = rng.normal(scale=2.0, size=df[d].max() + 1)
        y = y + effects[df[d]]
    df["y"] = (y > np.median(y)).astype(float) if binary_y else y
    spec = RegressionSpec(
        dependent="y",
        regressors=tuple(Term(f"x{j}") for j in range(n_x)),
        fixed_effects=tuple(fe_dims),
        cluster="cluster",
        se_kind="clustered",
    )
    return df, spec


def dummy_design(df, spec):
    """Explicit dummy expansion: all levels of the first dim, drop-one after."""
    cols = [df[t.column].to_numpy(dtype=float) for t in spec.regressors]
    names = [t.name for t in spec.regressors]
    for i, dim in enumerate(spec.fixed_effects):
        codes, uniques = pd.factorize(df[dim], sort=True)
        start = 0 if i == 0 else 1
        for level in range(start, len(uniques)):
            cols.append((codes == level).astype(float))
            names.append(f"{dim}={level}")
    return np.column_stack(cols), df[spec.dependent].to_numpy(dtype=float), names


def dense_clustered_cov(df, spec, k_model):
    """From-scratch covariance for the x-block via the explicit annihilator."""
    X = np.column_stack([df[t.column].to_numpy(dtype=float) for t in spec.regressors])
    y = df[spec.dependent].to_numpy(dtype=float)
    dummies = []
    for i, dim in enumerate(spec.fixed_effects):
        codes, uniques = pd.factorize(df[dim], sort=True)
        start = 0 if i == 0 else 1
        for level in range(start, len(uniques)):
            dummies.append((codes == level).astype(float))
    D = np.column_stack(dummies)
    M = np.eye(len(df)) - D @ np.linalg.pinv(D.T @ D) @ D.T
    Xt = M @ X
    yt = M @ y
    beta = np.linalg.lstsq(Xt, yt, rcond=None)[0]
    resid = yt - Xt @ beta
    bread = np.linalg.inv(Xt.T @ Xt)
    clusters = pd.factorize(df[spec.cluster], sort=True)[0]
    g = clusters.max() + 1
    meat = np.zeros((X.shape[1], X.shape[1]))
    for cid in range(g):
        sel = clusters == cid
        s = Xt[sel].T @ resid[sel]
        meat += np.outer(s, s)
    n = len(df)
    factor = (g / (g - 1)) * ((n - 1) / (n - k_model))
    return factor * bread @ meat @ bread


class TestAbsorb:
    def test_hand_within_means(self):
        y = np.array([1.0, 2.0, 3.0, 5.0])
        codes = [np.array([0, 0, 1, 1])]
        out, sweeps, _ = absorb_fe(y, codes)
        assert out[:, 0] == pytest.approx([-0.5, 0.5, -1.0, 1.0])

    def test_constant_within_groups_becomes_zero(self):
        codes = [np.array([0, 0, 1, 1, 2, 2])]
        col = np.array([3.0, 3.0, -1.0, -1.0, 7.0, 7.0])
        out, _, _ = absorb_fe(col, codes)
        assert np.allclose(out, 0.0, atol=1e-12)

    def test_nested_dims_match_finer_alone(self, rng):
        n = 120
        product = rng.integers(0, 10, size=n)
        category = product // 5  # category is coarser than product
        x = rng.normal(size=n)
        both, _, _ = absorb_fe(x, [category, product])
        fine, _, _ = absorb_fe(x, [product])
        assert np.allclose(both, fine, atol=1e-9)

    def test_fixpoint(self, rng):
        df, spec = random_panel(rng)
        design = build_design(df, spec)
        out, _, _ = absorb_fe(design.X, design.fe_codes)
        again, sweeps, change = absorb_fe(out, design.fe_codes)
        assert np.abs(again - out).max() <= 1e-7

    def test_needs_dimension(self):
        with pytest.raises(ValueError):
            absorb_fe(np.ones(3), [])

    def test_nonconvergence_raises(self):
        rng = np.random.default_rng(0)
        a = rng.integers(0, 40, size=80)
        b = rng.integers(0, 40, size=80)
        x = rng.normal(size=80)
        with pytest.raises(ConvergenceError):
            absorb_fe(x, [a, b], tol=1e-15, max_iter=2)


class TestOlsFit:
    def test_hand_within_estimator(self):
        y = np.array([1.0, 2.0, 3.0, 5.0])
        x = np.array([0.0, 1.0, 0.0, 1.0])
        codes = [np.array([0, 0, 1, 1])]
        stacked, _, _ = absorb_fe(np.column_stack([y, x]), codes)
        beta, resid, kept, dropped = ols_fit(stacked[:, 1:], stacked[:, 0])
        assert beta[0] == pytest.approx(1.5)
        assert dropped == []

    def test_perfect_fit_zero_residuals(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=30)
        codes = [rng.integers(0, 3, size=30)]
        fx = np.column_stack([2.5 * x, x])
        stacked, _, _ = absorb_fe(fx, codes)
        beta, resid, kept, dropped = ols_fit(
            stacked[:, 1:][:, None] if stacked[:, 1:].ndim == 1 else stacked[:, 1:],
            stacked[:, 0],
        )
        assert beta[0] == pytest.approx(2.5)
        assert np.abs(resid).max() < 1e-10

    def test_duplicate_column_dropped(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=50)
        X = np.column_stack([x, x])
        y = x + rng.normal(size=50)
        beta, resid, kept, dropped = ols_fit(X, y, names=["first", "second"])
        assert kept == [0]
        assert dropped == ["second"]


class TestStandardErrors:
    def test_row_clusters_equal_hc1(self, rng):
        n = 200
        X = rng.normal(size=(n, 3))
        y = X @ np.array([1.0, -0.5, 0.2]) + rng.normal(size=n)
        beta = np.linalg.lstsq(X, y, rcond=None)[0]
        resid = y - X @ beta
        k = 3
        hc1 = standard_errors(X, resid, "hc1", None, k)
        clu = standard_errors(X, resid, "clustered", np.arange(n), k)
        # G = N makes the small-sample factors coincide exactly
        assert hc1 == pytest.approx(clu, rel=1e-12)

    def test_zero_residuals_zero_se(self, rng):
        X = rng.normal(size=(40, 2))
        resid = np.zeros(40)
        for kind, codes in (("classical", None), ("hc1", None), ("clustered", np.arange(40) % 5)):
            se = standard_errors(X, resid, kind, codes, 2)
            assert np.all(se == 0.0)

    def test_single_cluster_rejected(self, rng):
        X = rng.normal(size=(30, 2))
        with pytest.raises(ValueError):
            standard_errors(X, rng.normal(size=30), "clustered", np.zeros(30, dtype=int), 2)

    def test_stars(self):
        assert stars(3.0) == "***"
        assert stars(2.0) == "**"
        assert stars(1.7) == "*"
        assert stars(1.0) == ""


class TestOracles:
    def test_frisch_waugh_and_sandwich(self, rng):
        for trial in range(30):
            df, spec = random_panel(rng)
            result = fit(df, spec)
            X_full, y, names = dummy_design(df, spec)
            beta_full = np.linalg.lstsq(X_full, y, rcond=None)[0]
            for j, t in enumerate(spec.regressors):
                assert result.coefficients[t.name] == pytest.approx(
                    beta_full[j], abs=1e-8
                ), f"trial {trial}"
            cov = dense_clustered_cov(df, spec, result.k_model)
            for j, t in enumerate(spec.regressors):
                se_oracle = np.sqrt(cov[j, j])
                assert result.std_errors[t.name] == pytest.approx(
                    se_oracle, rel=1e-8
                ), f"trial {trial}"

    def test_scale_equivariance(self, rng):
        df, spec = random_panel(rng, n_x=2)
        base = fit(df, spec)
        scaled = df.copy()
        scaled["x0"] = scaled["x0"] * 4.0  # power of two: exact in floats
        res = fit(scaled, spec)
        assert res.coefficients["x0"] == pytest.approx(base.coefficients["x0"] / 4.0, rel=1e-12)
        assert res.std_errors["x0"] == pytest.approx(base.std_errors["x0"] / 4.0, rel=1e-9)
        assert res.coefficients["x1"] == pytest.approx(base.coefficients["x1"], rel=1e-9)

    def test_determinism(self, rng):
        df, spec = random_panel(rng)
        a = fit(df, spec)
        b = fit(df, spec)
        assert a.coefficients == b.coefficients
        assert a.std_errors == b.std_errors


class TestBuildDesign:
    def _df(self):
        rng = np.random.default_rng(5)
        n = 60
        return pd.DataFrame(
            {
                "y": rng.integers(0, 2, size=n).astype(float),
                "vol": rng.uniform(0.5, 20.0, size=n),
                "non_storable": rng.integers(0, 2, size=n),
                "month": rng.integers(1, 13, size=n),
                "store": rng.integers(0, 5, size=n),
                "cluster": rng.integers(0, 8, size=n),
            }
        )

    def test_ln_transform(self):
        df = self._df()
        df.loc[0, "vol"] = np.e
        spec = RegressionSpec(
            "y", (Term("vol", "ln"),), ("month", "store"), "cluster", "clustered"
        )
        design = build_design(df, spec)
        assert design.X[0, 0] == pytest.approx(1.0)

    def test_interaction_dummy_algebra(self):
        df = self._df()
        spec = RegressionSpec(
            "y",
            (Term("vol", "ln"), Term("vol", "ln", interact="non_storable")),
            ("month",),
            "cluster",
            "clustered",
        )
        design = build_design(df, spec)
        on = df["non_storable"].to_numpy() == 1
        assert design.X[on, 1] == pytest.approx(design.X[on, 0])
        assert np.all(design.X[~on, 1] == 0.0)

    def test_missing_column_named(self):
        df = self._df()
        spec = RegressionSpec(
            "y", (Term("vol", "ln"),), ("month", "zone"), "cluster", "clustered"
        )
        with pytest.raises(KeyError, match="zone"):
            build_design(df, spec)

    def test_nonpositive_ln_rows_dropped(self):
        df = self._df()
        df.loc[:4, "vol"] = -1.0
        spec = RegressionSpec(
            "y", (Term("vol", "ln"),), ("month",), "cluster", "clustered"
        )
        design = build_design(df, spec)
        assert design.n_dropped_rows == 5
        assert len(design.y) == len(df) - 5

    def test_all_rows_dropped(self):
        df = self._df()
        df["vol"] = -1.0
        spec = RegressionSpec(
            "y", (Term("vol", "ln"),), ("month",), "cluster", "clustered"
        )
        with pytest.raises(ValueError, match="all rows dropped"):
            build_design(df, spec)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            RegressionSpec("y", (Term("y"),), ("month",), "cluster", "clustered")
        with pytest.raises(ValueError):
            RegressionSpec("y", (Term("x"),), ("month",), None, "clustered")
        with pytest.raises(ValueError):
            RegressionSpec("y", (Term("x"),), (), "c", "clustered")


class TestCollinearRevenue:
    def test_revenue_equal_volume_times_constant_price_dropped(self, rng):
        n = 400
        df = pd.DataFrame(
            {
                "small": rng.integers(0, 2, size=n).astype(float),
                "avg_volume": rng.uniform(1.0, 50.0, size=n),
                "month": rng.integers(1, 13, size=n),
                "store": rng.integers(0, 6, size=n),
                "upc": rng.integers(0, 25, size=n),
            }
        )
        df["avg_revenue"] = df["avg_volume"] * 5.0  # constant price
        spec = RegressionSpec(
            "small",
            (Term("avg_volume", "ln"), Term("avg_revenue", "ln")),
            ("month", "store", "upc"),
            "upc",
            "clustered",
        )
        result = fit(df, spec)
        assert result.dropped_columns == ("ln(avg_revenue)",)
        assert "ln(avg_volume)" in result.coefficients


class TestPerCategory:
    def test_batch_reports_failures(self, rng):
        df, spec = random_panel(rng, n_fe=2, n_x=1)
        df["category"] = rng.integers(0, 3, size=len(df))
        # category 2 gets a single cluster -> clustered SEs must fail there
        df.loc[df["category"] == 2, "cluster"] = 0
        out = run_per_category(df, spec)
        assert isinstance(out[0], object)
        assert isinstance(out[2], str) and out[2].startswith("error")


class TestPerProduct:
    def _stats(self, rng, n_stores=40, slope=0.02):
        rows = []
        for upc in (1, 2):
            for s in range(n_stores):
                vol = rng.uniform(1, 30)
                share = np.clip(slope * vol + rng.normal(0, 0.02), 0, 1)
                rows.append(
                    {
                        "store": s,
                        "upc": upc,
                        "avg_volume": vol,
                        "n_changes": 10,
                        "n_small": round(share * 10),
                        "n_obs": 100,
                    }
                )
        return pd.DataFrame(rows)

    def _meta(self):
        return pd.DataFrame(
            {"upc": [1, 2], "category": [0, 0], "producer": 1, "brand": "national",
             "pack_qty": 1, "storable": 1}
        )

    def test_min_stores_threshold(self, rng):
        stats = self._stats(rng, n_stores=29)
        per_upc, rollup = per_product_regressions(stats, self._meta(), min_stores=30)
        assert len(per_upc) == 0

    def test_identical_shares_zero_slope(self, rng):
        stats = self._stats(rng, n_stores=35, slope=0.0)
        stats["n_small"] = 5
        per_upc, _ = per_product_regressions(stats, self._meta(), min_stores=30)
        assert len(per_upc) == 2
        assert per_upc["coefficient"].abs().max() < 1e-10

    def test_positive_mechanism_recovered(self, rng):
        stats = self._stats(rng, n_stores=60, slope=0.02)
        per_upc, rollup = per_product_regressions(stats, self._meta(), min_stores=30)
        assert (per_upc["coefficient"] > 0).all()
        assert rollup.loc[0, "pct_positive"] == 1.0
        assert rollup.loc[0, "n_coefficients"] == 2
