import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st

from localcontent.econometrics import (
    CONST,
    RegressionSpec,
    cluster_robust_vcov,
    fit,
    hc1_vcov,
    interaction,
    ols_fit,
    significance_stars,
    tsls_fit,
    within_transform,
)


def frame(X, y, **extra):
    df = pd.DataFrame(X, columns=[f"x{j}" for j in range(X.shape[1])])
    df["y"] = y
    for k, v in extra.items():
        df[k] = v
    return df


def spec_for(df, **kw):
    regs = tuple(c for c in df.columns if c.startswith("x"))
    return RegressionSpec("y", regs, **kw)


def pinv_oracle(X, y):
    Xc = np.column_stack([np.ones(len(X)), X])
    return np.linalg.pinv(Xc.T @ Xc) @ Xc.T @ y


# ---------------------------------------------------------------------------
# OLS


def test_two_point_fit():
    df = pd.DataFrame({"x": [0.0, 1.0], "y": [1.0, 3.0]})
    with pytest.raises(ValueError, match="not enough observations"):
        ols_fit(df, RegressionSpec("y", ("x",)))
    df = pd.DataFrame({"x": [0.0, 1.0, 0.0, 1.0], "y": [1.0, 3.0, 1.0, 3.0]})
    f = ols_fit(df, RegressionSpec("y", ("x",)))
    assert f.coefficients[CONST] == pytest.approx(1.0, abs=1e-12)
    assert f.coefficients["x"] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(f.residuals, 0.0, atol=1e-12)
    assert f.r_squared == pytest.approx(1.0)


def test_constant_outcome():
    rng = np.random.default_rng(0)
    df = pd.DataFrame({"x": rng.normal(size=10), "y": 4.0})
    f = ols_fit(df, RegressionSpec("y", ("x",)))
    assert f.coefficients["x"] == pytest.approx(0.0, abs=1e-12)
    assert f.coefficients[CONST] == pytest.approx(4.0)
    assert f.r_squared == 0.0


def test_random_instance_matches_pinv():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20, 3))
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=20)
    f = ols_fit(frame(X, y), spec_for(frame(X, y)))
    np.testing.assert_allclose(f.coefficients.to_numpy(), pinv_oracle(X, y), atol=1e-8)


def test_collinear_later_column_dropped():
    rng = np.random.default_rng(2)
    x = rng.normal(size=30)
    df = pd.DataFrame({"a": x, "b": rng.normal(size=30), "c": 2 * x, "y": rng.normal(size=30)})
    f = ols_fit(df, RegressionSpec("y", ("a", "b", "c")))
    assert f.dropped_columns == ("c",)
    f2 = ols_fit(df, RegressionSpec("y", ("c", "b", "a")))
    assert f2.dropped_columns == ("a",)
    assert f2.coefficients["c"] == pytest.approx(f.coefficients["a"] / 2)


def test_non_finite_named():
    df = pd.DataFrame({"x": [1.0, np.nan, 3.0], "y": [1.0, 2.0, 3.0]}, index=[10, 11, 12])
    with pytest.raises(ValueError, match=r"'x'.*11"):
        ols_fit(df, RegressionSpec("y", ("x",)))


def test_no_regressors_left():
    df = pd.DataFrame({"g": ["a", "a", "b", "b"], "x": [1.0, 1.0, 2.0, 2.0], "y": [1.0, 2.0, 3.0, 5.0]})
    with pytest.raises(ValueError, match="no regressors"):
        ols_fit(df, RegressionSpec("y", ("x",), fixed_effect_group="g"))


@st.composite
def instances(draw, max_n=50, max_k=5):
    k = draw(st.integers(1, max_k))
    n = draw(st.integers(k + 3, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k)) * rng.uniform(0.1, 10, size=k)
    y = X @ rng.normal(size=k) + rng.normal(size=n)
    return X, y, rng


@given(instances())
def test_orthogonality_and_vcov_shape(inst):
    X, y, _ = inst
    df = frame(X, y)
    f = ols_fit(df, spec_for(df), cov_type="hc1")
    Xc = np.column_stack([np.ones(len(X)), X])
    scale = np.linalg.norm(Xc) * np.linalg.norm(f.residuals) + 1.0
    assert np.abs(Xc.T @ f.residuals).max() < 1e-8 * scale
    V = f.vcov.to_numpy()
    assert np.abs(V - V.T).max() <= 1e-10 * np.abs(V).max()
    assert np.linalg.eigvalsh(V).min() >= -1e-10 * np.abs(V).max()
    np.testing.assert_allclose(f.std_errors.to_numpy(), np.sqrt(np.diag(V)))


@given(instances(), st.randoms(use_true_random=False))
def test_row_permutation(inst, rnd):
    X, y, rng = inst
    df = frame(X, y, g=rng.integers(0, 4, size=len(y)))
    spec = spec_for(df, cluster="g")
    df["g"] = df["g"].astype(str)
    if df["g"].nunique() < 2:
        return
    order = list(range(len(df)))
    rnd.shuffle(order)
    a = ols_fit(df, spec)
    b = ols_fit(df.iloc[order], spec)
    np.testing.assert_allclose(a.coefficients, b.coefficients, rtol=0, atol=1e-12 * (1 + np.abs(a.coefficients).max()))
    np.testing.assert_allclose(a.std_errors, b.std_errors, rtol=1e-10)


@given(instances(), st.floats(0.01, 100.0))
def test_rescaling_regressor(inst, k):
    X, y, _ = inst
    df = frame(X, y)
    a = ols_fit(df, spec_for(df), cov_type="hc1")
    df2 = df.assign(x0=df["x0"] * k)
    b = ols_fit(df2, spec_for(df2), cov_type="hc1")
    assert b.coefficients["x0"] == pytest.approx(a.coefficients["x0"] / k, rel=1e-7, abs=1e-12)
    assert b.std_errors["x0"] == pytest.approx(a.std_errors["x0"] / k, rel=1e-7)
    others = [c for c in a.coefficients.index if c != "x0"]
    np.testing.assert_allclose(b.coefficients[others], a.coefficients[others], rtol=1e-7, atol=1e-10)


# ---------------------------------------------------------------------------
# covariance


def hc1_oracle(X, y):
    Xc = np.column_stack([np.ones(len(X)), X])
    n, k = Xc.shape
    beta = np.linalg.pinv(Xc) @ y
    e = y - Xc @ beta
    inv = np.linalg.inv(Xc.T @ Xc)
    meat = sum(np.outer(Xc[i], Xc[i]) * e[i] ** 2 for i in range(n))
    return inv @ meat @ inv * n / (n - k)


def test_hc1_matches_oracle():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(25, 2))
    y = X @ [1.0, 2.0] + rng.normal(size=25) * (1 + np.abs(X[:, 0]))
    f = ols_fit(frame(X, y), spec_for(frame(X, y)), cov_type="hc1")
    np.testing.assert_allclose(f.vcov.to_numpy(), hc1_oracle(X, y), rtol=1e-10)


def test_singleton_clusters_equal_hc1():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 3))
    y = X @ [0.3, -1.0, 2.0] + rng.normal(size=40)
    df = frame(X, y, id=np.arange(40))
    f = ols_fit(df, spec_for(df), cov_type="hc1")
    V_cr1 = cluster_robust_vcov(f, df, "id").to_numpy()
    V_hc1 = hc1_vcov(f).to_numpy()
    assert np.abs(V_cr1 - V_hc1).max() <= 1e-12 * np.abs(V_hc1).max()


def test_two_cluster_sandwich_by_hand():
    xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    ys = [1.0, 4.0, 2.5, 3.0, 7.0, 5.0]
    gs = ["a", "a", "a", "b", "b", "b"]
    n, k, g = 6, 2, 2
    # closed-form simple regression
    mx, my = sum(xs) / n, sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    b1 = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / sxx
    b0 = my - b1 * mx
    e = [y - b0 - b1 * x for x, y in zip(xs, ys)]
    # (X'X)^-1 for columns [1, x]
    s1, sx, sxx2 = n, sum(xs), sum(x * x for x in xs)
    det = s1 * sxx2 - sx * sx
    inv = [[sxx2 / det, -sx / det], [-sx / det, s1 / det]]
    # cluster score sums
    u = {c: [0.0, 0.0] for c in "ab"}
    for x, r, c in zip(xs, e, gs):
        u[c][0] += r
        u[c][1] += x * r
    meat = [[sum(u[c][i] * u[c][j] for c in "ab") for j in range(2)] for i in range(2)]
    left = [[sum(inv[i][m] * meat[m][j] for m in range(2)) for j in range(2)] for i in range(2)]
    V = [[sum(left[i][m] * inv[m][j] for m in range(2)) for j in range(2)] for i in range(2)]
    c = (g / (g - 1)) * ((n - 1) / (n - k))
    expected = np.array(V) * c

    df = pd.DataFrame({"x": xs, "y": ys, "g": gs})
    f = ols_fit(df, RegressionSpec("y", ("x",), cluster="g"))
    assert f.cov_type == "cr1" and f.n_clusters == 2
    np.testing.assert_allclose(f.coefficients.to_numpy(), [b0, b1], rtol=1e-12)
    assert np.abs(expected).min() > 1e-3
    np.testing.assert_allclose(f.vcov.to_numpy(), expected, rtol=1e-10)
    cr0 = cluster_robust_vcov(f, df, "g", kind="cr0").to_numpy()
    np.testing.assert_allclose(cr0 * c, expected, rtol=1e-10)


def test_single_cluster_is_error():
    df = pd.DataFrame({"x": [1.0, 2.0, 3.0, 5.0], "y": [1.0, 0.0, 2.0, 1.0], "g": 1})
    with pytest.raises(ValueError, match="two clusters"):
        ols_fit(df, RegressionSpec("y", ("x",), cluster="g"))


def test_duplication_keeps_coefficients():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 2))
    y = X @ [1.0, 1.0] + rng.normal(size=30)
    df = frame(X, y, g=np.arange(30) % 5)
    spec = spec_for(df, cluster="g")
    a = ols_fit(df, spec)
    b = ols_fit(pd.concat([df, df], ignore_index=True), spec)
    np.testing.assert_allclose(a.coefficients, b.coefficients, rtol=1e-12, atol=1e-14)


@given(st.permutations(list("abcdefg")))
def test_cluster_relabeling(labels):
    rng = np.random.default_rng(6)
    X = rng.normal(size=(35, 2))
    y = X @ [1.0, -1.0] + rng.normal(size=35)
    codes = np.arange(35) % 7
    a = ols_fit(frame(X, y, g=codes), spec_for(frame(X, y), cluster="g"))
    relabeled = np.array(labels)[codes]
    b = ols_fit(frame(X, y, g=relabeled), spec_for(frame(X, y), cluster="g"))
    np.testing.assert_allclose(a.vcov.to_numpy(), b.vcov.to_numpy(), rtol=1e-12)


# ---------------------------------------------------------------------------
# 2SLS


def test_z_equals_x_is_ols():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 3))
    y = X @ [1.0, 0.5, -0.2] + rng.normal(size=60)
    df = frame(X, y, g=np.arange(60) % 6, z2=X[:, 2])
    base = spec_for(df, cluster="g")
    ols = ols_fit(df, base)
    iv = tsls_fit(df, RegressionSpec("y", base.regressors, endogenous=("x2",),
                                     instruments=("z2",), cluster="g"))
    np.testing.assert_allclose(iv.coefficients, ols.coefficients, rtol=0, atol=1e-10)
    np.testing.assert_allclose(iv.std_errors, ols.std_errors, rtol=0, atol=1e-10)


def test_just_identified_covariance_ratio():
    z = np.array([0.2, 1.4, -0.3, 2.2, 0.9, -1.1, 0.5, 1.7, -0.6, 0.0])
    u = np.array([0.5, -0.2, 0.1, 0.3, -0.4, 0.2, -0.1, 0.0, 0.6, -0.3])
    x = 0.8 * z + u
    y = 1.0 + 2.0 * x + 1.5 * u
    df = pd.DataFrame({"x": x, "y": y, "z": z})
    f = tsls_fit(df, RegressionSpec("y", ("x",), endogenous=("x",), instruments=("z",)))
    expected = np.cov(z, y)[0, 1] / np.cov(z, x)[0, 1]
    assert abs(f.coefficients["x"] - expected) < 1e-10
    # residuals use the original regressor
    np.testing.assert_allclose(f.residuals, y - f.coefficients[CONST] - f.coefficients["x"] * x, atol=1e-12)


def test_first_stage_is_ols():
    rng = np.random.default_rng(8)
    n = 200
    z = rng.normal(size=n)
    w = rng.normal(size=n)
    x = 0.7 * z + 0.3 * w + rng.normal(size=n)
    y = 1 + x - w + rng.normal(size=n)
    df = pd.DataFrame({"x": x, "w": w, "z": z, "y": y})
    f = tsls_fit(df, RegressionSpec("y", ("w", "x"), endogenous=("x",), instruments=("z",)))
    direct = ols_fit(df, RegressionSpec("x", ("w", "z")))
    np.testing.assert_allclose(f.first_stage["x"].coefficients, direct.coefficients, rtol=1e-12)


def test_empty_endogenous_is_ols_bitwise():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(30, 2))
    df = frame(X, rng.normal(size=30))
    a = tsls_fit(df, spec_for(df))
    b = ols_fit(df, spec_for(df))
    assert a.coefficients.equals(b.coefficients) and a.vcov.equals(b.vcov)


def test_rank_deficient_first_stage_names_instrument():
    rng = np.random.default_rng(10)
    w = rng.normal(size=40)
    df = pd.DataFrame({"w": w, "z": 3 * w, "x": rng.normal(size=40), "y": rng.normal(size=40)})
    with pytest.raises(ValueError, match="'z'"):
        tsls_fit(df, RegressionSpec("y", ("w", "x"), endogenous=("x",), instruments=("z",)))


def test_spec_validation():
    with pytest.raises(ValueError, match="order condition"):
        RegressionSpec("y", ("a", "b"), endogenous=("a", "b"), instruments=("z",))
    with pytest.raises(ValueError, match="both"):
        RegressionSpec("y", ("a", "b"), endogenous=("a",), instruments=("a",))


# ---------------------------------------------------------------------------
# fixed effects


def lsdv_fixture():
    rng = np.random.default_rng(11)
    g = np.repeat(["g1", "g2", "g3"], 4)
    x1 = rng.normal(size=12)
    x2 = rng.normal(size=12)
    effect = {"g1": 1.0, "g2": -2.0, "g3": 0.5}
    y = np.array([effect[v] for v in g]) + 1.5 * x1 - 0.7 * x2 + rng.normal(scale=0.3, size=12)
    return pd.DataFrame({"g": g, "x1": x1, "x2": x2, "y": y, "gc": np.array([1.0, 2.0, 3.0]).repeat(4)})


def test_within_equals_lsdv():
    df = lsdv_fixture()
    D = pd.get_dummies(df["g"]).to_numpy(dtype=float)
    Z = np.column_stack([df[["x1", "x2"]].to_numpy(), D])
    y = df["y"].to_numpy()
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    e = y - Z @ beta
    n, p = Z.shape
    inv = np.linalg.inv(Z.T @ Z)
    V_classical = inv * (e @ e) / (n - p)
    meat = sum(np.outer(Z[i], Z[i]) * e[i] ** 2 for i in range(n))
    V_hc1 = inv @ meat @ inv * n / (n - p)

    f = ols_fit(df, RegressionSpec("y", ("x1", "x2"), fixed_effect_group="g"))
    np.testing.assert_allclose(f.coefficients.to_numpy(), beta[:2], atol=1e-8)
    np.testing.assert_allclose(f.residuals, e, atol=1e-10)
    np.testing.assert_allclose(f.std_errors.to_numpy(), np.sqrt(np.diag(V_classical))[:2], rtol=1e-8)
    h = ols_fit(df, RegressionSpec("y", ("x1", "x2"), fixed_effect_group="g"), cov_type="hc1")
    np.testing.assert_allclose(h.std_errors.to_numpy(), np.sqrt(np.diag(V_hc1))[:2], rtol=1e-8)
    assert f.dof_resid == n - p
    # R-squared of the dummy-variable regression
    assert f.r_squared == pytest.approx(1 - e @ e / np.sum((y - y.mean()) ** 2), rel=1e-10)


def test_group_constant_column_is_absorbed():
    df = lsdv_fixture()
    w = within_transform(df, "g", ["gc", "x1"])
    np.testing.assert_allclose(w["gc"], 0.0, atol=1e-15)
    f = ols_fit(df, RegressionSpec("y", ("x1", "gc"), fixed_effect_group="g"))
    assert f.dropped_columns == ("gc",) and "gc" not in f.coefficients


def test_single_group_is_demeaning():
    df = pd.DataFrame({"g": 1, "x": [1.0, 2.0, 6.0]})
    np.testing.assert_allclose(within_transform(df, "g", ["x"])["x"], [-2.0, -1.0, 3.0])


# ---------------------------------------------------------------------------
# helpers


def test_interaction():
    df = pd.DataFrame({"black": [1.0, 0.0, 0.0], "share": [0.3, 0.9, 0.0]})
    col = interaction(df, "black", "share")
    assert col.name == "black×share"
    np.testing.assert_allclose(col, [0.3, 0.0, 0.0])
    np.testing.assert_array_equal(col.to_numpy(), interaction(df, "share", "black").to_numpy())


def test_stars():
    assert significance_stars(0.009) == "**"
    assert significance_stars(0.02) == "*"
    assert significance_stars(0.2) == ""
    # two-sided normal: |t| = 1.96 is just significant at 5 %
    assert significance_stars(math.erfc(1.97 / math.sqrt(2))) == "*"


def test_fit_dispatch():
    rng = np.random.default_rng(12)
    df = pd.DataFrame({"x": rng.normal(size=20), "z": rng.normal(size=20), "y": rng.normal(size=20)})
    assert not fit(df, RegressionSpec("y", ("x",))).first_stage
    assert "x" in fit(df, RegressionSpec("y", ("x",), endogenous=("x",), instruments=("z",))).first_stage


def test_cluster_errors_match_statsmodels():
    sm = pytest.importorskip("statsmodels.api")
    rng = np.random.default_rng(13)
    n, g = 300, 15
    groups = rng.integers(0, g, size=n)
    shock = rng.normal(size=g)[groups]
    X = rng.normal(size=(n, 2)) + shock[:, None] * 0.5
    y = X @ [0.4, -0.8] + shock + rng.normal(size=n)
    df = frame(X, y, g=groups)
    ours = ols_fit(df, spec_for(df, cluster="g"))
    ref = sm.OLS(y, sm.add_constant(X)).fit(cov_type="cluster", cov_kwds={"groups": groups})
    np.testing.assert_allclose(ours.coefficients.to_numpy(), ref.params, rtol=1e-10)
    np.testing.assert_allclose(ours.std_errors.to_numpy(), ref.bse, rtol=1e-10)
    hc1 = ols_fit(df, spec_for(df), cov_type="hc1")
    np.testing.assert_allclose(hc1.std_errors.to_numpy(), sm.OLS(y, sm.add_constant(X)).fit(cov_type="HC1").bse,
                               rtol=1e-10)
