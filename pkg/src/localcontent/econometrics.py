"""Least-squares estimators for linear probability and market-level models.

OLS and 2SLS are solved with a column-pivoted QR factorization. Collinear
columns are detected against a tolerance relative to the largest pivot and
removed, later-listed columns first. Covariance options:

``classical``  ``s^2 (X'X)^-1``
``hc1``        heteroskedasticity-robust sandwich times ``N / (N - K)``
``cr0``        cluster sandwich, no small-sample factor
``cr1``        cluster sandwich times ``G/(G-1) * (N-1)/(N-K)``

With a fixed-effect group, ``K`` counts the absorbed group intercepts too,
so every covariance matches the dummy-variable regression exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import linalg

COLLINEARITY_TOL = 1e-10
CONST = "const"
COV_TYPES = ("classical", "hc1", "cr0", "cr1")


@dataclass(frozen=True)
class RegressionSpec:
    outcome: str
    regressors: tuple[str, ...]
    endogenous: tuple[str, ...] = ()
    instruments: tuple[str, ...] = ()
    cluster: str | None = None
    fixed_effect_group: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "regressors", tuple(self.regressors))
        object.__setattr__(self, "endogenous", tuple(self.endogenous))
        object.__setattr__(self, "instruments", tuple(self.instruments))
        missing = [c for c in self.endogenous if c not in self.regressors]
        if missing:
            raise ValueError(f"endogenous columns not among regressors: {missing}")
        if bool(self.endogenous) != bool(self.instruments):
            raise ValueError("instruments must be given exactly when endogenous columns are")
        if len(self.instruments) < len(self.endogenous):
            raise ValueError(
                f"order condition fails: {len(self.instruments)} instruments "
                f"for {len(self.endogenous)} endogenous regressors"
            )
        both = set(self.endogenous) & set(self.instruments)
        if both:
            raise ValueError(f"columns both endogenous and instrument: {sorted(both)}")

    @property
    def intercept(self) -> bool:
        return self.fixed_effect_group is None

    @property
    def exogenous(self) -> tuple[str, ...]:
        return tuple(c for c in self.regressors if c not in self.endogenous)


@dataclass
class RegressionFit:
    spec: RegressionSpec
    coefficients: pd.Series
    residuals: np.ndarray
    vcov: pd.DataFrame
    r_squared: float
    n_obs: int
    n_params: int
    dof_resid: int
    cov_type: str
    n_clusters: int | None = None
    dropped_columns: tuple[str, ...] = ()
    n_absorbed: int = 0
    first_stage: dict[str, "RegressionFit"] = field(default_factory=dict)
    design: np.ndarray = field(default=None, repr=False)
    bread: np.ndarray = field(default=None, repr=False)

    @property
    def std_errors(self) -> pd.Series:
        return pd.Series(np.sqrt(np.clip(np.diag(self.vcov.to_numpy()), 0, None)),
                         index=self.coefficients.index)

    @property
    def tvalues(self) -> pd.Series:
        return self.coefficients / self.std_errors

    @property
    def pvalues(self) -> pd.Series:
        z = self.tvalues.abs().to_numpy()
        return pd.Series([math.erfc(v / math.sqrt(2.0)) for v in z], index=self.coefficients.index)

    def stars(self) -> pd.Series:
        return self.pvalues.map(significance_stars)

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "coef": self.coefficients,
            "se": self.std_errors,
            "t": self.tvalues,
            "p": self.pvalues,
            "stars": self.stars(),
        })


def significance_stars(p: float) -> str:
    """``**`` below 1 %, ``*`` below 5 % (two-sided normal)."""
    if not np.isfinite(p):
        return ""
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""


# ---------------------------------------------------------------------------
# linear algebra


def retained_columns(X: np.ndarray, tol: float = COLLINEARITY_TOL) -> np.ndarray:
    """Indices of a maximal independent column subset, dropping later columns first.

    The numerical rank comes from a pivoted QR (pivots above ``tol`` times the
    largest). A column is kept when its component orthogonal to the kept
    columns before it clears the same threshold.
    """
    n, k = X.shape
    if k == 0:
        return np.arange(0)
    R_piv = linalg.qr(X, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R_piv))
    if diag.size == 0 or diag[0] == 0:
        return np.arange(0)
    threshold = tol * diag[0]
    rank = int(np.sum(diag > threshold))
    if rank == k:
        return np.arange(k)

    R = linalg.qr(X, mode="r")[0]
    kept = np.flatnonzero(np.abs(np.diag(R)[:k]) > threshold)
    if kept.size == rank:
        return kept

    # Fall back to growing the set one column at a time.
    kept_list: list[int] = []
    for j in range(k):
        trial = kept_list + [j]
        d = np.abs(np.diag(linalg.qr(X[:, trial], mode="r", pivoting=True)[0]))
        if np.sum(d > threshold) == len(trial):
            kept_list = trial
    return np.asarray(kept_list, dtype=int)


def qr_solve(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares coefficients and ``(X'X)^-1`` for a full-column-rank ``X``."""
    Q, R, P = linalg.qr(X, mode="economic", pivoting=True)
    k = X.shape[1]
    beta_p = linalg.solve_triangular(R, Q.T @ y)
    R_inv = linalg.solve_triangular(R, np.eye(k))
    inv_p = R_inv @ R_inv.T
    beta = np.empty(k)
    beta[P] = beta_p
    bread = np.empty((k, k))
    bread[np.ix_(P, P)] = inv_p
    return beta, bread


def _numeric(data: pd.DataFrame, cols) -> np.ndarray:
    missing = [c for c in cols if c not in data.columns]
    if missing:
        raise KeyError(f"columns not in data: {missing}")
    arr = data.loc[:, list(cols)].to_numpy(dtype=float)
    bad = ~np.isfinite(arr)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValueError(f"non-finite value in column {cols[c]!r} at row {data.index[r]!r}")
    return arr


def group_codes(values) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(pd.Series(values).astype(str), sort=True)
    return codes.astype(np.intp), len(uniques)


def within_transform(data: pd.DataFrame, group_column: str, columns) -> pd.DataFrame:
    """Copy of ``data`` with ``columns`` replaced by deviations from group means."""
    codes, n_groups = group_codes(data[group_column].to_numpy())
    out = data.copy()
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    for c in columns:
        x = data[c].to_numpy(dtype=float)
        means = np.bincount(codes, weights=x, minlength=n_groups) / counts
        out[c] = x - means[codes]
    return out


def interaction(data: pd.DataFrame, a_column: str, b_column: str) -> pd.Series:
    """Elementwise product of two columns, named ``"a×b"``."""
    values = data[a_column].to_numpy(dtype=float) * data[b_column].to_numpy(dtype=float)
    return pd.Series(values, index=data.index, name=f"{a_column}×{b_column}")


# ---------------------------------------------------------------------------
# covariance


def _meat(design: np.ndarray, resid: np.ndarray, codes: np.ndarray | None, n_groups: int) -> np.ndarray:
    scores = design * resid[:, None]
    if codes is None:
        return scores.T @ scores
    sums = np.empty((n_groups, design.shape[1]))
    for j in range(design.shape[1]):
        sums[:, j] = np.bincount(codes, weights=scores[:, j], minlength=n_groups)
    return sums.T @ sums


def _covariance(fit: RegressionFit, cov_type: str, clusters=None) -> tuple[np.ndarray, int | None]:
    bread, X, e = fit.bread, fit.design, fit.residuals
    n, dof = fit.n_obs, fit.dof_resid
    if cov_type == "classical":
        return bread * (e @ e / dof), None
    if cov_type == "hc1":
        return bread @ _meat(X, e, None, 0) @ bread * (n / dof), None
    if cov_type in ("cr0", "cr1"):
        if clusters is None:
            raise ValueError(f"{cov_type} covariance needs a cluster column")
        codes, g = group_codes(clusters)
        if len(codes) != n:
            raise ValueError("cluster column length differs from the fitted sample")
        if g < 2:
            raise ValueError("cluster-robust covariance needs at least two clusters")
        scale = 1.0 if cov_type == "cr0" else (g / (g - 1)) * ((n - 1) / dof)
        return bread @ _meat(X, e, codes, g) @ bread * scale, g
    raise ValueError(f"unknown covariance type {cov_type!r}; choose from {COV_TYPES}")


def _symmetrize(V: np.ndarray) -> np.ndarray:
    return 0.5 * (V + V.T)


def cluster_robust_vcov(fit: RegressionFit, data: pd.DataFrame, cluster_column: str, kind: str = "cr1") -> pd.DataFrame:
    """Cluster-robust sandwich covariance for a fit on the rows of ``data``."""
    if kind not in ("cr0", "cr1"):
        raise ValueError("kind must be 'cr0' or 'cr1'")
    V, _ = _covariance(fit, kind, data[cluster_column].to_numpy())
    names = fit.coefficients.index
    return pd.DataFrame(_symmetrize(V), index=names, columns=names)


def hc1_vcov(fit: RegressionFit) -> pd.DataFrame:
    V, _ = _covariance(fit, "hc1")
    names = fit.coefficients.index
    return pd.DataFrame(_symmetrize(V), index=names, columns=names)


def with_covariance(fit: RegressionFit, data: pd.DataFrame, cov_type: str, cluster: str | None = None) -> RegressionFit:
    """Return ``fit`` with its covariance recomputed as ``cov_type``."""
    clusters = None if cluster is None else data[cluster].to_numpy()
    V, g = _covariance(fit, cov_type, clusters)
    names = fit.coefficients.index
    fit.vcov = pd.DataFrame(_symmetrize(V), index=names, columns=names)
    fit.cov_type = cov_type
    fit.n_clusters = g
    return fit


def _default_cov(spec: RegressionSpec, cov_type: str | None) -> str:
    if cov_type is None:
        return "cr1" if spec.cluster else "classical"
    if cov_type not in COV_TYPES:
        raise ValueError(f"unknown covariance type {cov_type!r}; choose from {COV_TYPES}")
    return cov_type


# ---------------------------------------------------------------------------
# estimators


def _prepare(data: pd.DataFrame, spec: RegressionSpec, regressors) -> tuple[np.ndarray, np.ndarray, list[str], int]:
    y = _numeric(data, [spec.outcome])[:, 0]
    X = _numeric(data, list(regressors)) if regressors else np.empty((len(data), 0))
    names = list(regressors)
    n_groups = 0
    if spec.fixed_effect_group is not None:
        codes, n_groups = group_codes(data[spec.fixed_effect_group].to_numpy())
        counts = np.bincount(codes, minlength=n_groups).astype(float)

        def demean(v):
            return v - (np.bincount(codes, weights=v, minlength=n_groups) / counts)[codes]

        y = demean(y)
        X = np.column_stack([demean(X[:, j]) for j in range(X.shape[1])]) if X.shape[1] else X
    else:
        X = np.column_stack([np.ones(len(data)), X])
        names = [CONST] + names
    return y, X, names, n_groups


def _finish(spec, data, y_raw, design, X_orig, names, kept, beta, bread, n_groups, cov_type):
    n = len(y_raw)
    resid = y_raw - X_orig @ beta
    k = len(kept)
    dof = n - k - n_groups
    if dof <= 0:
        raise ValueError(f"not enough observations: N={n}, parameters={k + n_groups}")
    y_total = _numeric(data, [spec.outcome])[:, 0]
    sst = float(np.sum((y_total - y_total.mean()) ** 2))
    ssr = float(resid @ resid)
    r2 = 0.0 if sst <= 0 else 1.0 - ssr / sst
    coef = pd.Series(beta, index=[names[i] for i in kept])
    kept_set = set(kept.tolist())
    dropped = tuple(names[i] for i in range(len(names)) if i not in kept_set)
    fit = RegressionFit(
        spec=spec,
        coefficients=coef,
        residuals=resid,
        vcov=pd.DataFrame(),
        r_squared=r2,
        n_obs=n,
        n_params=k,
        dof_resid=dof,
        cov_type=cov_type,
        dropped_columns=dropped,
        n_absorbed=n_groups,
        design=design,
        bread=bread,
    )
    return with_covariance(fit, data, cov_type, spec.cluster)


def ols_fit(data: pd.DataFrame, spec: RegressionSpec, cov_type: str | None = None) -> RegressionFit:
    """Ordinary least squares (a linear probability model for 0/1 outcomes).

    An intercept is added unless ``spec.fixed_effect_group`` is set, in which
    case outcome and regressors are demeaned within groups first. Collinear
    columns are dropped and listed in ``dropped_columns``. Endogenous and
    instrument fields of ``spec`` are ignored.
    """
    cov_type = _default_cov(spec, cov_type)
    y, X, names, n_groups = _prepare(data, spec, spec.regressors)
    if X.shape[0] == 0:
        raise ValueError("no observations")
    kept = retained_columns(X)
    if kept.size == 0:
        raise ValueError("no regressors left after removing collinear columns")
    Xk = X[:, kept]
    beta, bread = qr_solve(Xk, y)
    # With fixed effects the residuals of the demeaned model equal the LSDV residuals.
    return _finish(spec, data, y, Xk, Xk, names, kept, beta, bread, n_groups, cov_type)


def tsls_fit(data: pd.DataFrame, spec: RegressionSpec, cov_type: str | None = None) -> RegressionFit:
    """Two-stage least squares.

    Each endogenous regressor is first regressed on the exogenous regressors
    plus the instruments; the second stage uses those fitted values, and the
    reported residuals use the original regressors. First-stage fits are in
    ``first_stage``. Without endogenous columns this is :func:`ols_fit`.
    """
    if not spec.endogenous:
        return ols_fit(data, spec, cov_type)
    if spec.fixed_effect_group is not None:
        raise ValueError("fixed effects are not supported with instruments")
    cov_type = _default_cov(spec, cov_type)

    first: dict[str, RegressionFit] = {}
    fitted = {}
    z_cols = list(spec.exogenous) + list(spec.instruments)
    for endo in spec.endogenous:
        fs_spec = RegressionSpec(endo, tuple(z_cols), cluster=spec.cluster)
        fs = ols_fit(data, fs_spec, cov_type)
        lost = [z for z in spec.instruments if z in fs.dropped_columns]
        if len(spec.instruments) - len(lost) < len(spec.endogenous):
            raise ValueError(
                f"first stage for {endo!r} is rank deficient: instruments {list(spec.instruments)} "
                f"are collinear with the exogenous regressors (dropped {lost})"
            )
        first[endo] = fs
        fitted[endo] = data[endo].to_numpy(dtype=float) - fs.residuals

    y, X, names, _ = _prepare(data, spec, spec.regressors)
    X_hat = X.copy()
    for endo in spec.endogenous:
        X_hat[:, names.index(endo)] = fitted[endo]
    kept = retained_columns(X_hat)
    kept_names = {names[i] for i in kept}
    lost_endo = [e for e in spec.endogenous if e not in kept_names]
    if lost_endo:
        raise ValueError(
            f"instruments {list(spec.instruments)} do not identify {lost_endo}: "
            "fitted values are collinear with the exogenous regressors"
        )
    Xh = X_hat[:, kept]
    beta, bread = qr_solve(Xh, y)
    fit = _finish(spec, data, y, Xh, X[:, kept], names, kept, beta, bread, 0, cov_type)
    fit.first_stage = first
    return fit


def fit(data: pd.DataFrame, spec: RegressionSpec, cov_type: str | None = None) -> RegressionFit:
    """Dispatch to :func:`tsls_fit` or :func:`ols_fit` by the spec's content."""
    return tsls_fit(data, spec, cov_type) if spec.endogenous else ols_fit(data, spec, cov_type)
