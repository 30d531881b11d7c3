"""Column specifications for the market-size and connection tables.

``run_table`` takes an :class:`AnalysisData` (the market panel plus the joined
individual dataset) and a table number from 4 to 8, fits each column in
order and returns a :class:`TableResult` that renders as a CSV frame or a
plain-text coefficient grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .econometrics import CONST, RegressionFit, RegressionSpec, fit, interaction
from .ingest import CATEGORY_LABELS, CONTROL_COLUMNS
from .panel import LOCAL_CATEGORIES

TABLE_IDS = (4, 5, 6, 7, 8)

TITLES = {
    4: "Is there More Local Online Content in Larger Markets?",
    5: "Does Local Content Induce People to Connect?",
    6: "Does Racial Isolation Explain Connection?",
    7: "Does Local Content Induce People to Own Computers?",
    8: "Computer Ownership, Market Size, and Racial Isolation",
}

VARIABLE_LABELS = {
    CONST: "Constant",
    "pop": "DMA Pop. 1990 (mil.)",
    "local_news": "Local News/Info./Ent. Sites",
    "local_news_instr": "Local News Sites (instrument copy)",
    "college_pop": "College or Graduate School (mil.)",
    "black_share": "MSA Percent Black",
    "black×black_share": "Black Dummy x MSA Pct. Black",
    "black": "Black Dummy",
    "black_pop": "Black MSA Population",
    "nonblack_pop": "Non-Black MSA Population",
    "black×black_pop": "Black Dummy x Black MSA Pop.",
    "black×nonblack_pop": "Black Dummy x Non-Black MSA Pop",
}

DIGITS = {4: 3, 5: 5, 6: 3, 7: 5, 8: 3}


class TableError(ValueError):
    """A table could not be run on the supplied data."""


@dataclass
class AnalysisData:
    panel: pd.DataFrame
    individuals: pd.DataFrame


@dataclass
class ColumnDef:
    number: int
    label: str
    estimator: str
    spec: RegressionSpec
    sample: str = "all"
    controls: bool = False
    show: tuple[str, ...] = ()
    interactions: tuple[tuple[str, str], ...] = ()


@dataclass
class ColumnResult:
    column: ColumnDef
    fit: RegressionFit

    @property
    def reported(self) -> list[str]:
        return [v for v in self.column.show if v in self.fit.coefficients.index]


@dataclass
class TableResult:
    table_id: int
    title: str
    columns: list[ColumnResult] = field(default_factory=list)

    def column(self, number: int) -> ColumnResult:
        for c in self.columns:
            if c.column.number == number:
                return c
        raise KeyError(number)

    def frame(self) -> pd.DataFrame:
        """Long-format rows: one per reported coefficient."""
        rows = []
        for c in self.columns:
            f = c.fit
            se = f.std_errors
            stars = f.stars()
            for v in c.reported:
                rows.append({
                    "table": self.table_id,
                    "column": c.column.number,
                    "label": c.column.label,
                    "estimator": c.column.estimator,
                    "variable": v,
                    "coef": f.coefficients[v],
                    "se": se[v],
                    "stars": stars[v],
                    "n_obs": f.n_obs,
                    "r_squared": f.r_squared,
                    "n_clusters": f.n_clusters if f.n_clusters is not None else "",
                    "controls": "yes" if c.column.controls else "no",
                    "cov_type": f.cov_type,
                })
        return pd.DataFrame(rows)

    def grid(self) -> str:
        return format_grid(self)


# ---------------------------------------------------------------------------
# column definitions


def _table4() -> list[ColumnDef]:
    outcomes = [("local_total", "Total Locally Targeted Sites")] + [
        (f"local_{c}", f"Local {CATEGORY_LABELS[c]} Sites") for c in LOCAL_CATEGORIES
    ]
    return [
        ColumnDef(i + 1, label, "OLS", RegressionSpec(col, ("pop",)), sample="panel", show=("pop", CONST))
        for i, (col, label) in enumerate(outcomes)
    ]


def _content_table(outcome: str, label: str, cluster: str, instrument: str, with_first_stage: bool) -> list[ColumnDef]:
    controls = ("black",) + CONTROL_COLUMNS
    cols: list[ColumnDef] = []
    n = 1
    for use_controls in (False, True):
        ctl = controls if use_controls else ()
        sample = "complete" if use_controls else "all"
        show = ("pop", "local_news", CONST)
        cols.append(ColumnDef(n, label, "OLS", RegressionSpec(outcome, ("pop",) + ctl, cluster=cluster),
                              sample, use_controls, ("pop", CONST)))
        n += 1
        cols.append(ColumnDef(n, label, "OLS", RegressionSpec(outcome, ("pop", "local_news") + ctl, cluster=cluster),
                              sample, use_controls, show))
        n += 1
        if with_first_stage:
            cols.append(ColumnDef(
                n, "Local News/Info./Ent. Sites", "OLS",
                RegressionSpec("local_news", ("pop", instrument) + ctl, cluster=cluster),
                sample, use_controls, ("pop", instrument, CONST)))
            n += 1
        cols.append(ColumnDef(
            n, label, "IV",
            RegressionSpec(outcome, ("pop", "local_news") + ctl, endogenous=("local_news",),
                           instruments=(instrument,), cluster=cluster),
            sample, use_controls, show))
        n += 1
    return cols


def _isolation_table(outcome: str, cluster: str, fe_group: str) -> list[ColumnDef]:
    ctl = CONTROL_COLUMNS
    share_fe = ("black_share", "black", "black×black_share")
    pops = ("black_pop", "nonblack_pop")
    pops_fe = pops + ("black", "black×black_pop", "black×nonblack_pop")
    return [
        ColumnDef(1, "black", "OLS", RegressionSpec(outcome, ("black_share",) + ctl, cluster=cluster),
                  "black", True, ("black_share",)),
        ColumnDef(2, "nonblack", "OLS", RegressionSpec(outcome, ("black_share",) + ctl, cluster=cluster),
                  "nonblack", True, ("black_share",)),
        ColumnDef(3, "MSA FE", "FE",
                  RegressionSpec(outcome, share_fe + ctl, cluster=cluster, fixed_effect_group=fe_group),
                  "complete", True, ("black_share", "black×black_share", "black"),
                  (("black", "black_share"),)),
        ColumnDef(4, "black", "OLS", RegressionSpec(outcome, pops + ctl, cluster=cluster),
                  "black", True, pops),
        ColumnDef(5, "nonblack", "OLS", RegressionSpec(outcome, pops + ctl, cluster=cluster),
                  "nonblack", True, pops),
        ColumnDef(6, "MSA FE", "FE",
                  RegressionSpec(outcome, pops_fe + ctl, cluster=cluster, fixed_effect_group=fe_group),
                  "complete", True, pops + ("black", "black×black_pop", "black×nonblack_pop"),
                  (("black", "black_pop"), ("black", "nonblack_pop"))),
    ]


def table_columns(
    table_id: int,
    cluster: str | None = None,
    instrument: str = "college_pop",
    fe_group: str = "msa_id",
) -> list[ColumnDef]:
    """Column definitions for one table; ``cluster`` overrides the default unit."""
    if table_id == 4:
        return _table4()
    if table_id == 5:
        return _content_table("connected", "Net hm use comp/WTV own", cluster or "dma_id", instrument, True)
    if table_id == 7:
        return _content_table("has_computer", "One or More Computers at Home", cluster or "dma_id", instrument, False)
    if table_id == 6:
        return _isolation_table("connected", cluster or "msa_id", fe_group)
    if table_id == 8:
        return _isolation_table("has_computer", cluster or "msa_id", fe_group)
    raise TableError(f"unknown table {table_id!r}; valid tables are {list(TABLE_IDS)}")


def _sample(data: AnalysisData, col: ColumnDef) -> pd.DataFrame:
    if col.sample == "panel":
        return data.panel
    df = data.individuals
    if col.sample == "all":
        return df
    complete = np.isfinite(df.loc[:, list(CONTROL_COLUMNS)].to_numpy(dtype=float)).all(axis=1)
    df = df.loc[complete]
    if col.sample == "black":
        return df.loc[df["black"] == 1]
    if col.sample == "nonblack":
        return df.loc[df["black"] == 0]
    return df


def _required(col: ColumnDef) -> list[str]:
    spec = col.spec
    made = {f"{a}×{b}" for a, b in col.interactions}
    names = [spec.outcome, *spec.regressors, *spec.instruments]
    if spec.cluster:
        names.append(spec.cluster)
    if spec.fixed_effect_group:
        names.append(spec.fixed_effect_group)
    for a, b in col.interactions:
        names += [a, b]
    if col.sample in ("black", "nonblack"):
        names.append("black")
    return [n for n in dict.fromkeys(names) if n not in made]


def run_table(
    dataset: AnalysisData,
    table_id: int,
    *,
    cluster: str | None = None,
    cov_type: str | None = None,
    instruments: Sequence[str] | None = None,
    fe_group: str = "msa_id",
) -> TableResult:
    """Fit every column of a table in order.

    ``cov_type`` defaults to heteroskedasticity-robust (HC1) errors for the
    market-level table, which equal CR1 errors with one cluster per market,
    and to cluster-robust (CR1) errors elsewhere. ``instruments`` replaces the
    college-population instrument; naming an endogenous column itself makes
    the IV columns reproduce their OLS counterparts (the column is copied so
    that it can serve as its own instrument).
    """
    instrument = "college_pop"
    extra: dict[str, str] = {}
    if instruments:
        if len(instruments) != 1:
            raise TableError("exactly one instrument is supported for the IV columns")
        instrument = instruments[0]
        if instrument == "local_news":
            extra["local_news_instr"] = "local_news"
            instrument = "local_news_instr"

    result = TableResult(table_id, TITLES.get(table_id, ""))
    for col in table_columns(table_id, cluster, instrument, fe_group):
        df = _sample(dataset, col)
        if extra and col.sample != "panel":
            df = df.assign(**{k: df[v] for k, v in extra.items() if v in df.columns})
        for name in _required(col):
            if name not in df.columns:
                raise TableError(f"table {table_id}: column {name!r} missing from the data")
        if col.interactions:
            df = df.assign(**{f"{a}×{b}": interaction(df, a, b) for a, b in col.interactions})
        if len(df) == 0:
            raise TableError(f"table {table_id} column {col.number}: empty sample")
        ct = cov_type if cov_type is not None else ("hc1" if col.sample == "panel" else None)
        if ct in ("cr0", "cr1") and not col.spec.cluster:
            ct = "hc1"
        result.columns.append(ColumnResult(col, fit(df, col.spec, ct)))
    return result


# ---------------------------------------------------------------------------
# rendering


def _cell(coef: float, se: float, stars: str, digits: int) -> str:
    return f"{coef:.{digits}f} ({se:.{digits}f}){stars}"


def format_grid(table: TableResult, width: int = 24) -> str:
    """Plain-text grid: one row per variable, one column per specification."""
    return grid_from_frame(table.frame(), table.table_id, table.title, width)


_COV_NOTES = {
    "classical": "Standard errors in parentheses.",
    "hc1": "Robust (HC1) standard errors in parentheses.",
    "cr0": "Cluster-robust (CR0) standard errors in parentheses.",
    "cr1": "Cluster-robust (CR1) standard errors in parentheses.",
}


def grid_from_frame(df: pd.DataFrame, table_id: int, title: str | None = None, width: int = 24) -> str:
    """Render the long-format rows of :meth:`TableResult.frame` as a text grid.

    Works equally on a frame read back from ``table<id>.csv``.
    """
    digits = DIGITS.get(table_id, 4)
    title = TITLES.get(table_id, "") if title is None else title
    numbers = list(dict.fromkeys(int(n) for n in df["column"]))
    by_col = {n: df[df["column"] == n] for n in numbers}
    variables = list(dict.fromkeys(df["variable"]))
    variables.sort(key=lambda v: v == CONST)
    label_w = max([len(VARIABLE_LABELS.get(v, v)) for v in variables] + [16]) + 2

    def line(label: str, cells: list[str]) -> str:
        return label.ljust(label_w) + "".join(c.rjust(width) for c in cells)

    def first(n: int, field: str):
        return by_col[n][field].iloc[0]

    out = [f"Table {table_id}: {title}", ""]
    out.append(line("", [f"({n})" for n in numbers]))
    out.append(line("", [str(first(n, "label"))[: width - 2] for n in numbers]))
    out.append(line("", [str(first(n, "estimator")) for n in numbers]))
    for v in variables:
        cells = []
        for n in numbers:
            hit = by_col[n][by_col[n]["variable"] == v]
            if len(hit):
                r = hit.iloc[0]
                stars = "" if pd.isna(r["stars"]) else str(r["stars"])
                cells.append(_cell(float(r["coef"]), float(r["se"]), stars, digits))
            else:
                cells.append("")
        out.append(line(VARIABLE_LABELS.get(v, v), cells))
    if table_id != 4:
        out.append(line("Controls", ["Yes" if first(n, "controls") == "yes" else "No" for n in numbers]))
    out.append(line("Observations", [str(int(first(n, "n_obs"))) for n in numbers]))
    out.append(line("R-squared", [f"{float(first(n, 'r_squared')):.2f}" for n in numbers]))
    clusters = [first(n, "n_clusters") for n in numbers]
    clusters = ["" if pd.isna(c) or c == "" else str(int(c)) for c in clusters]
    if any(clusters):
        out.append(line("Clusters", clusters))
    cov = sorted(set(df["cov_type"]))
    out.append("")
    out.append(" ".join(_COV_NOTES[c] for c in cov) + " * significant at 5% level; ** significant at 1% level.")
    return "\n".join(out) + "\n"
