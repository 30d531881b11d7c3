"""Market-level panel rows and the individual-level regression dataset."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .ingest import CATEGORIES, CATEGORY_LABELS, NEWS, GeoTable, id_sort_key
from .localness import LocalSiteAssignment

PERSONS_PER_UNIT = 1e6

# Market columns carried onto each individual by join_individuals.
MARKET_COLUMNS = (
    "pop", "local_news", "local_total", "college_pop",
    "black_share", "black_pop", "nonblack_pop",
)

LOCAL_CATEGORIES = tuple(c for c in CATEGORIES if c != "other")


@dataclass
class MarketPanelRow:
    """One market; populations are in millions."""

    dma_id: str
    population: float
    college_pop: float
    black_pop: float
    nonblack_pop: float
    black_share: float
    local_sites_by_category: dict[str, int] = field(default_factory=dict)

    @property
    def local_sites_total(self) -> int:
        return sum(self.local_sites_by_category.values())

    @property
    def local_news(self) -> int:
        return self.local_sites_by_category.get(NEWS, 0)


def build_market_panel(
    assignments: Iterable[LocalSiteAssignment],
    geo: GeoTable,
    demographics: Mapping[str, tuple[float, float]] | Iterable[tuple[str, float, float]],
) -> list[MarketPanelRow]:
    """One row per market in ``geo``, ordered by market id.

    ``demographics`` maps ``dma_id -> (college_pop, black_pop)`` in persons
    (or is an iterable of ``(dma_id, college_pop, black_pop)``); markets it
    does not cover get zeros. Non-black population is the remainder of the
    market population, so the two always add up.
    """
    if not isinstance(demographics, Mapping):
        demographics = {d: (c, b) for d, c, b in demographics}
    counts: dict[str, dict[str, int]] = {d: {c: 0 for c in LOCAL_CATEGORIES} for d in geo.markets}
    for a in assignments:
        if a.dma_id not in counts:
            raise ValueError(f"assignment of {a.site!r} references unknown market {a.dma_id!r}")
        by_cat = counts[a.dma_id]
        by_cat[a.category] = by_cat.get(a.category, 0) + 1

    rows = []
    for dma in geo.dma_ids():
        pop = geo.markets[dma].population
        college, black = demographics.get(dma, (0.0, 0.0))
        if black > pop:
            raise ValueError(f"market {dma!r}: black population exceeds total population")
        rows.append(
            MarketPanelRow(
                dma_id=dma,
                population=pop / PERSONS_PER_UNIT,
                college_pop=college / PERSONS_PER_UNIT,
                black_pop=black / PERSONS_PER_UNIT,
                nonblack_pop=(pop - black) / PERSONS_PER_UNIT,
                black_share=black / pop,
                local_sites_by_category=counts[dma],
            )
        )
    return rows


def panel_frame(panel: Iterable[MarketPanelRow]) -> pd.DataFrame:
    """Rows of ``panel.csv``: one per market, one ``local_<category>`` column each."""
    records = []
    for r in panel:
        rec = {
            "dma_id": r.dma_id,
            "pop": r.population,
            "college_pop": r.college_pop,
            "black_pop": r.black_pop,
            "nonblack_pop": r.nonblack_pop,
            "black_share": r.black_share,
            "local_total": r.local_sites_total,
            "local_news": r.local_news,
        }
        for c in LOCAL_CATEGORIES:
            rec[f"local_{c}"] = r.local_sites_by_category.get(c, 0)
        records.append(rec)
    cols = ["dma_id", "pop", "college_pop", "black_pop", "nonblack_pop", "black_share",
            "local_total", "local_news"] + [f"local_{c}" for c in LOCAL_CATEGORIES]
    return pd.DataFrame.from_records(records, columns=cols)


def panel_from_frame(df: pd.DataFrame) -> list[MarketPanelRow]:
    rows = []
    for rec in df.to_dict("records"):
        rows.append(
            MarketPanelRow(
                dma_id=str(rec["dma_id"]),
                population=float(rec["pop"]),
                college_pop=float(rec["college_pop"]),
                black_pop=float(rec["black_pop"]),
                nonblack_pop=float(rec["nonblack_pop"]),
                black_share=float(rec["black_share"]),
                local_sites_by_category={c: int(rec.get(f"local_{c}", 0)) for c in LOCAL_CATEGORIES},
            )
        )
    return rows


def category_summary(panel: Iterable[MarketPanelRow]) -> pd.DataFrame:
    """Mean, minimum and maximum local-site counts across markets, by category."""
    df = panel_frame(panel)
    cols = ["local_total"] + [f"local_{c}" for c in LOCAL_CATEGORIES]
    labels = ["Total Local Sites"] + [f"Local {CATEGORY_LABELS[c]} Sites" for c in LOCAL_CATEGORIES]
    out = pd.DataFrame(
        {
            "label": labels,
            "mean": [df[c].mean() if len(df) else np.nan for c in cols],
            "min": [df[c].min() if len(df) else np.nan for c in cols],
            "max": [df[c].max() if len(df) else np.nan for c in cols],
        },
        index=pd.Index(["total"] + list(LOCAL_CATEGORIES), name="category"),
    )
    out.attrs["n_markets"] = len(df)
    return out


def join_individuals(individuals: pd.DataFrame, panel: Iterable[MarketPanelRow] | pd.DataFrame) -> tuple[pd.DataFrame, int]:
    """Attach each person's market fields; return ``(joined, n_excluded)``.

    People whose ``dma_id`` is empty or not in the panel are dropped and
    counted. Existing market columns are replaced, so joining twice is the
    same as joining once.
    """
    pf = panel if isinstance(panel, pd.DataFrame) else panel_frame(panel)
    market = pf.loc[:, ["dma_id", *MARKET_COLUMNS]].copy()
    market["dma_id"] = market["dma_id"].astype(str)
    base = individuals.drop(columns=[c for c in MARKET_COLUMNS if c in individuals.columns])
    keys = base["dma_id"].fillna("").astype(str)
    known = keys.isin(set(market["dma_id"]))
    kept = base.loc[known.to_numpy()].copy()
    kept["dma_id"] = keys[known].to_numpy()
    joined = kept.merge(market, on="dma_id", how="left", sort=False, validate="many_to_one")
    joined.index = pd.RangeIndex(len(joined))
    return joined, int((~known).sum())


BINARY_FIELDS = ("connected", "has_computer", "black", "female")


def summarize(individuals: pd.DataFrame, fields: Iterable[str] = BINARY_FIELDS) -> pd.DataFrame:
    """Share of each 0/1 field, overall and among connected persons.

    Missing values are left out of the respective share.
    """
    fields = [f for f in fields if f in individuals.columns]
    connected = individuals["connected"] == 1
    rows = []
    for f in fields:
        col = individuals[f]
        rows.append((f, col.mean(), col[connected].mean()))
    out = pd.DataFrame(rows, columns=["field", "all", "connected"]).set_index("field")
    out.loc["n_obs"] = [len(individuals), int(connected.sum())]
    return out


def sorted_dmas(ids: Iterable[str]) -> list[str]:
    return sorted(ids, key=id_sort_key)
