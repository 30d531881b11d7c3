"""Site localness: population-normalized market shares and their inverse HHI.

A site's raw hits from market ``j`` are divided by that market's total panel
visits before shares are formed, so a site that is equally popular per
visitor everywhere scores the number of markets, and a site whose audience
sits in a single market scores 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .ingest import CATEGORIES, CATEGORY_LABELS, GeoTable, PageVisitRecord, id_sort_key

DEFAULT_CUTOFF = 2.0
DEFAULT_BASE_HITS = 100.0


@dataclass
class SiteTrafficProfile:
    site: str
    category: str
    hits_by_dma: dict[str, int] = field(default_factory=dict)

    @property
    def total_hits(self) -> int:
        return sum(self.hits_by_dma.values())


@dataclass
class MarketTotals:
    visits_by_dma: dict[str, int] = field(default_factory=dict)


@dataclass(frozen=True)
class LocalnessIndexResult:
    site: str
    category: str
    normalized_shares: Mapping[str, float]
    index: float
    top_dma: str
    top_dma_hits: int


@dataclass(frozen=True)
class LocalSiteAssignment:
    site: str
    dma_id: str
    category: str


@dataclass(frozen=True)
class SiteScore:
    """Index result plus the classification decision for one site."""

    result: LocalnessIndexResult
    threshold: float
    is_local: bool
    eligible: bool = True


def aggregate_visits(
    records: Iterable[PageVisitRecord], include_other_in_totals: bool = True
) -> tuple[dict[str, SiteTrafficProfile], MarketTotals]:
    """Collapse visit rows into per-site profiles and per-market totals.

    A site keeps the category of its first row. With
    ``include_other_in_totals=False`` visits to "other" sites are left out
    of the market totals as well as the profiles.
    """
    profiles: dict[str, SiteTrafficProfile] = {}
    totals: dict[str, int] = {}
    for r in records:
        if r.category == "other" and not include_other_in_totals:
            continue
        totals[r.dma_id] = totals.get(r.dma_id, 0) + r.hits
        prof = profiles.get(r.site)
        if prof is None:
            prof = profiles[r.site] = SiteTrafficProfile(r.site, r.category)
        prof.hits_by_dma[r.dma_id] = prof.hits_by_dma.get(r.dma_id, 0) + r.hits
    return profiles, MarketTotals(totals)


def normalized_shares(profile: SiteTrafficProfile, totals: MarketTotals) -> dict[str, float]:
    """Each market's per-visit share of the site, renormalized to sum to one.

    Markets where the site has no hits are omitted.
    """
    ratios = {}
    for dma, hits in profile.hits_by_dma.items():
        if hits < 0:
            raise ValueError(f"{profile.site}: negative hits in market {dma!r}")
        if hits == 0:
            continue
        total = totals.visits_by_dma.get(dma, 0)
        if total <= 0:
            raise ValueError(
                f"{profile.site}: market {dma!r} has hits but a zero market total"
            )
        ratios[dma] = hits / total
    if not ratios:
        raise ValueError(f"{profile.site}: profile has no positive hits")
    denom = math.fsum(ratios.values())
    return {dma: r / denom for dma, r in ratios.items()}


def localness_index(shares: Mapping[str, float]) -> float:
    """Inverse Herfindahl index of normalized shares: ``1 / sum(s**2)``."""
    if not shares:
        raise ValueError("empty share map")
    values = list(shares.values())
    if any(v < 0 for v in values):
        raise ValueError("shares must be non-negative")
    hhi = math.fsum(v * v for v in values)
    if hhi <= 0:
        raise ValueError("shares are all zero")
    return 1.0 / hhi


def compute_localness(profile: SiteTrafficProfile, totals: MarketTotals) -> LocalnessIndexResult:
    shares = normalized_shares(profile, totals)
    index = localness_index(shares)
    top = min(
        shares,
        key=lambda d: (-shares[d], -profile.hits_by_dma[d], id_sort_key(d)),
    )
    return LocalnessIndexResult(
        site=profile.site,
        category=profile.category,
        normalized_shares=shares,
        index=index,
        top_dma=top,
        top_dma_hits=profile.hits_by_dma[top],
    )


def hit_threshold(
    dma_id: str, geo: GeoTable, reference_dma: str, base: float = DEFAULT_BASE_HITS
) -> float:
    """Minimum raw hits a site needs from ``dma_id`` to count as local there.

    The base count applies to the reference market and scales with each
    market's sampling frequency (panel households per resident). A market
    with no panel households returns ``inf``.
    """
    ref = geo.markets[reference_dma]
    if ref.panel_households <= 0:
        raise ValueError(f"reference market {reference_dma!r} has no panel households")
    market = geo.markets[dma_id]
    if market.panel_households == 0:
        return math.inf
    if dma_id == reference_dma:
        return float(base)
    return base * (market.sampling_frequency / ref.sampling_frequency)


def score_sites(
    profiles: Mapping[str, SiteTrafficProfile],
    totals: MarketTotals,
    geo: GeoTable,
    cutoff: float = DEFAULT_CUTOFF,
    reference_dma: str | None = None,
    base: float = DEFAULT_BASE_HITS,
    exclude_categories: Iterable[str] = ("other",),
) -> list[SiteScore]:
    """Index and classify every site, in site-name order.

    Sites in ``exclude_categories`` are scored but never marked local.
    """
    if reference_dma is None:
        reference_dma = geo.largest_market()
    excluded = set(exclude_categories)
    thresholds: dict[str, float] = {}
    scores = []
    for site in sorted(profiles):
        prof = profiles[site]
        res = compute_localness(prof, totals)
        if res.top_dma not in geo.markets:
            raise ValueError(f"{site}: market {res.top_dma!r} missing from geography")
        thr = thresholds.get(res.top_dma)
        if thr is None:
            thr = thresholds[res.top_dma] = hit_threshold(res.top_dma, geo, reference_dma, base)
        eligible = prof.category not in excluded
        local = eligible and res.index <= cutoff and res.top_dma_hits >= thr
        scores.append(SiteScore(res, thr, local, eligible))
    return scores


def classify_local(
    profiles: Mapping[str, SiteTrafficProfile],
    totals: MarketTotals,
    geo: GeoTable,
    cutoff: float = DEFAULT_CUTOFF,
    reference_dma: str | None = None,
    base: float = DEFAULT_BASE_HITS,
    exclude_categories: Iterable[str] = ("other",),
) -> list[LocalSiteAssignment]:
    """Local sites attributed to the market contributing their largest share.

    A site is local when its index is at most ``cutoff`` and its raw hits in
    that top market reach :func:`hit_threshold`.
    """
    return assignments_from_scores(
        score_sites(profiles, totals, geo, cutoff, reference_dma, base, exclude_categories)
    )


def assignments_from_scores(scores: Iterable[SiteScore]) -> list[LocalSiteAssignment]:
    return [
        LocalSiteAssignment(s.result.site, s.result.top_dma, s.result.category)
        for s in scores
        if s.is_local
    ]


TABLE2_COLUMNS = (
    "hits", "pct_hits", "sites", "pct_sites",
    "local_hits", "pct_local_hits", "local_pct_of_cat_hits",
    "local_sites", "pct_local_sites", "local_pct_of_cat_sites",
)


def _pct(num: np.ndarray, den) -> np.ndarray:
    num = np.asarray(num, dtype=float)
    den = np.broadcast_to(np.asarray(den, dtype=float), num.shape)
    out = np.full(num.shape, np.nan)
    ok = den > 0
    out[ok] = 100.0 * num[ok] / den[ok]
    return out


def tabulate_categories(
    assignments: Iterable[LocalSiteAssignment],
    profiles: Mapping[str, SiteTrafficProfile],
    include_other: bool = False,
) -> pd.DataFrame:
    """Hits and sites by category, overall and for local sites.

    Rows follow the published category order and end with a ``total`` row;
    percentage columns are in percent.
    """
    cats = [c for c in CATEGORIES if include_other or c != "other"]
    idx = {c: i for i, c in enumerate(cats)}
    hits = np.zeros(len(cats))
    sites = np.zeros(len(cats))
    local_hits = np.zeros(len(cats))
    local_sites = np.zeros(len(cats))
    for prof in profiles.values():
        i = idx.get(prof.category)
        if i is None:
            continue
        hits[i] += prof.total_hits
        sites[i] += 1
    for a in assignments:
        i = idx.get(a.category)
        if i is None:
            continue
        local_hits[i] += profiles[a.site].total_hits
        local_sites[i] += 1

    def with_total(v):
        return np.append(v, v.sum())

    hits, sites, local_hits, local_sites = map(with_total, (hits, sites, local_hits, local_sites))
    table = pd.DataFrame(
        {
            "hits": hits,
            "pct_hits": _pct(hits, hits[-1]),
            "sites": sites,
            "pct_sites": _pct(sites, sites[-1]),
            "local_hits": local_hits,
            "pct_local_hits": _pct(local_hits, local_hits[-1]),
            "local_pct_of_cat_hits": _pct(local_hits, hits),
            "local_sites": local_sites,
            "pct_local_sites": _pct(local_sites, local_sites[-1]),
            "local_pct_of_cat_sites": _pct(local_sites, sites),
        },
        index=pd.Index(cats + ["total"], name="category"),
    )
    for col in ("hits", "sites", "local_hits", "local_sites"):
        table[col] = table[col].astype(np.int64)
    table.insert(0, "label", [CATEGORY_LABELS.get(c, "Total") for c in cats] + ["Total"])
    return table


def localness_frame(scores: Iterable[SiteScore]) -> pd.DataFrame:
    """Rows of ``localness.csv``."""
    rows = [
        (s.result.site, s.result.category, s.result.index, s.result.top_dma,
         s.result.top_dma_hits, int(s.is_local))
        for s in scores
    ]
    return pd.DataFrame(rows, columns=["site", "category", "index", "top_dma", "top_dma_hits", "is_local"])
