"""Localness of web sites, local-site market panels and the regressions built on them."""

from .econometrics import (
    RegressionFit,
    RegressionSpec,
    cluster_robust_vcov,
    fit,
    hc1_vcov,
    ols_fit,
    tsls_fit,
    within_transform,
)
from .ingest import (
    GeoTable,
    HouseholdRecord,
    IngestError,
    Market,
    MsaRecord,
    PageVisitRecord,
    RowError,
    map_msa_to_dma,
    parse_demographics,
    parse_geography,
    parse_households,
    parse_individuals,
    parse_visits,
)
from .localness import (
    LocalnessIndexResult,
    LocalSiteAssignment,
    MarketTotals,
    SiteTrafficProfile,
    aggregate_visits,
    classify_local,
    compute_localness,
    hit_threshold,
    localness_index,
    normalized_shares,
    score_sites,
    tabulate_categories,
)
from .panel import MarketPanelRow, build_market_panel, join_individuals
from .synthgen import OutcomeModel, SynthParams, gen_clickstream, gen_individuals, gen_markets
from .tables import TABLE_IDS, AnalysisData, TableResult, run_table

__version__ = "0.1.0"

__all__ = [
    "AnalysisData", "GeoTable", "HouseholdRecord", "IngestError", "LocalSiteAssignment",
    "LocalnessIndexResult", "Market", "MarketPanelRow", "MarketTotals", "MsaRecord",
    "OutcomeModel", "PageVisitRecord", "RegressionFit", "RegressionSpec", "RowError",
    "SiteTrafficProfile", "SynthParams", "TABLE_IDS", "TableResult", "aggregate_visits",
    "build_market_panel", "classify_local", "cluster_robust_vcov", "compute_localness", "fit",
    "gen_clickstream", "gen_individuals", "gen_markets", "hc1_vcov", "hit_threshold",
    "join_individuals", "localness_index", "map_msa_to_dma", "normalized_shares", "ols_fit",
    "parse_demographics", "parse_geography", "parse_households", "parse_individuals",
    "parse_visits", "run_table", "score_sites", "tabulate_categories", "tsls_fit",
    "within_transform",
]
