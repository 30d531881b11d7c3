"""End-to-end runs: files in, localness/panel/tables out, and planted-truth checks."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from . import ingest
from .econometrics import CONST
from .ingest import GeoTable, IngestError, RowError
from .localness import (
    DEFAULT_BASE_HITS,
    DEFAULT_CUTOFF,
    LocalSiteAssignment,
    SiteScore,
    aggregate_visits,
    assignments_from_scores,
    localness_frame,
    score_sites,
    tabulate_categories,
)
from .panel import build_market_panel, category_summary, join_individuals, panel_frame, summarize
from .synthgen import (
    SynthParams,
    gen_clickstream,
    gen_individuals,
    gen_markets,
    truth_record,
)
from .tables import TABLE_IDS, AnalysisData, TableResult, run_table

RECOVERY_SE_MULTIPLE = 2.0
MIN_LOCAL_RECALL = 0.95


class ConfigError(ValueError):
    """A run was configured inconsistently with its inputs."""


def write_frame(df: pd.DataFrame, path: Path, index: bool = False) -> None:
    df.to_csv(path, index=index, lineterminator="\n")


# ---------------------------------------------------------------------------
# localness stage


@dataclass
class LocalnessRun:
    scores: list[SiteScore]
    assignments: list[LocalSiteAssignment]
    table2: pd.DataFrame
    table3: pd.DataFrame
    n_markets: int


def localness_stage(
    visits: Iterable[ingest.PageVisitRecord],
    geo: GeoTable,
    cutoff: float = DEFAULT_CUTOFF,
    base: float = DEFAULT_BASE_HITS,
    reference_dma: str | None = None,
    include_other_in_totals: bool = True,
) -> LocalnessRun:
    profiles, totals = aggregate_visits(visits, include_other_in_totals)
    if profiles:
        scores = score_sites(profiles, totals, geo, cutoff, reference_dma, base)
    else:
        scores = []
    assignments = assignments_from_scores(scores)
    table2 = tabulate_categories(assignments, profiles)
    panel = build_market_panel(assignments, geo, {})
    return LocalnessRun(scores, assignments, table2, category_summary(panel), len(geo.markets))


def _check_paths(paths: dict[str, str | os.PathLike | None]) -> None:
    for name, p in paths.items():
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"{name} file not found: {p}")


def load_geography(dma_path, msa_path=None) -> tuple[GeoTable, list[tuple[str, RowError]]]:
    geo, errs = ingest.parse_geography(dma_path, msa_path)
    return geo, [("geography", e) for e in errs]


def run_localness(
    visits_path, dma_path, out_dir, msa_path=None, cutoff=DEFAULT_CUTOFF, base=DEFAULT_BASE_HITS,
    reference_dma=None, include_other_in_totals=True,
) -> tuple[LocalnessRun, list[tuple[str, RowError]]]:
    """Parse visits and geography, then write ``localness.csv``, ``table2.csv``,
    ``table3.csv``, ``local_sites.csv`` and the ``errors.csv`` sidecar."""
    _check_paths({"visits": visits_path, "geography": dma_path, "msa": msa_path})
    geo, errors = load_geography(dma_path, msa_path)
    if reference_dma is not None and reference_dma not in geo.markets:
        raise ConfigError(f"reference market {reference_dma!r} not in geography")
    visits, verrs = ingest.parse_visits(visits_path, geo.markets)
    errors += [(Path(visits_path).name, e) for e in verrs]
    run = localness_stage(visits, geo, cutoff, base, reference_dma, include_other_in_totals)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame(localness_frame(run.scores), out / "localness.csv")
    write_frame(run.table2, out / "table2.csv", index=True)
    t3 = run.table3.copy()
    t3.loc["n_markets"] = ["Number of Markets", run.n_markets, np.nan, np.nan]
    write_frame(t3, out / "table3.csv", index=True)
    ingest.write_csv(out / "local_sites.csv", ("site", "dma_id", "category"),
                     ((a.site, a.dma_id, a.category) for a in run.assignments))
    ingest.write_errors(out / "errors.csv", errors)
    return run, errors


def read_assignments(path) -> list[LocalSiteAssignment]:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    return [LocalSiteAssignment(r.site, r.dma_id, r.category) for r in df.itertuples(index=False)]


# ---------------------------------------------------------------------------
# panel stage


def run_panel(local_sites_path, dma_path, msa_path, demographics_path, individuals_path, out_dir):
    """Write ``panel.csv``, ``joined.csv`` and ``table1.csv``; return counts."""
    _check_paths({"local sites": local_sites_path, "geography": dma_path, "msa": msa_path,
                  "demographics": demographics_path, "individuals": individuals_path})
    geo, errors = load_geography(dma_path, msa_path)
    demo, derrs = ingest.parse_demographics(demographics_path, geo.markets)
    errors += [(Path(demographics_path).name, e) for e in derrs]
    mapping = ingest.map_msa_to_dma(geo)
    people, perrs = ingest.parse_individuals(individuals_path, mapping)
    errors += [(Path(individuals_path).name, e) for e in perrs]
    panel = build_market_panel(read_assignments(local_sites_path), geo, demo)
    joined, excluded = join_individuals(people, panel)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frame(panel_frame(panel), out / "panel.csv")
    write_frame(joined, out / "joined.csv")
    write_frame(summarize(joined, SUMMARY_FIELDS), out / "table1.csv", index=True)
    ingest.write_errors(out / "errors.csv", errors)
    return {"markets": len(panel), "individuals": len(people), "joined": len(joined),
            "excluded": excluded, "errors": len(errors)}


SUMMARY_FIELDS = ("connected", "has_computer", "black", "female") + ingest.EDUCATION_DUMMIES


# ---------------------------------------------------------------------------
# regression stage


def load_analysis(panel_path, joined_path) -> AnalysisData:
    _check_paths({"panel": panel_path, "joined": joined_path})
    ids = {"dma_id": str, "msa_id": str, "person_id": str}
    panel = pd.read_csv(panel_path, dtype={"dma_id": str})
    joined = pd.read_csv(joined_path, dtype=ids, keep_default_na=True)
    return AnalysisData(panel, joined)


def run_regress(
    data: AnalysisData, tables: Sequence[int], out_dir, cluster=None, cov_type=None, instruments=None,
) -> dict[int, TableResult]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for t in tables:
        res = run_table(data, t, cluster=cluster, cov_type=cov_type, instruments=instruments)
        write_frame(res.frame(), out / f"table{t}.csv")
        (out / f"table{t}.txt").write_text(res.grid(), encoding="utf-8")
        results[t] = res
    return results


# ---------------------------------------------------------------------------
# synthetic experiment


@dataclass
class RecoveryRow:
    name: str
    planted: float
    estimate: float
    se: float

    @property
    def z(self) -> float:
        return (self.estimate - self.planted) / self.se if self.se > 0 else float("inf")

    @property
    def within(self) -> bool:
        return abs(self.z) <= RECOVERY_SE_MULTIPLE


@dataclass
class RecoveryReport:
    seed: int
    rows: list[RecoveryRow] = field(default_factory=list)
    planted_local: int = 0
    recovered_local: int = 0
    misattributed_local: int = 0
    neutral_sites: int = 0
    neutral_false_positive: int = 0
    n_individuals: int = 0
    n_excluded: int = 0
    total_visits: int = 0

    @property
    def local_recall(self) -> float:
        return self.recovered_local / self.planted_local if self.planted_local else 1.0

    @property
    def passed(self) -> bool:
        return (all(r.within for r in self.rows)
                and self.local_recall >= MIN_LOCAL_RECALL
                and self.neutral_false_positive == 0)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "parameters": [
                {"name": r.name, "planted": r.planted, "estimate": r.estimate, "se": r.se,
                 "z": r.z, "within_2se": r.within} for r in self.rows
            ],
            "local_sites": {
                "planted": self.planted_local, "recovered": self.recovered_local,
                "misattributed": self.misattributed_local, "recall": self.local_recall,
                "neutral": self.neutral_sites, "neutral_false_positive": self.neutral_false_positive,
            },
            "individuals": {"input": self.n_individuals, "excluded": self.n_excluded},
            "total_visits": self.total_visits,
        }

    def text(self) -> str:
        lines = [f"Synthetic recovery, seed {self.seed}", ""]
        lines.append(f"{'parameter':<24}{'planted':>12}{'recovered':>12}{'se':>11}{'z':>8}  ok")
        for r in self.rows:
            lines.append(f"{r.name:<24}{r.planted:>12.5f}{r.estimate:>12.5f}{r.se:>11.5f}{r.z:>8.2f}  "
                         f"{'yes' if r.within else 'NO'}")
        lines.append("")
        lines.append(f"local sites: {self.recovered_local}/{self.planted_local} recovered "
                     f"({self.local_recall:.1%}), {self.misattributed_local} misattributed; "
                     f"neutral false positives {self.neutral_false_positive}/{self.neutral_sites}")
        lines.append(f"individuals: {self.n_individuals} input, {self.n_excluded} excluded as unmatched")
        lines.append(f"visits: {self.total_visits}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def _estimate(table: TableResult, column: int, variable: str) -> tuple[float, float]:
    f = table.column(column).fit
    return float(f.coefficients[variable]), float(f.std_errors[variable])


def recovery_report(truth: dict, scores: Sequence[SiteScore], tables: dict[int, TableResult],
                    n_individuals: int, n_excluded: int) -> RecoveryReport:
    planted = truth["planted"]
    rep = RecoveryReport(seed=truth["seed"], n_individuals=n_individuals, n_excluded=n_excluded,
                         total_visits=truth.get("total_visits", 0))
    checks = [
        ("table4_slope", 4, 1, "pop"),
        ("table5_beta_pop", 5, 2, "pop"),
        ("table5_gamma_local", 5, 2, "local_news"),
        ("table6_black_x_share", 6, 3, "black×black_share"),
    ]
    for name, t, col, var in checks:
        if t in tables:
            est, se = _estimate(tables[t], col, var)
            rep.rows.append(RecoveryRow(name, planted[name], est, se))

    by_site = {s.result.site: s for s in scores}
    rep.planted_local = len(truth["planted_local_sites"])
    for rec in truth["planted_local_sites"]:
        s = by_site.get(rec["site"])
        if s is not None and s.is_local:
            if s.result.top_dma == rec["dma_id"]:
                rep.recovered_local += 1
            else:
                rep.misattributed_local += 1
    rep.neutral_sites = len(truth["neutral_sites"])
    rep.neutral_false_positive = sum(
        1 for site in truth["neutral_sites"] if site in by_site and by_site[site].is_local
    )
    return rep


@dataclass
class World:
    params: SynthParams
    markets: object
    click: object
    people: object
    truth: dict


def generate_world(params: SynthParams, threads: int = 1) -> World:
    markets = gen_markets(params, threads)
    click = gen_clickstream(markets, params, threads)
    people = gen_individuals(markets, params, threads)
    return World(params, markets, click, people, truth_record(markets, click, people))


def write_world(world: World, data_dir) -> dict[str, Path]:
    d = Path(data_dir)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f for k, f in (
        ("visits", "visits.csv"), ("households", "households.csv"), ("dma", "dma.csv"),
        ("msa", "msa.csv"), ("demographics", "demographics.csv"),
        ("individuals", "individuals.csv"), ("truth", "truth.json"))}
    paths["visits"].write_bytes(ingest.serialize_visits(world.click.visits))
    paths["households"].write_bytes(ingest.serialize_households(world.click.households))
    dma_b, msa_b = ingest.serialize_geography(world.markets.geo)
    paths["dma"].write_bytes(dma_b)
    paths["msa"].write_bytes(msa_b)
    demo = world.markets.demographics
    ingest.write_csv(paths["demographics"], ingest.DEMOGRAPHIC_FIELDS,
                     ((k, ingest._num(demo[k][0]), ingest._num(demo[k][1])) for k in world.markets.dma_ids))
    people = world.people.frame
    ingest.write_csv(paths["individuals"], ingest.INDIVIDUAL_FIELDS, _individual_rows(people))
    paths["truth"].write_text(json.dumps(world.truth, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def _individual_rows(df: pd.DataFrame):
    income = _codes_from_dummies(df, ingest.INCOME_DUMMIES)
    educ = _codes_from_dummies(df, ingest.EDUCATION_DUMMIES)
    cols = [df[c].to_numpy() for c in ("person_id", "msa_id")]
    bins = [df[c].to_numpy(dtype=float).astype(int) for c in ("connected", "has_computer", "black", "female")]
    for i in range(len(df)):
        yield (cols[0][i], cols[1][i], *(b[i] for b in bins),
               "" if np.isnan(income[i]) else int(income[i]),
               "" if np.isnan(educ[i]) else int(educ[i]))


def _codes_from_dummies(df: pd.DataFrame, names: Sequence[str]) -> np.ndarray:
    d = df.loc[:, list(names)].to_numpy(dtype=float)
    codes = (d * np.arange(1, len(names) + 1)).sum(axis=1)
    codes[np.isnan(d).any(axis=1)] = np.nan
    return codes


def analyze_world(world: World, tables: Sequence[int] = (4, 5, 6), cutoff=DEFAULT_CUTOFF,
                  base=DEFAULT_BASE_HITS) -> tuple[RecoveryReport, dict[int, TableResult]]:
    """Run the full estimation pipeline in memory on a generated world."""
    geo = world.markets.geo
    run = localness_stage(world.click.visits, geo, cutoff, base)
    panel = build_market_panel(run.assignments, geo, world.markets.demographics)
    people = world.people.frame.copy()
    mapping = ingest.map_msa_to_dma(geo)
    people["dma_id"] = people["msa_id"].map(mapping).fillna("")
    joined, excluded = join_individuals(people, panel)
    data = AnalysisData(panel_frame(panel), joined)
    results = {t: run_table(data, t) for t in tables}
    rep = recovery_report(world.truth, run.scores, results, len(people), excluded)
    return rep, results


def simulate(out_dir, params: SynthParams | None = None, threads: int = 1,
             tables: Sequence[int] = TABLE_IDS) -> RecoveryReport:
    """Generate a world, write it, run every stage from the written files and
    compare the estimates with the planted values."""
    params = params or SynthParams()
    out = Path(out_dir)
    world = generate_world(params, threads)
    paths = write_world(world, out / "data")
    run, _ = run_localness(paths["visits"], paths["dma"], out / "localness", msa_path=paths["msa"],
                           base=params.base_threshold)
    counts = run_panel(out / "localness" / "local_sites.csv", paths["dma"], paths["msa"],
                       paths["demographics"], paths["individuals"], out / "panel")
    data = load_analysis(out / "panel" / "panel.csv", out / "panel" / "joined.csv")
    results = run_regress(data, tables, out / "tables")
    truth = json.loads(paths["truth"].read_text(encoding="utf-8"))
    rep = recovery_report(truth, run.scores, results, counts["individuals"], counts["excluded"])
    (out / "recovery.json").write_text(json.dumps(rep.to_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "recovery.txt").write_text(rep.text(), encoding="utf-8")
    return rep


def coverage_study(seeds: Iterable[int], base_params: SynthParams | None = None,
                   tables: Sequence[int] = (4, 5, 6)) -> pd.DataFrame:
    """One row per (seed, parameter): estimate, SE and whether the planted
    value lies within two standard errors."""
    from dataclasses import replace

    base_params = base_params or SynthParams()
    rows = []
    for seed in seeds:
        world = generate_world(replace(base_params, seed=seed))
        rep, _ = analyze_world(world, tables)
        for r in rep.rows:
            rows.append({"seed": seed, "parameter": r.name, "planted": r.planted,
                         "estimate": r.estimate, "se": r.se, "within": r.within})
    return pd.DataFrame(rows)
