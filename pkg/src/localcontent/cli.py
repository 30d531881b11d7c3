"""Command-line front end.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 synthetic
recovery outside tolerance.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import pandas as pd

from . import pipeline
from .econometrics import COV_TYPES
from .ingest import IngestError
from .localness import DEFAULT_BASE_HITS, DEFAULT_CUTOFF
from .pipeline import ConfigError
from .synthgen import SynthParams
from .tables import TABLE_IDS, grid_from_frame

EXIT_OK, EXIT_DATA, EXIT_CONFIG, EXIT_RECOVERY = 0, 1, 2, 3


def _cutoff(text: str) -> float:
    v = float(text)
    if not v > 1:
        raise argparse.ArgumentTypeError("cutoff must exceed 1")
    return v


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def parse_tables(text: str | None, default: Sequence[int] = TABLE_IDS) -> tuple[int, ...]:
    if not text:
        return tuple(default)
    valid = ", ".join(str(t) for t in TABLE_IDS)
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part.isdigit() or int(part) not in TABLE_IDS:
            raise ConfigError(f"unknown table id {part!r}; valid ids are {valid}")
        out.append(int(part))
    return tuple(dict.fromkeys(out))


# ---------------------------------------------------------------------------
# subcommands


def cmd_localness(args) -> int:
    run, errors = pipeline.run_localness(
        args.visits, args.dma, args.out, msa_path=args.msa, cutoff=args.cutoff, base=args.base,
        reference_dma=args.reference_dma, include_other_in_totals=not args.exclude_other,
    )
    print(f"sites: {len(run.scores)}, local sites: {len(run.assignments)}, "
          f"markets: {run.n_markets}, row errors: {len(errors)}")
    return EXIT_OK


def cmd_panel(args) -> int:
    counts = pipeline.run_panel(args.local_sites, args.dma, args.msa, args.demographics,
                                args.individuals, args.out)
    print(f"markets: {counts['markets']}, individuals: {counts['individuals']}, "
          f"joined: {counts['joined']}, excluded: {counts['excluded']}, row errors: {counts['errors']}")
    return EXIT_OK


def cmd_regress(args) -> int:
    tables = parse_tables(args.tables)
    data = pipeline.load_analysis(args.panel, args.joined)
    instruments = [args.instrument] if args.instrument else None
    results = pipeline.run_regress(data, tables, args.out, cluster=args.cluster,
                                   cov_type=args.vcov, instruments=instruments)
    for t in tables:
        print(results[t].grid())
    return EXIT_OK


def cmd_simulate(args) -> int:
    tables = parse_tables(args.tables)
    missing = {4, 5, 6} - set(tables)
    if missing:
        raise ConfigError(f"simulate needs tables 4, 5 and 6 to check recovery (missing {sorted(missing)})")
    params = SynthParams(seed=args.seed)
    rep = pipeline.simulate(args.out, params, threads=args.threads, tables=tables)
    print(rep.text(), end="")
    return EXIT_OK if rep.passed else EXIT_RECOVERY


def cmd_report(args) -> int:
    run = Path(args.run)
    if not run.is_dir():
        raise FileNotFoundError(f"run directory not found: {run}")
    table_dir = run / "tables" if (run / "tables").is_dir() else run
    parts = []
    recovery = run / "recovery.txt"
    if recovery.is_file():
        parts.append(recovery.read_text(encoding="utf-8"))
    for t in TABLE_IDS:
        path = table_dir / f"table{t}.csv"
        if path.is_file():
            df = pd.read_csv(path, keep_default_na=False, na_values=[""])
            parts.append(grid_from_frame(df, t))
    if not parts:
        raise FileNotFoundError(f"no table<id>.csv or recovery.txt found under {run}")
    text = "\n".join(parts)
    out = Path(args.out) if args.out else run / "report.txt"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="localcontent",
        description="Localness of web sites, local-site panels and connection regressions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localness", help="score sites and classify local ones")
    p.add_argument("--visits", required=True, help="page-visit CSV or JSON-lines file")
    p.add_argument("--dma", required=True, help="market file (dma_id, population, panel_households)")
    p.add_argument("--msa", help="MSA file with per-market overlap shares")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--cutoff", type=_cutoff, default=DEFAULT_CUTOFF,
                   help="largest index that still counts as local (default %(default)s)")
    p.add_argument("--base", type=_positive, default=DEFAULT_BASE_HITS,
                   help="hit threshold in the reference market (default %(default)s)")
    p.add_argument("--reference-dma", help="reference market for thresholds (default: most populous)")
    p.add_argument("--exclude-other", action="store_true",
                   help="leave uncategorized sites out of market visit totals")
    p.set_defaults(func=cmd_localness)

    p = sub.add_parser("panel", help="build the market panel and join individuals")
    p.add_argument("--local-sites", required=True, help="local_sites.csv from the localness step")
    p.add_argument("--dma", required=True, help="market file")
    p.add_argument("--msa", required=True, help="MSA file with per-market overlap shares")
    p.add_argument("--demographics", required=True, help="market college and black populations")
    p.add_argument("--individuals", required=True, help="survey individuals")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_panel)

    p = sub.add_parser("regress", help="estimate regression tables")
    p.add_argument("--panel", required=True, help="panel.csv from the panel step")
    p.add_argument("--joined", required=True, help="joined.csv from the panel step")
    p.add_argument("--tables", help=f"comma-separated table ids out of {', '.join(map(str, TABLE_IDS))} (default all)")
    p.add_argument("--cluster", help="cluster column for individual-level tables")
    p.add_argument("--vcov", choices=COV_TYPES, help="covariance estimator (default: hc1 market-level, cr1 otherwise)")
    p.add_argument("--instrument", help="instrument for local news (default college_pop)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("simulate", help="synthetic end-to-end run checked against planted values")
    p.add_argument("--seed", type=int, default=SynthParams.seed, help="random seed (default %(default)s)")
    p.add_argument("--threads", type=int, default=1, help="generator threads (output does not depend on it)")
    p.add_argument("--tables", help="comma-separated table ids (default all; 4, 5 and 6 are required)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="render text grids from a run directory")
    p.add_argument("--run", required=True, help="directory holding tables/ or table<id>.csv files")
    p.add_argument("--out", help="report file (default <run>/report.txt)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
