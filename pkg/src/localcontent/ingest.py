"""Parsing of clickstream, household, geography and survey files.

Every parser is total: it returns ``(records, errors)`` and only raises
:class:`IngestError` when the stream itself cannot be read or decoded.
Row problems are collected as :class:`RowError` values carrying the 1-based
line number (the CSV header is line 1).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, NamedTuple, Union

import numpy as np
import pandas as pd

# Table 2 rows in their published order, then the excluded residual category.
CATEGORIES: tuple[str, ...] = (
    "web_service_provider",
    "commercial_online_network",
    "search_engine",
    "government",
    "education",
    "adult",
    "marketing_corporate",
    "news_information_entertainment",
    "shopping",
    "travel_tourism",
    "isp",
    "directory",
    "other",
)

CATEGORY_LABELS: dict[str, str] = {
    "web_service_provider": "Web Service Provider",
    "commercial_online_network": "Commercial Online Network",
    "search_engine": "Search Engine",
    "government": "Government",
    "education": "Education",
    "adult": "Adult",
    "marketing_corporate": "Marketing/Corporate",
    "news_information_entertainment": "News/Information/Entertainment",
    "shopping": "Shopping",
    "travel_tourism": "Travel/Tourism",
    "isp": "ISP",
    "directory": "Directory",
    "other": "Other",
}

NEWS = "news_information_entertainment"

VISIT_FIELDS = ("household_id", "dma_id", "site", "category", "hits")
HOUSEHOLD_FIELDS = ("household_id", "dma_id", "income", "education", "race")
DMA_FIELDS = ("dma_id", "population", "panel_households")
MSA_FIELDS = ("msa_id", "dma_id", "overlap_share", "msa_population")
DEMOGRAPHIC_FIELDS = ("dma_id", "college_pop", "black_pop")
INDIVIDUAL_FIELDS = (
    "person_id", "msa_id", "connected", "has_computer", "black", "female",
    "income", "education",
)

INCOME_LEVELS = 5
EDUCATION_LEVELS = 5
INCOME_DUMMIES = tuple(f"income_{k}" for k in range(1, INCOME_LEVELS))
EDUCATION_DUMMIES = tuple(f"educ_{k}" for k in range(1, EDUCATION_LEVELS))
CONTROL_COLUMNS = ("female",) + INCOME_DUMMIES + EDUCATION_DUMMIES

StreamLike = Union[bytes, str, "os.PathLike[str]", IO[bytes], IO[str]]


class IngestError(Exception):
    """The input stream could not be read at all."""


@dataclass(frozen=True)
class RowError:
    line: int
    field: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.field}: {self.message}"


class ParseResult(NamedTuple):
    records: list
    errors: list[RowError]


def id_sort_key(value: str) -> tuple:
    """Order identifiers numerically when they are all digits, else lexically."""
    s = str(value)
    return (0, int(s), s) if s.isdigit() else (1, 0, s)


@dataclass(frozen=True)
class PageVisitRecord:
    household_id: str
    dma_id: str
    site: str
    category: str
    hits: int = 1


@dataclass(frozen=True)
class HouseholdRecord:
    household_id: str
    dma_id: str
    income_bracket: int
    education: int
    race: str | None = None


@dataclass(frozen=True)
class Market:
    dma_id: str
    population: float
    panel_households: int

    @property
    def sampling_frequency(self) -> float:
        return self.panel_households / self.population


@dataclass
class MsaRecord:
    msa_id: str
    population: float
    overlaps: dict[str, float] = field(default_factory=dict)


@dataclass
class GeoTable:
    markets: dict[str, Market] = field(default_factory=dict)
    msas: dict[str, MsaRecord] = field(default_factory=dict)

    def dma_ids(self) -> list[str]:
        return sorted(self.markets, key=id_sort_key)

    def largest_market(self) -> str:
        """DMA with the largest population (the default threshold reference)."""
        ids = self.dma_ids()
        if not ids:
            raise ValueError("geography has no markets")
        return min(ids, key=lambda d: (-self.markets[d].population, id_sort_key(d)))


# ---------------------------------------------------------------------------
# stream helpers


def read_text(stream: StreamLike) -> str:
    """Return the full UTF-8 text of ``stream`` or raise :class:`IngestError`."""
    try:
        if isinstance(stream, bytes):
            data = stream
        elif isinstance(stream, (str, os.PathLike)):
            with open(stream, "rb") as fh:
                data = fh.read()
        else:
            data = stream.read()
    except OSError as exc:
        raise IngestError(f"cannot read input: {exc}") from exc
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise IngestError(f"input is not valid UTF-8: {exc}") from exc


def _iter_rows(text: str) -> Iterator[tuple[int, dict | None, str | None]]:
    """Yield ``(line_number, row, problem)`` for CSV or JSON-lines input."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield lineno, None, f"invalid JSON: {exc.msg}"
                continue
            if not isinstance(obj, dict):
                yield lineno, None, "JSON line is not an object"
                continue
            yield lineno, {k: ("" if v is None else str(v)) for k, v in obj.items()}, None
        return

    reader = csv.reader(io.StringIO(text, newline=""))
    header = None
    for row in reader:
        lineno = reader.line_num
        if header is None:
            if not row:
                continue
            header = [h.strip() for h in row]
            continue
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            yield lineno, None, f"expected {len(header)} fields, found {len(row)}"
            continue
        yield lineno, dict(zip(header, (c.strip() for c in row))), None


def _require(row: dict, name: str) -> str:
    value = row.get(name, "")
    if value == "":
        raise _FieldError(name, "missing value")
    return value


class _FieldError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field
        self.message = message


def _to_int(row: dict, name: str, minimum: int | None = None) -> int:
    raw = _require(row, name)
    try:
        value = int(raw)
    except ValueError:
        try:
            f = float(raw)
        except ValueError:
            raise _FieldError(name, f"not an integer: {raw!r}") from None
        if not f.is_integer():
            raise _FieldError(name, f"not an integer: {raw!r}") from None
        value = int(f)
    if minimum is not None and value < minimum:
        raise _FieldError(name, f"must be >= {minimum}, got {value}")
    return value


def _to_float(row: dict, name: str) -> float:
    raw = _require(row, name)
    try:
        value = float(raw)
    except ValueError:
        raise _FieldError(name, f"not a number: {raw!r}") from None
    if not np.isfinite(value):
        raise _FieldError(name, f"not finite: {raw!r}")
    return value


def normalize_site(host: str) -> str:
    """Lowercase and strip one trailing dot; nothing else (``www.`` is kept)."""
    host = host.strip().lower()
    if host.endswith("."):
        host = host[:-1]
    return host


def _binary(row: dict, name: str) -> int:
    value = _to_int(row, name)
    if value not in (0, 1):
        raise _FieldError(name, f"must be 0 or 1, got {value}")
    return value


# ---------------------------------------------------------------------------
# visits and households


def parse_visits(stream: StreamLike, known_dmas: Iterable[str] | None = None) -> ParseResult:
    """Parse page-visit rows into :class:`PageVisitRecord` values.

    Rows without a ``hits`` field are raw visits (``hits=1``); rows with one
    are pre-aggregated counts, for which ``household_id`` may be empty.
    ``known_dmas``, when given, rejects rows whose market is not in it.
    """
    text = read_text(stream)
    known = None if known_dmas is None else {str(d) for d in known_dmas}
    categories = set(CATEGORIES)
    records: list[PageVisitRecord] = []
    errors: list[RowError] = []
    for lineno, row, problem in _iter_rows(text):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            aggregated = row.get("hits", "") != ""
            household = row.get("household_id", "")
            if not aggregated and household == "":
                raise _FieldError("household_id", "missing value")
            dma = _require(row, "dma_id")
            if known is not None and dma not in known:
                raise _FieldError("dma_id", f"unknown market {dma!r}")
            site = normalize_site(_require(row, "site"))
            if not site or any(c.isspace() for c in site):
                raise _FieldError("site", f"invalid hostname {row['site']!r}")
            category = _require(row, "category").strip().lower()
            if category not in categories:
                raise _FieldError("category", f"unknown category {category!r}")
            hits = _to_int(row, "hits", minimum=0) if aggregated else 1
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        records.append(PageVisitRecord(household, dma, site, category, hits))
    return ParseResult(records, errors)


def serialize_visits(records: Iterable[PageVisitRecord]) -> bytes:
    """Canonical CSV form of visit records; always carries the hits column."""
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(VISIT_FIELDS)
    for r in records:
        writer.writerow((r.household_id, r.dma_id, r.site, r.category, r.hits))
    return buf.getvalue().encode("utf-8")


def parse_households(stream: StreamLike, known_dmas: Iterable[str] | None = None) -> ParseResult:
    text = read_text(stream)
    known = None if known_dmas is None else {str(d) for d in known_dmas}
    records: list[HouseholdRecord] = []
    errors: list[RowError] = []
    first_seen: dict[str, int] = {}
    for lineno, row, problem in _iter_rows(text):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            hid = _require(row, "household_id")
            if hid in first_seen:
                raise _FieldError(
                    "household_id",
                    f"duplicate id {hid!r} (lines {first_seen[hid]} and {lineno})",
                )
            dma = _require(row, "dma_id")
            if known is not None and dma not in known:
                raise _FieldError("dma_id", f"unknown market {dma!r}")
            income = _to_int(row, "income", minimum=0)
            education = _to_int(row, "education", minimum=0)
            race = row.get("race", "") or None
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        first_seen[hid] = lineno
        records.append(HouseholdRecord(hid, dma, income, education, race))
    return ParseResult(records, errors)


def serialize_households(records: Iterable[HouseholdRecord]) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HOUSEHOLD_FIELDS)
    for r in records:
        writer.writerow((r.household_id, r.dma_id, r.income_bracket, r.education, r.race or ""))
    return buf.getvalue().encode("utf-8")


# ---------------------------------------------------------------------------
# geography


def parse_geography(dma_stream: StreamLike, msa_stream: StreamLike | None = None) -> tuple[GeoTable, list[RowError]]:
    """Build a :class:`GeoTable` from the market file and optional MSA file."""
    geo = GeoTable()
    errors: list[RowError] = []
    for lineno, row, problem in _iter_rows(read_text(dma_stream)):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            dma = _require(row, "dma_id")
            if dma in geo.markets:
                raise _FieldError("dma_id", f"duplicate market {dma!r}")
            pop = _to_float(row, "population")
            if pop <= 0:
                raise _FieldError("population", f"must be positive, got {pop}")
            panel = _to_int(row, "panel_households", minimum=0)
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        geo.markets[dma] = Market(dma, pop, panel)

    if msa_stream is None:
        return geo, errors

    for lineno, row, problem in _iter_rows(read_text(msa_stream)):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            msa = _require(row, "msa_id")
            dma = _require(row, "dma_id")
            if dma not in geo.markets:
                raise _FieldError("dma_id", f"unknown market {dma!r}")
            share = _to_float(row, "overlap_share")
            if not 0.0 <= share <= 1.0:
                raise _FieldError("overlap_share", f"must lie in [0, 1], got {share}")
            pop = _to_float(row, "msa_population")
            if pop <= 0:
                raise _FieldError("msa_population", f"must be positive, got {pop}")
            rec = geo.msas.get(msa)
            if rec is not None:
                if rec.population != pop:
                    raise _FieldError("msa_population", f"conflicts with earlier value {rec.population}")
                if dma in rec.overlaps:
                    raise _FieldError("dma_id", f"duplicate candidate {dma!r} for MSA {msa!r}")
                if sum(rec.overlaps.values()) + share > 1.0 + 1e-9:
                    raise _FieldError("overlap_share", f"shares for MSA {msa!r} exceed 1")
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        if rec is None:
            rec = geo.msas[msa] = MsaRecord(msa, pop)
        rec.overlaps[dma] = share
    return geo, errors


def map_msa_to_dma(geo: GeoTable) -> dict[str, str]:
    """Allocate each MSA to the candidate DMA holding its largest population share.

    Exact ties go to the smaller DMA id. Raises ``ValueError`` naming any MSA
    without a candidate of positive share.
    """
    mapping: dict[str, str] = {}
    for msa_id in sorted(geo.msas, key=id_sort_key):
        candidates = [(d, s) for d, s in geo.msas[msa_id].overlaps.items() if s > 0]
        if not candidates:
            raise ValueError(f"MSA {msa_id!r} has no candidate DMA with positive overlap")
        best = min(candidates, key=lambda ds: (-ds[1], id_sort_key(ds[0])))
        mapping[msa_id] = best[0]
    return mapping


def serialize_geography(geo: GeoTable) -> tuple[bytes, bytes]:
    """Return the ``(dma_file, msa_file)`` CSV bytes for a geography table."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DMA_FIELDS)
    for d in geo.dma_ids():
        m = geo.markets[d]
        w.writerow((d, _num(m.population), m.panel_households))
    dma_bytes = buf.getvalue().encode("utf-8")

    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MSA_FIELDS)
    for msa_id in sorted(geo.msas, key=id_sort_key):
        rec = geo.msas[msa_id]
        for d in sorted(rec.overlaps, key=id_sort_key):
            w.writerow((msa_id, d, _num(rec.overlaps[d]), _num(rec.population)))
    return dma_bytes, buf.getvalue().encode("utf-8")


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


# ---------------------------------------------------------------------------
# market demographics and survey individuals


def parse_demographics(stream: StreamLike, known_dmas: Iterable[str] | None = None) -> ParseResult:
    """Per-market college-educated and black populations, in persons.

    Records are ``(dma_id, college_pop, black_pop)`` tuples.
    """
    known = None if known_dmas is None else {str(d) for d in known_dmas}
    records: list[tuple[str, float, float]] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for lineno, row, problem in _iter_rows(read_text(stream)):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            dma = _require(row, "dma_id")
            if known is not None and dma not in known:
                raise _FieldError("dma_id", f"unknown market {dma!r}")
            if dma in seen:
                raise _FieldError("dma_id", f"duplicate market {dma!r}")
            college = _to_float(row, "college_pop")
            black = _to_float(row, "black_pop")
            if college < 0 or black < 0:
                raise _FieldError("college_pop" if college < 0 else "black_pop", "must be >= 0")
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        seen.add(dma)
        records.append((dma, college, black))
    return ParseResult(records, errors)


def expand_dummies(codes: np.ndarray, prefix: str, levels: int) -> dict[str, np.ndarray]:
    """One 0/1 column per level above the base level 0; missing codes give NaN."""
    codes = np.asarray(codes, dtype=float)
    missing = np.isnan(codes)
    out = {}
    for k in range(1, levels):
        col = (codes == k).astype(float)
        col[missing] = np.nan
        out[f"{prefix}_{k}"] = col
    return out


def parse_individuals(stream: StreamLike, msa_to_dma: dict[str, str] | None = None) -> ParseResult:
    """Parse survey individuals into a regression-ready DataFrame.

    Income and education codes are expanded into explicit dummy columns
    (``income_1..4``, ``educ_1..4``); an empty code leaves its dummies NaN so
    that controlled specifications can drop the row. ``dma_id`` comes from a
    ``dma_id`` column if present, otherwise from ``msa_to_dma``; unmatched
    MSAs get an empty ``dma_id`` and are excluded later by the panel join.
    """
    text = read_text(stream)
    cols: dict[str, list] = {k: [] for k in (
        "person_id", "msa_id", "dma_id", "connected", "has_computer", "black",
        "female", "income", "education")}
    errors: list[RowError] = []
    seen: dict[str, int] = {}
    for lineno, row, problem in _iter_rows(text):
        if row is None:
            errors.append(RowError(lineno, "*", problem))
            continue
        try:
            pid = _require(row, "person_id")
            if pid in seen:
                raise _FieldError("person_id", f"duplicate id {pid!r} (lines {seen[pid]} and {lineno})")
            msa = row.get("msa_id", "")
            dma = row.get("dma_id", "")
            if not dma:
                if not msa:
                    raise _FieldError("msa_id", "missing value")
                dma = (msa_to_dma or {}).get(msa, "")
            values = [_binary(row, k) for k in ("connected", "has_computer", "black", "female")]
            income = _to_int(row, "income", minimum=0) if row.get("income", "") != "" else np.nan
            educ = _to_int(row, "education", minimum=0) if row.get("education", "") != "" else np.nan
            if income == income and income >= INCOME_LEVELS:
                raise _FieldError("income", f"code must be < {INCOME_LEVELS}")
            if educ == educ and educ >= EDUCATION_LEVELS:
                raise _FieldError("education", f"code must be < {EDUCATION_LEVELS}")
        except _FieldError as exc:
            errors.append(RowError(lineno, exc.field, exc.message))
            continue
        seen[pid] = lineno
        cols["person_id"].append(pid)
        cols["msa_id"].append(msa)
        cols["dma_id"].append(dma)
        for k, v in zip(("connected", "has_computer", "black", "female"), values):
            cols[k].append(v)
        cols["income"].append(income)
        cols["education"].append(educ)
    return ParseResult(individuals_frame(cols), errors)


def individuals_frame(cols: dict) -> pd.DataFrame:
    """Assemble the individual DataFrame, expanding income/education dummies."""
    df = pd.DataFrame({
        "person_id": pd.Series(cols["person_id"], dtype=object),
        "msa_id": pd.Series(cols["msa_id"], dtype=object),
        "dma_id": pd.Series(cols["dma_id"], dtype=object),
        **{k: np.asarray(cols[k], dtype=float) for k in ("connected", "has_computer", "black", "female")},
    })
    df = df.assign(
        **expand_dummies(np.asarray(cols["income"], dtype=float), "income", INCOME_LEVELS),
        **expand_dummies(np.asarray(cols["education"], dtype=float), "educ", EDUCATION_LEVELS),
    )
    return df


def write_csv(path: str | os.PathLike, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        w.writerows(rows)


def write_errors(path: str | os.PathLike, errors: Iterable[tuple[str, RowError]]) -> None:
    """Sidecar file of row-level errors: ``file,line,field,message``."""
    write_csv(path, ("file", "line", "field", "message"),
              ((src, e.line, e.field, e.message) for src, e in errors))
