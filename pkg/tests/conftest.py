import os

import pytest
from hypothesis import HealthCheck, settings

from localcontent.ingest import GeoTable, Market, MsaRecord

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True,
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def geo3():
    """Three markets; A is the most populous, B samples at half A's rate."""
    geo = GeoTable()
    geo.markets["A"] = Market("A", 2_000_000.0, 200)
    geo.markets["B"] = Market("B", 1_000_000.0, 50)
    geo.markets["C"] = Market("C", 500_000.0, 50)
    geo.msas["M1"] = MsaRecord("M1", 1_500_000.0, {"A": 0.7, "B": 0.3})
    geo.msas["M2"] = MsaRecord("M2", 400_000.0, {"C": 1.0})
    return geo


@pytest.fixture(scope="session")
def default_world():
    from localcontent.pipeline import generate_world
    from localcontent.synthgen import SynthParams

    return generate_world(SynthParams())


@pytest.fixture(scope="session")
def default_analysis(default_world):
    """Recovery report, table results and the analysis dataset for the default world."""
    from localcontent import ingest
    from localcontent.panel import build_market_panel, join_individuals, panel_frame
    from localcontent.pipeline import analyze_world, localness_stage
    from localcontent.tables import AnalysisData

    rep, results = analyze_world(default_world, (4, 5, 6, 7, 8))
    geo = default_world.markets.geo
    run = localness_stage(default_world.click.visits, geo)
    panel = build_market_panel(run.assignments, geo, default_world.markets.demographics)
    people = default_world.people.frame.copy()
    people["dma_id"] = people["msa_id"].map(ingest.map_msa_to_dma(geo)).fillna("")
    joined, _ = join_individuals(people, panel)
    return rep, results, AnalysisData(panel_frame(panel), joined)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
