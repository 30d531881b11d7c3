import warnings
from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from localcontent.econometrics import RegressionSpec, ols_fit
from localcontent.ingest import PageVisitRecord, map_msa_to_dma, serialize_geography, serialize_visits
from localcontent.localness import aggregate_visits, classify_local, compute_localness, score_sites
from localcontent.panel import build_market_panel, join_individuals, panel_frame
from localcontent.pipeline import analyze_world, generate_world
from localcontent.synthgen import SynthParams, gen_clickstream, gen_individuals, gen_markets

SMALL = SynthParams(seed=7, n_markets=12, n_individuals=6000, n_neutral_sites=40)


def test_same_seed_same_output():
    a, b = gen_markets(SMALL), gen_markets(SMALL, threads=3)
    assert serialize_geography(a.geo) == serialize_geography(b.geo)
    assert a.true_counts == b.true_counts and a.demographics == b.demographics
    ca, cb = gen_clickstream(a, SMALL), gen_clickstream(b, SMALL, threads=3)
    assert serialize_visits(ca.visits) == serialize_visits(cb.visits)
    pa, pb = gen_individuals(a, SMALL), gen_individuals(b, SMALL, threads=3)
    pd.testing.assert_frame_equal(pa.frame, pb.frame)


def test_different_seed_differs():
    a = gen_markets(SMALL)
    b = gen_markets(replace(SMALL, seed=8))
    assert serialize_geography(a.geo) != serialize_geography(b.geo)


def test_zero_noise_unit_population_gives_five():
    p = replace(SMALL, populations=(1.0,) * SMALL.n_markets, sites_noise_sd=0.0, college_site_effect=0.0)
    m = gen_markets(p)
    # round(2.577 + 2.162)
    assert all(sum(c.values()) == 5 for c in m.true_counts.values())


def test_zero_slope_ignores_population():
    p = replace(SMALL, sites_per_market_slope=0.0, sites_noise_sd=0.0)
    m = gen_markets(p)
    totals = {sum(c.values()) for c in m.true_counts.values()}
    assert totals == {3}
    assert len({mk.population for mk in m.geo.markets.values()}) > 1


def test_news_shift_keeps_totals():
    base = gen_markets(replace(SMALL, college_site_effect=0.0))
    shifted = gen_markets(replace(SMALL, college_site_effect=3.0))
    for d in base.dma_ids:
        assert sum(base.true_counts[d].values()) == sum(shifted.true_counts[d].values())


def test_connection_rate_under_zero_effects():
    p = replace(SMALL, n_individuals=40_000, connection=SMALL.connection.zero_effects())
    m = gen_markets(p)
    people = gen_individuals(m, p).frame
    modelled = people[~people["msa_id"].str.startswith("U")]
    n, alpha = len(modelled), p.connection.alpha
    assert abs(modelled["connected"].mean() - alpha) < 3 * np.sqrt(alpha * (1 - alpha) / n)
    assert gen_individuals(m, p).clamp_rate["connected"] == 0.0


def test_clamp_warning():
    bad = replace(SMALL.connection, alpha=1.5)
    with pytest.warns(RuntimeWarning, match="clamped"):
        gen_individuals(gen_markets(SMALL), replace(SMALL, connection=bad))


def test_planted_local_sites_are_local():
    for seed in (0, 1, 2):
        p = replace(SynthParams(), seed=seed)
        m = gen_markets(p)
        click = gen_clickstream(m, p)
        profiles, totals = aggregate_visits(click.visits)
        for site, dma, _ in click.planted_local:
            res = compute_localness(profiles[site], totals)
            assert res.index <= 2.0 and res.top_dma == dma


def test_neutral_only_stream_has_no_local_sites():
    m = gen_markets(SMALL)
    click = gen_clickstream(m, SMALL, include_local=False)
    assert click.planted_local == []
    assert classify_local(*aggregate_visits(click.visits), m.geo) == []


def test_doubling_traffic_leaves_indices():
    m = gen_markets(SMALL)
    click = gen_clickstream(m, SMALL)
    doubled = [PageVisitRecord(r.household_id, r.dma_id, r.site, r.category, 2 * r.hits) for r in click.visits]
    a = score_sites(*aggregate_visits(click.visits), m.geo)
    b = score_sites(*aggregate_visits(doubled), m.geo)
    np.testing.assert_allclose([s.result.index for s in a], [s.result.index for s in b], rtol=1e-12)
    assert [s.is_local for s in a] == [s.is_local for s in b]


def test_first_stage_strength_rises_with_planted_effect():
    r2 = []
    for kappa in (0.0, 2.0, 6.0):
        m = gen_markets(replace(SynthParams(), college_site_effect=kappa))
        df = panel_frame(build_market_panel([], m.geo, m.demographics))
        df["local_news"] = [m.local_news(d) for d in df["dma_id"]]
        f = ols_fit(df, RegressionSpec("local_news", ("pop", "college_pop")))
        r2.append(f.r_squared)
    assert r2[0] < r2[1] < r2[2]


def _true_count_table5(params):
    """Table-5 column-2 estimate using the planted local counts directly."""
    m = gen_markets(params)
    people = gen_individuals(m, params).frame
    people["dma_id"] = people["msa_id"].map(map_msa_to_dma(m.geo)).fillna("")
    panel = build_market_panel([], m.geo, m.demographics)
    for row in panel:
        row.local_sites_by_category = dict(m.true_counts[row.dma_id])
    joined, _ = join_individuals(people, panel)
    f = ols_fit(joined, RegressionSpec("connected", ("pop", "local_news"), cluster="dma_id"))
    return f.coefficients[["pop", "local_news"]].to_numpy()


@pytest.mark.slow
def test_more_individuals_shrink_error():
    # Market shocks and the omitted race terms do not average out over people,
    # so switch them off to isolate individual sampling error.
    base = SynthParams()
    model = replace(base.connection, market_shock_sd=0.0, black=0.0, black_share=0.0, black_x_share=0.0)
    base = replace(base, connection=model)
    truth = np.array([base.connection.beta_pop, base.connection.gamma_local])
    err = {}
    for n in (base.n_individuals, 2 * base.n_individuals):
        est = np.array([_true_count_table5(replace(base, seed=s, n_individuals=n)) for s in range(20)])
        err[n] = np.sqrt(((est - truth) ** 2).mean(axis=0))
    assert (err[2 * base.n_individuals] < 0.9 * err[base.n_individuals]).all()


def test_large_planted_effect_has_right_sign():
    model = replace(SynthParams().connection, beta_pop=-0.0431)
    world = generate_world(replace(SynthParams(), connection=model))
    rep, _ = analyze_world(world, (4, 5, 6))
    row = {r.name: r for r in rep.rows}["table5_beta_pop"]
    assert row.planted == -0.0431 and row.estimate < 0
