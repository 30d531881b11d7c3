"""Synthetic markets, clickstreams and survey individuals with planted parameters.

Every random draw comes from a stream seeded by ``(seed, stream, index)``,
where ``index`` is a market (or neutral-site) position. Generation can
therefore be split across threads without changing a single byte of output.

Design of the generated world
-----------------------------
* Market populations are log-normal (median 0.55 M, log-sd 1.1), floored at
  0.08 M and capped at 20 M.
* College population is ``0.24 * pop * exp(0.3 z - 0.045)`` with ``z``
  standard normal per market, so its mean given population is ``0.24 * pop``.
* Local-site totals are ``round(intercept + slope * pop + noise)`` floored at
  zero and are split over categories with the published local-site category
  mix. Then ``round(kappa * z)`` sites move into the news category from the
  others (or out of it when negative), leaving the total untouched. College
  population thus predicts local news beyond population and has no direct
  effect on individual choices.
* Each local site clears its home market's hit threshold by a factor of 1.5
  to 4 and spills at most 15 % of its population-normalized traffic into up
  to three other markets; spill hits are sized against market totals that
  already include local traffic. Neutral sites draw hits in proportion to
  each market's panel volume.
* Individuals follow a linear probability model in market population, local
  news sites, own covariates (gender, four income and four education
  dummies, black) and a black x market-black-share interaction. Covariates
  are independent of market characteristics except through race.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .ingest import (
    CATEGORIES,
    EDUCATION_LEVELS,
    INCOME_LEVELS,
    NEWS,
    GeoTable,
    HouseholdRecord,
    Market,
    MsaRecord,
    PageVisitRecord,
    individuals_frame,
)

# Local-site counts by category (Table 2 "Local Sites" column).
LOCAL_SITE_MIX = {
    "web_service_provider": 85, "commercial_online_network": 2, "search_engine": 20,
    "government": 29, "education": 154, "adult": 132, "marketing_corporate": 95,
    NEWS: 274, "shopping": 23, "travel_tourism": 7, "isp": 163, "directory": 1,
}
# Hit shares by category for neutral traffic, with a residual "other" slice.
NEUTRAL_HIT_MIX = {
    "web_service_provider": 10.9, "commercial_online_network": 6.3, "search_engine": 14.6,
    "government": 1.9, "education": 2.3, "adult": 10.5, "marketing_corporate": 12.5,
    NEWS: 21.7, "shopping": 12.4, "travel_tourism": 1.5, "isp": 4.5, "directory": 0.9,
    "other": 8.0,
}
# Education distributions (Table 1), renormalized after rounding.
PANEL_EDUCATION = np.array([0.312, 0.108, 0.202, 0.232, 0.145]) / 0.999
CPS_EDUCATION = np.array([0.3815, 0.2325, 0.1443, 0.1779, 0.0638]) / 1.0

_MARKETS, _LOCAL_SITES, _NEUTRAL_SITES, _HOUSEHOLDS, _INDIVIDUALS, _ALLOCATION = range(1, 7)


@dataclass
class OutcomeModel:
    """Planted linear probability model for one 0/1 outcome."""

    alpha: float
    beta_pop: float
    gamma_local: float
    black: float
    black_share: float
    black_x_share: float
    female: float = -0.01
    income: tuple[float, ...] = (0.04, 0.08, 0.13, 0.19)
    education: tuple[float, ...] = (0.04, 0.08, 0.12, 0.17)
    market_shock_sd: float = 0.01

    def zero_effects(self) -> "OutcomeModel":
        return OutcomeModel(self.alpha, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                            (0.0,) * len(self.income), (0.0,) * len(self.education), 0.0)


def _connection_model() -> OutcomeModel:
    return OutcomeModel(alpha=0.25, beta_pop=-0.00431, gamma_local=0.00827,
                        black=-0.087, black_share=-0.079, black_x_share=-0.207)


def _computer_model() -> OutcomeModel:
    return OutcomeModel(alpha=0.40, beta_pop=-0.00534, gamma_local=0.00921,
                        black=-0.082, black_share=-0.142, black_x_share=-0.282,
                        female=-0.02, income=(0.06, 0.11, 0.17, 0.24),
                        education=(0.05, 0.10, 0.15, 0.20))


@dataclass
class SynthParams:
    seed: int = 1999
    n_markets: int = 138
    pop_median: float = 0.55
    pop_log_sd: float = 1.1
    pop_floor: float = 0.08
    pop_cap: float = 20.0
    sites_per_market_slope: float = 2.162
    sites_per_market_intercept: float = 2.577
    sites_noise_sd: float = 1.0
    college_site_effect: float = 2.0
    college_share: float = 0.24
    college_log_sd: float = 0.3
    black_share_beta: tuple[float, float] = (1.5, 9.0)
    panel_rate: float = 9e-5
    panel_rate_log_sd: float = 0.35
    visits_per_household: float = 60.0
    n_neutral_sites: int = 400
    neutral_hits_median: float = 1200.0
    neutral_hits_log_sd: float = 1.0
    neutral_hits_floor: int = 300
    local_clearance: tuple[float, float] = (1.5, 4.0)
    max_spill_markets: int = 3
    max_spill_mass: float = 0.15
    base_threshold: float = 100.0
    n_individuals: int = 86_500
    missing_covariate_rate: float = 0.13
    unmatched_rate: float = 0.01
    split_msa_rate: float = 0.25
    race_unknown_rate: float = 0.575
    clamp: tuple[float, float] = (0.01, 0.99)
    connection: OutcomeModel = field(default_factory=_connection_model)
    computer: OutcomeModel = field(default_factory=_computer_model)
    populations: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stream, index]))


def _map(fn, items, threads: int):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def dma_id(i: int) -> str:
    return str(500 + i)


def msa_id(i: int) -> str:
    return f"M{i:04d}"


@dataclass
class SyntheticMarkets:
    params: SynthParams
    geo: GeoTable
    demographics: dict[str, tuple[float, float]]
    true_counts: dict[str, dict[str, int]]
    college_z: dict[str, float]

    @property
    def dma_ids(self) -> list[str]:
        return self.geo.dma_ids()

    def population_mil(self) -> np.ndarray:
        return np.array([self.geo.markets[d].population / 1e6 for d in self.dma_ids])

    def black_share(self, dma: str) -> float:
        return self.demographics[dma][1] / self.geo.markets[dma].population

    def local_news(self, dma: str) -> int:
        return self.true_counts[dma].get(NEWS, 0)


def _shift_news(by_cat: dict[str, int], shift: int, mix: np.ndarray, cats: list[str],
                rng: np.random.Generator) -> None:
    """Move up to ``|shift|`` sites into (or out of) the news category.

    Sites are exchanged with the other categories so the market total is
    unchanged.
    """
    others = [c for c in cats if c != NEWS]
    if shift > 0:
        pool = np.array([by_cat[c] for c in others], dtype=np.int64)
        k = min(shift, int(pool.sum()))
        if k:
            taken = rng.multivariate_hypergeometric(pool, k)
            for c, t in zip(others, taken.tolist()):
                by_cat[c] -= t
            by_cat[NEWS] += k
    elif shift < 0:
        k = min(-shift, by_cat[NEWS])
        if k:
            w = np.array([mix[cats.index(c)] for c in others])
            given = rng.multinomial(k, w / w.sum())
            for c, g in zip(others, given.tolist()):
                by_cat[c] += g
            by_cat[NEWS] -= k


def gen_markets(params: SynthParams, threads: int = 1) -> SyntheticMarkets:
    """Markets, MSA overlaps, demographics and planted local-site counts."""
    p = params
    cats = list(LOCAL_SITE_MIX)
    mix = np.array([LOCAL_SITE_MIX[c] for c in cats], dtype=float)
    mix /= mix.sum()
    n = p.n_markets
    if p.populations is not None and len(p.populations) != n:
        raise ValueError("populations override must have one entry per market")

    def one(i: int):
        rng = _rng(p.seed, _MARKETS, i)
        pop = min(p.pop_cap, max(p.pop_floor, p.pop_median * math.exp(p.pop_log_sd * rng.standard_normal())))
        if p.populations is not None:
            pop = float(p.populations[i])
        persons = round(pop * 1e6)
        rate = p.panel_rate * math.exp(p.panel_rate_log_sd * rng.standard_normal())
        panel = max(1, round(persons * rate))
        z = rng.standard_normal()
        college = p.college_share * persons * math.exp(p.college_log_sd * z - 0.5 * p.college_log_sd ** 2)
        share = rng.beta(*p.black_share_beta)
        black = round(persons * share)
        mean = p.sites_per_market_intercept + p.sites_per_market_slope * persons / 1e6
        total = max(0, round(mean + p.sites_noise_sd * rng.standard_normal()))
        by_cat = dict(zip(cats, rng.multinomial(total, mix).tolist()))
        _shift_news(by_cat, round(p.college_site_effect * z), mix, cats, rng)
        # MSA: mostly inside its DMA, sometimes overlapping a second one.
        home_share = float(rng.uniform(0.6, 1.0))
        other = None
        if n > 1 and rng.random() < p.split_msa_rate:
            j = int(rng.integers(n - 1))
            other = j + 1 if j >= i else j
            other_share = (1.0 - home_share) * float(rng.uniform(0.0, 1.0))
        else:
            other_share = 0.0
        return persons, panel, z, college, black, by_cat, home_share, other, other_share

    rows = _map(one, range(n), threads)
    geo = GeoTable()
    demographics, counts, zs = {}, {}, {}
    for i, (persons, panel, z, college, black, by_cat, home_share, other, other_share) in enumerate(rows):
        d = dma_id(i)
        geo.markets[d] = Market(d, float(persons), int(panel))
        demographics[d] = (float(round(college)), float(black))
        counts[d] = by_cat
        zs[d] = float(z)
    for i, (persons, _, _, _, _, _, home_share, other, other_share) in enumerate(rows):
        rec = MsaRecord(msa_id(i), float(round(persons / home_share)))
        rec.overlaps[dma_id(i)] = round(home_share, 6)
        if other is not None and other_share > 0:
            rec.overlaps[dma_id(other)] = round(other_share, 6)
        geo.msas[rec.msa_id] = rec
    return SyntheticMarkets(p, geo, demographics, counts, zs)


# ---------------------------------------------------------------------------
# clickstream


@dataclass
class SyntheticClickstream:
    visits: list[PageVisitRecord]
    households: list[HouseholdRecord]
    planted_local: list[tuple[str, str, str]]
    neutral_sites: list[str]

    @property
    def total_hits(self) -> int:
        return sum(v.hits for v in self.visits)


def _thresholds(markets: SyntheticMarkets) -> dict[str, float]:
    geo = markets.geo
    ref = geo.largest_market()
    f_ref = geo.markets[ref].sampling_frequency
    return {d: markets.params.base_threshold * geo.markets[d].sampling_frequency / f_ref for d in geo.markets}


_ABBREV = {
    "web_service_provider": "mail", "commercial_online_network": "online",
    "search_engine": "search", "government": "gov", "education": "edu", "adult": "adult",
    "marketing_corporate": "corp", NEWS: "news", "shopping": "shop",
    "travel_tourism": "travel", "isp": "isp", "directory": "dir", "other": "misc",
}


def gen_clickstream(markets: SyntheticMarkets, params: SynthParams | None = None, threads: int = 1,
                    include_local: bool = True) -> SyntheticClickstream:
    """Visit counts for planted local sites and geographically neutral sites.

    Rows are pre-aggregated ``(site, market, hits)`` records with an empty
    household id, sorted by site and market.
    """
    p = params or markets.params
    ids = markets.dma_ids
    idx = {d: i for i, d in enumerate(ids)}
    volume = np.array([markets.geo.markets[d].panel_households * p.visits_per_household for d in ids])
    thresholds = _thresholds(markets)
    cats = list(LOCAL_SITE_MIX)

    def local_plan(i: int):
        d = ids[i]
        rng = _rng(p.seed, _LOCAL_SITES, i)
        out = []
        for cat in cats:
            for k in range(markets.true_counts[d].get(cat, 0)):
                site = f"{_ABBREV[cat]}{k}.d{d}.example.net"
                home = max(1, math.ceil(thresholds[d] * rng.uniform(*p.local_clearance)))
                n_spill = int(rng.integers(0, p.max_spill_markets + 1)) if len(ids) > 1 else 0
                others: list[int] = []
                mass = 0.0
                if n_spill:
                    picks = rng.choice(len(ids) - 1, size=min(n_spill, len(ids) - 1), replace=False)
                    others = sorted(int(j) + 1 if j >= i else int(j) for j in picks)
                    mass = float(rng.uniform(0.0, p.max_spill_mass))
                out.append((site, cat, i, home, others, mass))
        return out

    def neutral_site(k: int):
        rng = _rng(p.seed, _NEUTRAL_SITES, k)
        names = list(NEUTRAL_HIT_MIX)
        w = np.array([NEUTRAL_HIT_MIX[c] for c in names])
        cat = names[int(rng.choice(len(names), p=w / w.sum()))]
        total = max(p.neutral_hits_floor,
                    int(round(p.neutral_hits_median * math.exp(p.neutral_hits_log_sd * rng.standard_normal()))))
        counts = rng.multinomial(total, volume / volume.sum())
        site = f"www.{_ABBREV[cat]}{k}.example.com"
        return site, cat, {ids[j]: int(c) for j, c in enumerate(counts) if c > 0}

    rows: list[tuple[str, str, str, int]] = []
    planted: list[tuple[str, str, str]] = []
    if include_local:
        plans = [site for chunk in _map(local_plan, range(len(ids)), threads) for site in chunk]
        # Expected market totals: neutral traffic plus the local sites' home hits.
        mean_neutral = p.neutral_hits_median * math.exp(0.5 * p.neutral_hits_log_sd ** 2)
        expected = p.n_neutral_sites * mean_neutral * volume / volume.sum()
        for _, _, i, home, _, _ in plans:
            expected[i] += home
        for site, cat, i, home, others, mass in plans:
            planted.append((site, ids[i], cat))
            rows.append((site, cat, ids[i], home))
            if others:
                per = mass / len(others) / (1.0 - mass)
                for j in others:
                    h = int(round(per * home * expected[j] / expected[i]))
                    if h > 0:
                        rows.append((site, cat, ids[j], h))
    neutral = []
    for site, cat, hits in _map(neutral_site, range(p.n_neutral_sites), threads):
        neutral.append(site)
        rows.extend((site, cat, dd, h) for dd, h in hits.items())
    rows.sort(key=lambda r: (r[0], idx[r[2]]))
    visits = [PageVisitRecord("", dd, site, cat, h) for site, cat, dd, h in rows]

    def households(i: int):
        d = ids[i]
        rng = _rng(p.seed, _HOUSEHOLDS, i)
        share = markets.black_share(d)
        out = []
        for k in range(markets.geo.markets[d].panel_households):
            income = int(rng.integers(INCOME_LEVELS))
            educ = int(rng.choice(EDUCATION_LEVELS, p=PANEL_EDUCATION))
            race = None
            if rng.random() >= p.race_unknown_rate:
                race = "black" if rng.random() < share else "nonblack"
            out.append(HouseholdRecord(f"{d}-{k:05d}", d, income, educ, race))
        return out

    hh = [h for chunk in _map(households, range(len(ids)), threads) for h in chunk]
    planted.sort()
    return SyntheticClickstream(visits, hh, planted, sorted(neutral))


# ---------------------------------------------------------------------------
# individuals


@dataclass
class SyntheticIndividuals:
    frame: pd.DataFrame
    clamp_rate: dict[str, float]


def _allocation(markets: SyntheticMarkets, n_total: int) -> np.ndarray:
    pop = markets.population_mil()
    weights = pop / pop.sum()
    n = np.floor(weights * n_total).astype(int)
    n = np.maximum(n, 20)
    return n


def _probabilities(model: OutcomeModel, pop, local, share, black, female, income, educ, shock) -> np.ndarray:
    inc = np.asarray(model.income)
    edu = np.asarray(model.education)
    inc_eff = np.where(income > 0, inc[np.clip(income - 1, 0, None)], 0.0)
    edu_eff = np.where(educ > 0, edu[np.clip(educ - 1, 0, None)], 0.0)
    return (model.alpha + model.beta_pop * pop + model.gamma_local * local
            + model.black * black + model.black_share * share
            + model.black_x_share * black * share
            + model.female * female + inc_eff + edu_eff + shock)


def gen_individuals(markets: SyntheticMarkets, params: SynthParams | None = None, threads: int = 1) -> SyntheticIndividuals:
    """Survey individuals whose outcomes follow the planted linear probability models.

    A fraction ``unmatched_rate`` of people live in MSAs outside the geography
    and a fraction ``missing_covariate_rate`` lack an income code.
    """
    p = params or markets.params
    ids = markets.dma_ids
    counts = _allocation(markets, p.n_individuals)
    lo, hi = p.clamp

    def one(i: int):
        d = ids[i]
        rng = _rng(p.seed, _INDIVIDUALS, i)
        n = int(counts[i])
        pop = markets.geo.markets[d].population / 1e6
        local = markets.local_news(d)
        share = markets.black_share(d)
        female = (rng.random(n) < 0.52).astype(int)
        income = rng.integers(INCOME_LEVELS, size=n)
        educ = rng.choice(EDUCATION_LEVELS, size=n, p=CPS_EDUCATION)
        black = (rng.random(n) < share).astype(int)
        out = {}
        clamped = {}
        for name, model in (("connected", p.connection), ("has_computer", p.computer)):
            shock = model.market_shock_sd * rng.standard_normal()
            prob = _probabilities(model, pop, local, share, black, female, income, educ, shock)
            clamped[name] = int(np.sum((prob < lo) | (prob > hi)))
            out[name] = (rng.random(n) < np.clip(prob, lo, hi)).astype(int)
        missing = rng.random(n) < p.missing_covariate_rate
        income_obs = np.where(missing, np.nan, income.astype(float))
        return {
            "person_id": [f"P{d}-{k:06d}" for k in range(n)],
            "msa_id": [msa_id(i)] * n,
            "connected": out["connected"], "has_computer": out["has_computer"],
            "black": black, "female": female, "income": income_obs,
            "education": educ.astype(float),
        }, clamped

    parts = _map(one, range(len(ids)), threads)

    rng = _rng(p.seed, _ALLOCATION)
    n_unmatched = int(round(p.unmatched_rate * p.n_individuals))
    unmatched = {
        "person_id": [f"PU-{k:06d}" for k in range(n_unmatched)],
        "msa_id": [f"U{k % 7:04d}" for k in range(n_unmatched)],
        "connected": (rng.random(n_unmatched) < 0.3).astype(int),
        "has_computer": (rng.random(n_unmatched) < 0.5).astype(int),
        "black": (rng.random(n_unmatched) < 0.12).astype(int),
        "female": (rng.random(n_unmatched) < 0.52).astype(int),
        "income": rng.integers(INCOME_LEVELS, size=n_unmatched).astype(float),
        "education": rng.integers(EDUCATION_LEVELS, size=n_unmatched).astype(float),
    }

    cols: dict[str, list] = {k: [] for k in unmatched}
    total_clamped = {"connected": 0, "has_computer": 0}
    for part, clamped in parts:
        for k in cols:
            cols[k].extend(list(part[k]))
        for k in total_clamped:
            total_clamped[k] += clamped[k]
    for k in cols:
        cols[k].extend(list(unmatched[k]))
    n_model = int(sum(counts))
    rate = {k: v / n_model for k, v in total_clamped.items()}
    for k, r in rate.items():
        if r > 0.10:
            warnings.warn(f"{k}: {r:.1%} of probabilities clamped; the linear model is poorly specified",
                          RuntimeWarning, stacklevel=2)
    cols["dma_id"] = [""] * len(cols["person_id"])
    return SyntheticIndividuals(individuals_frame(cols), rate)


def truth_record(markets: SyntheticMarkets, click: SyntheticClickstream, people: SyntheticIndividuals) -> dict:
    """Planted parameters and site lists, as written to ``truth.json``."""
    p = markets.params
    return {
        "seed": p.seed,
        "params": p.to_dict(),
        "planted": {
            "table4_slope": p.sites_per_market_slope,
            "table4_intercept": p.sites_per_market_intercept,
            "table5_beta_pop": p.connection.beta_pop,
            "table5_gamma_local": p.connection.gamma_local,
            "table6_black_x_share": p.connection.black_x_share,
            "table6_black": p.connection.black,
            "table7_beta_pop": p.computer.beta_pop,
            "table7_gamma_local": p.computer.gamma_local,
            "table8_black_x_share": p.computer.black_x_share,
        },
        "concentration_mixture": {
            "home_normalized_share_min": 1.0 - p.max_spill_mass,
            "spill_markets": [0, p.max_spill_markets],
            "home_hits_over_threshold": list(p.local_clearance),
            "neutral_sites": p.n_neutral_sites,
            "neutral_hits_lognormal": [p.neutral_hits_median, p.neutral_hits_log_sd, p.neutral_hits_floor],
        },
        "clamp_rate": people.clamp_rate,
        "planted_local_sites": [
            {"site": s, "dma_id": d, "category": c} for s, d, c in click.planted_local
        ],
        "neutral_sites": click.neutral_sites,
        "true_local_counts": {d: markets.true_counts[d] for d in markets.dma_ids},
        "total_visits": click.total_hits,
    }
