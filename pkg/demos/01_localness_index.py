# %% [markdown]
# # How local is a web site?
#
# A site's hits from each market are divided by that market's total panel
# visits, so big markets do not look "local" just because they are big. The
# per-visit shares are renormalized and the index is the inverse Herfindahl
# of the result: 1 for a single-market audience, J for an audience spread
# evenly (per visit) over J markets.

# %%
import numpy as np

from localcontent.ingest import GeoTable, Market, PageVisitRecord
from localcontent.localness import (
    MarketTotals,
    SiteTrafficProfile,
    aggregate_visits,
    compute_localness,
    hit_threshold,
    localness_frame,
    score_sites,
)

# %%
totals = MarketTotals({"NYC": 100_000, "BOS": 20_000, "SEA": 10_000})

hometown = SiteTrafficProfile("news.bos.example.com", "news_information_entertainment", {"BOS": 400, "NYC": 30})
national = SiteTrafficProfile("search.example.com", "search_engine", {"NYC": 5000, "BOS": 1000, "SEA": 500})

for prof in (hometown, national):
    res = compute_localness(prof, totals)
    shares = {k: round(v, 3) for k, v in res.normalized_shares.items()}
    print(f"{prof.site:<24} index {res.index:5.2f}  top {res.top_dma}  shares {shares}")

# %% [markdown]
# The national site gets the same share of every market's visits, so its
# index is exactly the number of markets. Raw hit counts alone would have
# called it a New York site.

# %% [markdown]
# ## Hit thresholds
#
# A low index is not enough: the site also needs a minimum number of hits
# in its top market. The minimum is 100 in the reference market and scales
# with each market's sampling frequency (panel households per resident).

# %%
geo = GeoTable()
geo.markets["NYC"] = Market("NYC", 18_000_000, 1800)
geo.markets["BOS"] = Market("BOS", 5_000_000, 250)
geo.markets["SEA"] = Market("SEA", 3_000_000, 300)
for d in geo.dma_ids():
    print(d, round(hit_threshold(d, geo, "NYC"), 1))

# %% [markdown]
# ## From visit rows to classifications

# %%
rng = np.random.default_rng(0)
visits = []
for d, n in (("NYC", 9000), ("BOS", 2500), ("SEA", 3000)):
    visits.append(PageVisitRecord("", d, "search.example.com", "search_engine", int(n)))
    visits.append(PageVisitRecord("", d, "mail.example.com", "web_service_provider", int(rng.integers(500, 900))))
visits.append(PageVisitRecord("", "BOS", "news.bos.example.com", "news_information_entertainment", 180))
visits.append(PageVisitRecord("", "NYC", "news.bos.example.com", "news_information_entertainment", 40))
visits.append(PageVisitRecord("", "SEA", "tiny.sea.example.com", "shopping", 60))

scores = score_sites(*aggregate_visits(visits), geo)
print(localness_frame(scores).to_string(index=False))

# %% [markdown]
# `tiny.sea.example.com` has index 1 but only 60 hits against a Seattle
# threshold of 100, so it is not counted.
