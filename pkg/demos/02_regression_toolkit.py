# %% [markdown]
# # Linear probability models with market-level regressors
#
# Individual outcomes depend on market characteristics, so errors are
# correlated within markets. This walk-through compares classical, HC1 and
# cluster-robust errors, instruments a market variable, and absorbs market
# fixed effects.

# %%
import numpy as np
import pandas as pd

from localcontent.econometrics import RegressionSpec, fit, interaction, ols_fit

rng = np.random.default_rng(42)
n_markets, per_market = 60, 200
market = np.repeat(np.arange(n_markets), per_market)
pop = rng.lognormal(-0.5, 1.0, n_markets)
z = rng.normal(size=n_markets)                      # instrument
u = rng.normal(size=n_markets)                      # market-level confounder
local = 3 + 2 * pop + 1.5 * z + u
black_share = rng.beta(1.5, 9, n_markets)
shock = 0.03 * rng.normal(size=n_markets)

df = pd.DataFrame({
    "market": market,
    "pop": pop[market],
    "local": local[market],
    "z": z[market],
    "black_share": black_share[market],
})
df["black"] = (rng.random(len(df)) < df["black_share"]).astype(float)
p = (0.3 - 0.005 * df["pop"] + 0.01 * df["local"] - 0.02 * u[market]
     - 0.1 * df["black"] - 0.2 * df["black"] * df["black_share"] + shock[market])
df["connected"] = (rng.random(len(df)) < p).astype(float)

# %% [markdown]
# ## Three sets of standard errors for the same coefficients

# %%
spec = RegressionSpec("connected", ("pop", "local"), cluster="market")
rows = {}
for cov in ("classical", "hc1", "cr1"):
    rows[cov] = ols_fit(df, spec, cov_type=cov).std_errors
print(pd.DataFrame(rows).round(5))

# %% [markdown]
# Clustered errors are several times larger: there are only 60 independent
# draws of the market variables, not 12,000.
#
# ## Instrumenting local content
#
# `local` is correlated with the market confounder `u`, so OLS is biased.
# The instrument shifts `local` but has no direct effect.

# %%
iv_spec = RegressionSpec("connected", ("pop", "local"), endogenous=("local",), instruments=("z",), cluster="market")
iv = fit(df, iv_spec)
print("OLS ", ols_fit(df, spec).coefficients.round(4).to_dict())
print("2SLS", iv.coefficients.round(4).to_dict())
print(iv.first_stage["local"].summary_frame().round(4))

# %% [markdown]
# ## Market fixed effects with a race interaction
#
# With a market fixed effect the market share black is absorbed; only the
# individual dummy and its interaction with the share are identified.

# %%
df["black×black_share"] = interaction(df, "black", "black_share")
fe = ols_fit(df, RegressionSpec("connected", ("black_share", "black", "black×black_share"),
                                cluster="market", fixed_effect_group="market"))
print("dropped:", fe.dropped_columns)
print(fe.summary_frame().round(4))
