# %% [markdown]
# # Series, normalization and the seven division scenarios
#
# A heart-rate-like series is synthesized, scaled into [-1, 1], turned into
# lagged regression rows and divided into train / validation / test sets.

# %%
import numpy as np

from narforecast import (SCENARIOS, SyntheticProfile, embed_lags, fit_normalizer,
                         generate_synthetic, plan_division)
from narforecast.metrics import efficiency

series = generate_synthetic(6314, seed=1, profile=SyntheticProfile(noise_std=1.5))
print(series.n, "points, mean", round(series.values.mean(), 2), "bpm")
print("first values:", np.round(series.values[:6], 2))

# %% [markdown]
# Min-max scaling over the full series. `invert` undoes it exactly enough for
# metrics to be reported in beats per minute.

# %%
norm = fit_normalizer(series.values)
z = norm.apply(series.values)
print("range", norm.x_min, norm.x_max, "->", z.min(), z.max())
print("round trip error", np.max(np.abs(norm.invert(z) - series.values)))

# %% [markdown]
# Two lags: each target y(t) is predicted from y(t-1) and y(t-2), most recent first.

# %%
reg = embed_lags(series, 2, norm)
print(reg.n_targets, "targets; row 0 inputs (bpm):", norm.invert(reg.inputs[0]),
      "target:", reg.raw_targets[0])

# %% [markdown]
# Division counts round half up for train and validation; test gets the rest.
# Efficiency is samples divided over samples trained on.

# %%
for name, spec in SCENARIOS.items():
    plan = plan_division(reg.n_targets, spec, seed=0)
    print(f"{name}: {spec.train_frac:.0%}/{spec.val_frac:.0%}/{spec.test_frac:.0%}",
          plan.counts, "efficiency", round(efficiency(reg.n_targets, plan.counts[0]), 2))

# %% [markdown]
# The contiguous-block method keeps each split in time order.

# %%
block = plan_division(reg.n_targets, SCENARIOS["scenario7"], "contiguous-block")
print(block.train_idx[[0, -1]], block.val_idx[[0, -1]], block.test_idx[[0, -1]])
