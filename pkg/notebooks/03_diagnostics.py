# %% [markdown]
# # Error histogram, residual autocorrelation and response table
#
# Diagnostics come back as arrays and rows. Write them to CSV and plot with
# whatever tool is at hand.

# %%
import tempfile
from pathlib import Path

import numpy as np

from narforecast import generate_synthetic, run_scenario
from narforecast.bench import write_artifacts

res = run_scenario(generate_synthetic(2500, seed=2), "LM", 7, seed=2)
art = res.artifacts
print(res.scenario, res.counts, "test MSE", round(res.row()["mse"], 4))

# %% [markdown]
# Twenty bins over the full error span, counted per split.

# %%
h = art.histogram
print("bin width", round(h.bin_width, 4), "zero-error bin", h.zero_error_bin_index)
for k in range(0, 20, 4):
    lo, hi = h.bin_edges[k], h.bin_edges[k + 1]
    print(f"[{lo:6.2f}, {hi:6.2f})", {s: int(c[k]) for s, c in h.counts.items()})

# %% [markdown]
# Autocovariance of the test errors in time order. Lag 0 is the test MSE.

# %%
acf = art.acf
print("c0", acf.values[0], "vs test MSE", res.row()["mse"])
print("band +/-", round(acf.confidence, 4))
print("lags inside band:", int(acf.inside_band()[1:].sum()), "of", acf.lags.size - 1)

# %% [markdown]
# Response rows are in time order with a split label on each.

# %%
for row in art.response[:5]:
    print(row)

# %%
with tempfile.TemporaryDirectory() as tmp:
    paths = write_artifacts(res, tmp)
    for name, p in paths.items():
        print(name, Path(p).name, len(Path(p).read_text().splitlines()), "lines")
