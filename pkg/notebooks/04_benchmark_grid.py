# %% [markdown]
# # Three algorithms by seven scenarios
#
# `run_matrix` runs every cell with seeds derived from one master seed, so
# the table is the same whether cells run serially or in worker processes.
# The `narforecast bench` command wraps the same call.

# %%
import json

from narforecast import emit_report, generate_synthetic, run_matrix, select_best
from narforecast.bench import strip_timestamp

series = generate_synthetic(6314, seed=1)
grid = run_matrix(series, master_seed=0)
print(len(grid), "cells")

# %%
print(emit_report(grid, "markdown"))

# %% [markdown]
# Selection criteria can disagree. The composite ranks by test MSE, then r,
# then efficiency.

# %%
for criterion in ("composite", "max_accuracy", "max_r"):
    best = select_best(grid, criterion)
    print(criterion, {a: r.scenario for a, r in best.items()})

# %% [markdown]
# Parallel scheduling gives byte-identical JSON.

# %%
parallel = run_matrix(series, master_seed=0, workers=4)
same = strip_timestamp(emit_report(grid, "json")) == strip_timestamp(emit_report(parallel, "json"))
print("serial == parallel:", same)
print(json.loads(emit_report(grid, "json"))["best"])
