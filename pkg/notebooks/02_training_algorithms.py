# %% [markdown]
# # Levenberg-Marquardt, Bayesian regularization and scaled conjugate gradient
#
# The same 2-10-1 network is trained three ways on one division plan.

# %%
import numpy as np

from narforecast import (SCENARIOS, TrainConfig, embed_lags, fit_normalizer,
                         generate_synthetic, init_network, plan_division, train)
from narforecast.model import predict_targets

series = generate_synthetic(3000, seed=4)
norm = fit_normalizer(series.values)
reg = embed_lags(series, 2, norm)
plan = plan_division(reg.n_targets, SCENARIOS["scenario7"], seed=4)
net = init_network(2, 10, seed=4, normalizer=norm)

# %%
reports = {}
for algo in ("LM", "BR", "SCG"):
    rep = train(net, reg, plan, TrainConfig(algorithm=algo))
    reports[algo] = rep
    best = rep.history[rep.best_epoch - 1]
    print(f"{algo:3s} stop={rep.stop_reason:12s} epochs={rep.epochs_run:4d} "
          f"best={rep.best_epoch:4d} val_mse={best.val_mse:.4f} test_mse={best.test_mse:.4f}")

# %% [markdown]
# LM damping shrinks while steps succeed. Every recorded LM epoch lowers the
# training SSE.

# %%
lm = reports["LM"]
print("mu:", lm.column("damping")[:8])
print("SSE strictly decreasing:", bool(np.all(np.diff(lm.column("train_sse")) < 0)))

# %% [markdown]
# Bayesian regularization tracks alpha, beta and the effective number of
# parameters gamma (out of 41 weights).

# %%
br = reports["BR"]
for rec in br.history[:: max(1, len(br.history) // 6)]:
    print(f"epoch {rec.epoch:3d} alpha={rec.alpha:.3g} beta={rec.beta:.3g} gamma={rec.gamma:.2f}")

# %% [markdown]
# The returned network is the best-validation snapshot, not the last iterate.

# %%
for algo, rep in reports.items():
    pred = predict_targets(rep.final_network, reg, plan.test_idx)
    err = reg.raw_targets[plan.test_idx] - pred
    print(algo, "test MSE from final network:", round(float(np.mean(err ** 2)), 4))
