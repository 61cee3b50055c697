"""Nonlinear autoregressive (NAR) forecasting with LM, BR and SCG training.

The package is split by concern:

``data``         series I/O, synthesis, normalization, lag embedding, division plans
``model``        the NAR network, its Jacobian and JSON snapshots
``training``     Levenberg-Marquardt, Bayesian regularization, scaled conjugate gradient
``metrics``      MSE / MAE / MAPE / R / accuracy / efficiency
``diagnostics``  error histogram, residual autocorrelation, response table
``bench``        scenario grid, best-row selection and report emission
``cli``          the ``narforecast`` command
"""

__version__ = "0.1.0"

from .data import (SCENARIOS, DivisionPlan, Normalizer, RegressionSet, SeriesDataset,
                   SplitSpec, SyntheticProfile, ar1_series, embed_lags, fit_normalizer,
                   generate_synthetic, get_scenario, load_series, plan_division)
from .errors import ConfigError, DataError, NarError, TrainingDivergence
from .metrics import MetricsBundle, accuracy, compute_metrics, efficiency, mae, mape, mse, r_value
from .model import (NarNetwork, errors_and_jacobian, flatten, forward, init_network,
                    load_network, predict_targets, save_network, unflatten)
from .training import (EarlyStopping, TrainConfig, TrainReport, early_stop_update, lm_epoch,
                       train, train_br, train_lm, train_scg)
from .diagnostics import autocorrelation, error_histogram, response_table
from .bench import (PipelineOptions, RunManifest, ScenarioResult, emit_report, run_matrix,
                    run_scenario, select_best)
