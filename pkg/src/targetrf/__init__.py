"""Random forest regression with predictor targeting.

Submodules: datacore (ingestion, transforms, targets, window plans),
cart (regression trees), forest (bagged ensembles), targeting (LASSO
predictor selection), theory (split-probability and tree-strength
calculators), simlab (synthetic experiments), evallab (forecast
evaluation), and cli (command-line entry point).
"""
from .cart import SplitSpec, TreeConfig, TreeModel, best_split, grow_tree, impurity_decrease, predict_tree
from .datacore import Dataset, WindowPlan, apply_transform, build_target, expanding_windows, load_csv
from .evallab import (
    DiagnosticsCurve,
    DmResult,
    ForecastMethod,
    ForecastReport,
    dm_test,
    mse_ratio,
    run_forecast_experiment,
    tree_diagnostics,
)
from .forest import ForestConfig, ForestModel, fit_forest, predict_forest, tree_predictions
from .simlab import Dgp, RhoEstimate, estimate_delta, estimate_split_prob, sample, sweep
from .targeting import ExpansionMap, LassoFit, TargetSelection, fit_trf, lasso_fit, select_targets
from .theory import (
    ScalarFn1D,
    SplitSequence,
    TheoryParams,
    ceil_pow2,
    cstar_linear,
    cstar_numeric,
    floor_pow2,
    mse_bounds_ordinary,
    mse_targeted,
    pmf_joint,
    population_criterion,
    rho,
    sine_bound,
    snr_to_sigma2,
    upper_bound_split_prob,
)

__version__ = "0.1.0"
