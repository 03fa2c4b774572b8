"""Expanding-window forecast experiments and forecast-accuracy statistics.

Compares ordinary and targeted forests over a window plan, reports mean
squared error ratios (optionally within user-supplied regimes), tests
equal predictive accuracy with HAC-robust Diebold-Mariano statistics, and
estimates the per-tree strength / between-tree error correlation curve
across targeting levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.stats import norm

from .datacore import Dataset, WindowPlan
from .forest import ForestConfig, fit_forest, predict_forest, tree_predictions
from .targeting import fit_trf

__all__ = [
    "ForecastMethod",
    "WindowForecast",
    "ForecastReport",
    "DmResult",
    "DiagnosticsCurve",
    "run_forecast_experiment",
    "mse_ratio",
    "dm_test",
    "tree_diagnostics",
]


@dataclass(frozen=True)
class ForecastMethod:
    """One forecasting method: ordinary ("rf") or targeted ("trf")."""

    kind: str
    s_prime: int | None = None
    expansion: str = "none"

    def __post_init__(self):
        if self.kind not in ("rf", "trf"):
            raise ValueError("method kind must be 'rf' or 'trf'")
        if self.kind == "trf" and self.s_prime is None:
            raise ValueError("trf needs s_prime")

    @property
    def label(self) -> str:
        if self.kind == "rf":
            return "rf"
        tag = f"trf{self.s_prime}"
        return tag if self.expansion == "none" else f"{tag}+{self.expansion}"


@dataclass(frozen=True)
class WindowForecast:
    target_time: int
    method: str
    s_prime: int | None
    actual: float
    forecast: float
    regime: str | None = None

    @property
    def squared_error(self) -> float:
        return (self.actual - self.forecast) ** 2


@dataclass(frozen=True)
class ForecastReport:
    """All per-(window, method) forecasts of one experiment."""

    records: tuple[WindowForecast, ...]
    horizon: int
    method_labels: tuple[str, ...]

    def squared_errors(self, label: str) -> np.ndarray:
        """Squared errors of one method, in window order."""
        errs = [r.squared_error for r in self.records if r.method == label]
        if not errs:
            raise KeyError(f"no forecasts recorded for method {label!r}")
        return np.asarray(errs)

    def regime_mask(self, label: str) -> np.ndarray:
        """Boolean window mask selecting one regime label."""
        regimes = [r.regime for r in self.records if r.method == self.method_labels[0]]
        return np.asarray([g == label for g in regimes])

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "target_time": [r.target_time for r in self.records],
                "method": [r.method for r in self.records],
                "s_prime": [r.s_prime for r in self.records],
                "actual": [r.actual for r in self.records],
                "forecast": [r.forecast for r in self.records],
                "squared_error": [r.squared_error for r in self.records],
                "regime": [r.regime for r in self.records],
            }
        )


@dataclass(frozen=True)
class DmResult:
    """One-sided Diebold-Mariano test that method a outperforms method b."""

    statistic: float
    p_value: float
    horizon: int
    mean_loss_differential: float
    hac_variance: float

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "horizon": self.horizon,
            "mean_loss_differential": self.mean_loss_differential,
            "hac_variance": self.hac_variance,
        }


@dataclass(frozen=True)
class DiagnosticsRow:
    s_prime: int
    tree_mse: float
    tree_correlation: float
    n_selected: int


@dataclass(frozen=True)
class DiagnosticsCurve:
    rows: tuple[DiagnosticsRow, ...]

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "s_prime": [r.s_prime for r in self.rows],
                "tree_mse": [r.tree_mse for r in self.rows],
                "tree_correlation": [r.tree_correlation for r in self.rows],
                "n_selected": [r.n_selected for r in self.rows],
            }
        )


def _window_seed(master_seed: int, window_index: int) -> int:
    # shared by all methods in the window, so trf(s' = p) reproduces rf
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(window_index,))
    return int(ss.generate_state(1)[0])


def run_forecast_experiment(
    dataset: Dataset,
    windows: WindowPlan,
    methods,
    forest_config: ForestConfig,
    regimes: dict[int, str] | None = None,
) -> ForecastReport:
    """Fit and forecast every method over an expanding-window plan.

    Window w fits each method on rows 1..train_end and forecasts the row
    at target_time; targeting is re-run inside every window on training
    rows only.  One seed per window is derived from the master seed and
    shared across methods, so a trf method with s_prime = p produces
    bit-identical forecasts to rf.
    """
    methods = list(methods)
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ValueError(f"method labels must be unique, got {labels}")
    if not windows.windows:
        raise ValueError("empty window plan")
    if windows.windows[-1][1] > dataset.n:
        raise ValueError("window plan extends past the end of the dataset")

    records = []
    for w_idx, (train_end, target_time) in enumerate(windows.windows):
        train = dataset.select_rows(np.arange(train_end))
        x_target = dataset.features[target_time - 1]
        actual = float(dataset.response[target_time - 1])
        regime = regimes.get(target_time) if regimes is not None else None
        config = replace(forest_config, seed=_window_seed(forest_config.seed, w_idx))
        for method in methods:
            if method.kind == "rf":
                model = fit_forest(train, config)
                forecast = predict_forest(model, x_target)
                sp = None
            else:
                selection, model = fit_trf(
                    train, method.s_prime, method.expansion, config
                )
                forecast = predict_forest(model, x_target[list(selection.indices)])
                sp = method.s_prime
            records.append(
                WindowForecast(
                    target_time=target_time,
                    method=method.label,
                    s_prime=sp,
                    actual=actual,
                    forecast=float(forecast),
                    regime=regime,
                )
            )
    return ForecastReport(
        records=tuple(records), horizon=windows.horizon, method_labels=tuple(labels)
    )


def mse_ratio(
    report: ForecastReport, method_a: str, method_b: str, regime_mask=None
) -> float:
    """Mean squared forecast error of method a over that of method b.

    The optional boolean mask restricts both means to the selected
    windows.  Identical methods give exactly 1.0.
    """
    errors_a = report.squared_errors(method_a)
    errors_b = report.squared_errors(method_b)
    if regime_mask is not None:
        mask = np.asarray(regime_mask, dtype=bool)
        if mask.shape != errors_a.shape:
            raise ValueError("regime mask length does not match window count")
        if not mask.any():
            raise ValueError("regime mask selects no windows")
        errors_a, errors_b = errors_a[mask], errors_b[mask]
    denom = errors_b.mean()
    if denom == 0.0:
        raise ValueError("method_b has zero mean squared error")
    return float(errors_a.mean() / denom)


def dm_test(errors_a, errors_b, h: int) -> DmResult:
    """Diebold-Mariano test on stored squared-error loss series.

    The loss differential is d_t = loss_b(t) - loss_a(t); under the
    one-sided alternative that a outperforms b, large positive statistics
    reject.  The variance is HAC with Bartlett weights 1 - j/h on lags
    1..h-1 (for h = 1 this is the plain sample variance).  A degenerate
    variance or an identically zero differential yields (0, 0.5).
    """
    la = np.asarray(errors_a, dtype=np.float64)
    lb = np.asarray(errors_b, dtype=np.float64)
    if la.shape != lb.shape or la.ndim != 1:
        raise ValueError("loss series must be 1-D and of equal length")
    T = la.size
    if h < 1:
        raise ValueError("horizon must be >= 1")
    if T < h + 2:
        raise ValueError(f"need at least h + 2 = {h + 2} observations, got {T}")
    d = lb - la
    if np.all(d == 0.0):
        return DmResult(0.0, 0.5, h, 0.0, 0.0)
    dbar = d.mean()
    centered = d - dbar
    variance = float(centered @ centered) / T
    for j in range(1, h):
        gamma_j = float(centered[j:] @ centered[:-j]) / T
        variance += 2.0 * (1.0 - j / h) * gamma_j
    if variance <= 0.0:
        return DmResult(0.0, 0.5, h, float(dbar), float(variance))
    statistic = float(dbar / math.sqrt(variance / T))
    return DmResult(statistic, float(norm.sf(statistic)), h, float(dbar), float(variance))


def tree_diagnostics(
    dataset: Dataset,
    train_rows,
    test_rows,
    s_prime_grid,
    forest_config: ForestConfig,
) -> DiagnosticsCurve:
    """Per-targeting-level tree strength and between-tree error correlation.

    For each s' in the grid: target on the training rows, grow the forest
    on the selected columns, and compute out-of-sample per-tree errors
    e_{b,t}.  Tree MSE averages mean_t e_{b,t}^2 over trees; the error
    correlation divides the average cross-tree error covariance
    mean_t e_{b,t} e_{b',t} (over all pairs b != b') by the squared
    average root of the per-tree variances.  The pair average is computed
    from per-time sums, not an O(B^2 T) loop.  All grid cells share the
    configured seed, so the s' = p row equals ordinary-forest diagnostics.
    """
    train_rows = np.asarray(train_rows)
    test_rows = np.asarray(test_rows)
    if train_rows.size == 0 or test_rows.size == 0:
        raise ValueError("train and test row sets must be nonempty")
    if np.intersect1d(train_rows, test_rows).size:
        raise ValueError("train and test rows must be disjoint")
    grid = list(s_prime_grid)
    if not grid:
        raise ValueError("empty s_prime grid")
    if any(not 1 <= s <= dataset.p for s in grid):
        raise ValueError("every s_prime must lie in [1, p]")

    train = dataset.select_rows(train_rows)
    y_test = dataset.response[test_rows]
    B = forest_config.n_trees
    rows = []
    for s_prime in grid:
        selection, forest = fit_trf(train, s_prime, "none", forest_config)
        X_test = dataset.features[np.ix_(test_rows, np.asarray(selection.indices))]
        errors = y_test[:, None] - tree_predictions(forest, X_test)
        per_tree_mse = (errors**2).mean(axis=0)
        tree_mse = float(per_tree_mse.mean())
        if B > 1:
            cross = float(((errors.sum(axis=1)) ** 2 - (errors**2).sum(axis=1)).sum())
            mean_cross = cross / (errors.shape[0] * B * (B - 1))
        else:
            mean_cross = float("nan")
        denom = float(np.sqrt(per_tree_mse).mean()) ** 2
        correlation = mean_cross / denom if denom > 0 else float("nan")
        rows.append(
            DiagnosticsRow(
                s_prime=int(s_prime),
                tree_mse=tree_mse,
                tree_correlation=correlation,
                n_selected=len(selection.indices),
            )
        )
    return DiagnosticsCurve(rows=tuple(rows))
