"""Data ingestion, series transforms, target construction, and window plans.

Everything here is a pure function over immutable inputs; nothing keeps
state between calls, so it is safe to use from concurrent tasks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

__all__ = [
    "Dataset",
    "WindowPlan",
    "TRANSFORM_ORDERS",
    "load_csv",
    "load_transform_spec",
    "apply_transform",
    "transform_features",
    "build_target",
    "expanding_windows",
]

# Observations lost at the head of a series by each transform code:
# 1 level, 2 diff, 3 double diff, 4 log, 5 diff log, 6 double diff log,
# 7 diff of percent change.
TRANSFORM_ORDERS: dict[int, int] = {1: 0, 2: 1, 3: 2, 4: 0, 5: 1, 6: 2, 7: 2}


@dataclass(frozen=True)
class Dataset:
    """A regression sample: feature matrix, named columns, and response.

    Invariants (checked at construction): row counts agree, column names
    are unique and match the matrix width, and no value is NaN.
    """

    features: np.ndarray
    feature_names: tuple[str, ...]
    response: np.ndarray
    time_index: tuple | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        response = np.asarray(self.response, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "response", response)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if features.shape[0] != response.shape[0]:
            raise ValueError(
                f"feature rows ({features.shape[0]}) != response length "
                f"({response.shape[0]})"
            )
        if len(self.feature_names) != features.shape[1]:
            raise ValueError("feature_names length != number of columns")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        if np.isnan(features).any() or np.isnan(response).any():
            raise ValueError("dataset contains NaN values")
        if self.time_index is not None:
            ti = tuple(self.time_index)
            if len(ti) != features.shape[0]:
                raise ValueError("time_index length != number of rows")
            object.__setattr__(self, "time_index", ti)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def select_columns(self, indices) -> "Dataset":
        """Dataset restricted to the given feature columns (order kept)."""
        idx = list(indices)
        return Dataset(
            features=self.features[:, idx],
            feature_names=tuple(self.feature_names[i] for i in idx),
            response=self.response,
            time_index=self.time_index,
        )

    def select_rows(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            features=self.features[rows],
            feature_names=self.feature_names,
            response=self.response[rows],
            time_index=tuple(self.time_index[i] for i in rows)
            if self.time_index is not None
            else None,
        )


@dataclass(frozen=True)
class WindowPlan:
    """Expanding-window bookkeeping for h-step-ahead forecasting.

    Each window is a ``(train_end, target_time)`` pair of 1-based times:
    the model is fit on rows 1..train_end and forecasts the row at
    ``target_time = train_end + h``.  The h-period gap keeps the training
    responses fully observed at forecast origination (no look-ahead).
    """

    initial_length: int
    horizon: int
    windows: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        for train_end, target_time in self.windows:
            if train_end < self.initial_length:
                raise ValueError("window train_end below initial_length")
            if target_time != train_end + self.horizon:
                raise ValueError("target_time must equal train_end + horizon")
        ends = [w[0] for w in self.windows]
        if any(b <= a for a, b in zip(ends, ends[1:])):
            raise ValueError("windows must be strictly increasing")

    def __len__(self) -> int:
        return len(self.windows)


def load_csv(path, response_column: str) -> tuple[Dataset, int]:
    """Load a headered CSV into a Dataset, dropping incomplete rows.

    Every cell is parsed as a locale-independent 64-bit float; rows with
    any missing or non-numeric cell are dropped.  Returns the dataset and
    the number of dropped rows.
    """
    try:
        raw = pd.read_csv(path)
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}")
    if response_column not in raw.columns:
        raise KeyError(f"response column {response_column!r} not in header")
    numeric = raw.apply(lambda col: pd.to_numeric(col, errors="coerce"))
    keep = ~numeric.isna().any(axis=1)
    dropped = int((~keep).sum())
    numeric = numeric.loc[keep]
    if numeric.shape[0] == 0:
        raise ValueError("no usable rows after dropping incomplete ones")
    response = numeric.pop(response_column).to_numpy(dtype=np.float64)
    dataset = Dataset(
        features=numeric.to_numpy(dtype=np.float64),
        feature_names=tuple(numeric.columns),
        response=response,
    )
    return dataset, dropped


def load_transform_spec(path) -> dict[str, int]:
    """Read a (series_name, code) CSV mapping columns to transform codes."""
    spec = pd.read_csv(path)
    if not {"series_name", "code"} <= set(spec.columns):
        raise KeyError("transform spec needs columns (series_name, code)")
    return {str(r.series_name): int(r.code) for r in spec.itertuples()}


def apply_transform(series, code: int) -> np.ndarray:
    """Apply one of the seven stationarity transforms to a series.

    The first ``order`` observations implied by the differencing order are
    removed, so the output is shorter than the input by that amount.
    """
    if code not in TRANSFORM_ORDERS:
        raise ValueError(f"transform code must be in 1..7, got {code}")
    x = np.asarray(series, dtype=np.float64)
    order = TRANSFORM_ORDERS[code]
    if x.size < order + 1:
        raise ValueError(f"series too short for code {code}")
    if code in (4, 5, 6) and np.any(x <= 0):
        raise ValueError(f"log transform (code {code}) needs positive values")
    if code == 1:
        return x.copy()
    if code == 2:
        return np.diff(x)
    if code == 3:
        return np.diff(x, n=2)
    if code == 4:
        return np.log(x)
    if code == 5:
        return np.diff(np.log(x))
    if code == 6:
        return np.diff(np.log(x), n=2)
    # code 7: difference of the percent change x_t / x_{t-1} - 1
    if np.any(x[:-1] == 0.0):
        raise ValueError("percent change undefined: zero values in series")
    return np.diff(x[1:] / x[:-1] - 1.0)


def transform_features(dataset: Dataset, codes: dict[str, int]) -> tuple[Dataset, int]:
    """Transform feature columns per a code map and re-align all rows.

    Columns absent from ``codes`` are kept at level.  All columns and the
    response are trimmed at the head by the maximum differencing order so
    the rows stay aligned; the trim count is returned.
    """
    unknown = set(codes) - set(dataset.feature_names)
    if unknown:
        raise KeyError(f"transform spec names unknown columns: {sorted(unknown)}")
    orders = [TRANSFORM_ORDERS[codes.get(name, 1)] for name in dataset.feature_names]
    trim = max(orders, default=0)
    columns = []
    for j, name in enumerate(dataset.feature_names):
        out = apply_transform(dataset.features[:, j], codes.get(name, 1))
        columns.append(out[trim - (dataset.n - out.size):])
    transformed = Dataset(
        features=np.column_stack(columns) if columns else np.empty((dataset.n - trim, 0)),
        feature_names=dataset.feature_names,
        response=dataset.response[trim:],
        time_index=dataset.time_index[trim:] if dataset.time_index else None,
    )
    return transformed, trim


def build_target(series, h: int, kind: str, risk_free=None) -> np.ndarray:
    """Construct an h-step forecast target aligned at origination time.

    kind:
      ``log_diff``             Y_t = log Z_{t+h} - log Z_t
      ``second_log_diff_cum``  sum over the horizon of the second log
                               difference, which telescopes to
                               (log Z_{t+h} - log Z_{t+h-1}) - (log Z_t - log Z_{t-1});
                               one extra leading observation is consumed.
      ``excess``               Y_t = R_{t+h} - Rf_{t+h} for return series R
                               and risk-free series Rf of equal length.
    """
    z = np.asarray(series, dtype=np.float64)
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    if h >= z.size:
        raise ValueError(f"horizon {h} >= series length {z.size}")
    if kind == "log_diff":
        if h < 1:
            raise ValueError("log_diff target needs h >= 1")
        if np.any(z <= 0):
            raise ValueError("log target needs positive values")
        logs = np.log(z)
        return logs[h:] - logs[:-h]
    if kind == "second_log_diff_cum":
        if h < 1:
            raise ValueError("second_log_diff_cum target needs h >= 1")
        if np.any(z <= 0):
            raise ValueError("log target needs positive values")
        if z.size < h + 2:
            raise ValueError("series too short for accumulated acceleration")
        dlog = np.diff(np.log(z))  # dlog[t-1] = log Z_t - log Z_{t-1}
        return dlog[h:] - dlog[:-h]
    if kind == "excess":
        if risk_free is None:
            raise ValueError("excess target needs a risk_free series")
        rf = np.asarray(risk_free, dtype=np.float64)
        if rf.size != z.size:
            raise ValueError("risk_free length must match returns length")
        return z[h:] - rf[h:] if h > 0 else z - rf
    raise ValueError(f"unknown target kind: {kind!r}")


def expanding_windows(n_total: int, initial_length: int, h: int) -> WindowPlan:
    """Expanding-window plan: one window per feasible forecast origin.

    train_end runs from ``initial_length`` to ``n_total - h``, giving
    ``n_total - h - initial_length + 1`` windows.
    """
    if initial_length < 1 or h < 1:
        raise ValueError("initial_length and h must be >= 1")
    if initial_length + h > n_total:
        raise ValueError(
            f"infeasible plan: initial_length ({initial_length}) + h ({h}) "
            f"> n_total ({n_total})"
        )
    windows = tuple(
        (train_end, train_end + h)
        for train_end in range(initial_length, n_total - h + 1)
    )
    return WindowPlan(initial_length=initial_length, horizon=h, windows=windows)
