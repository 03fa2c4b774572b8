"""Synthetic generators and Monte Carlo splitting-probability experiments.

All generators put the single strong predictor in the first coordinate,
draw features uniformly on the unit cube, add Gaussian noise sized by the
signal-to-noise ratio, and normalize the regression function to unit
variance.  Replications use counter-derived seeds, so experiments are
reproducible and could be distributed without changing their results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .cart import column_split_scan
from .datacore import Dataset
from .theory import ScalarFn1D, population_criterion_grid, snr_to_sigma2

__all__ = [
    "Dgp",
    "RhoEstimate",
    "sample",
    "sample_sparse_linear",
    "estimate_split_prob",
    "estimate_delta",
    "sweep",
    "SWEEP_COLUMNS",
]

PIECEWISE_BREAKPOINTS = (0.25, 0.5, 0.75)


def _piecewise_raw(u):
    u = np.asarray(u, dtype=np.float64)
    return np.select(
        [u < 0.25, u < 0.5, u < 0.75],
        [(2 * u + 1) ** 2 / 2, u + 3 / 8, -5 * (2 * u - 6 / 5) ** 2 + 43 / 40],
        default=2 * u - 7 / 8,
    )


@lru_cache(maxsize=1)
def _piecewise_scale() -> float:
    """1 / sd of the raw piecewise polynomial under a uniform input."""
    pts = list(PIECEWISE_BREAKPOINTS)
    mean = quad(_piecewise_raw, 0, 1, points=pts, limit=100)[0]
    second = quad(lambda u: _piecewise_raw(u) ** 2, 0, 1, points=pts, limit=100)[0]
    return 1.0 / math.sqrt(second - mean**2)


@dataclass(frozen=True)
class Dgp:
    """A unit-variance single-strong-predictor data generating process.

    kind is one of linear, sine, quadratic, piecewise15.  For sine, alpha
    should be a multiple of 2*pi so the sqrt(2) amplitude gives exactly
    unit variance.  The implied noise variance is (1 - snr) / snr.
    """

    kind: str
    p: int = 1
    snr: float = 1.0
    alpha: float = 4 * math.pi

    def __post_init__(self):
        if self.kind not in ("linear", "sine", "quadratic", "piecewise15"):
            raise ValueError(f"unknown DGP kind: {self.kind!r}")
        if self.p < 1:
            raise ValueError("need p >= 1")
        if not 0.0 < self.snr <= 1.0:
            raise ValueError("snr must lie in (0, 1]")
        if self.kind == "sine" and self.alpha <= 0:
            raise ValueError("sine frequency must be positive")

    @property
    def sigma2(self) -> float:
        return snr_to_sigma2(self.snr)

    def f(self, u):
        """Regression function applied to the strong coordinate."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "linear":
            return math.sqrt(12.0) * u
        if self.kind == "sine":
            return math.sqrt(2.0) * np.sin(self.alpha * u)
        if self.kind == "quadratic":
            return math.sqrt(180.0) * (u - 0.5) ** 2
        return _piecewise_scale() * _piecewise_raw(u)

    def scalar_fn(self) -> ScalarFn1D:
        breakpoints = PIECEWISE_BREAKPOINTS if self.kind == "piecewise15" else ()
        return ScalarFn1D(fn=self.f, variance=1.0, breakpoints=breakpoints)


@dataclass(frozen=True)
class RhoEstimate:
    """Monte Carlo estimate of the strong-split probability."""

    estimate: float
    standard_error: float
    reps: int
    tie_rate: float
    dgp: Dgp
    n: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.estimate <= 1.0:
            raise ValueError("estimate must lie in [0, 1]")


def sample(dgp: Dgp, n: int, seed) -> Dataset:
    """Draw n observations: X uniform on [0,1]^p, Y = f(X1) + sigma * eps."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    X = rng.random((n, dgp.p))
    y = dgp.f(X[:, 0]) + math.sqrt(dgp.sigma2) * rng.standard_normal(n)
    return Dataset(
        features=X,
        feature_names=tuple(f"x{j + 1}" for j in range(dgp.p)),
        response=y,
    )


def sample_sparse_linear(
    n: int, p: int, s: int, snr: float, seed, decay: float | None = None
) -> tuple[Dataset, tuple[int, ...]]:
    """Sparse linear design with s strong predictors in the leading columns.

    The strong slopes are scaled so the regression function has unit
    variance; by default they are equal, while a decay factor in (0, 1)
    spreads the signal-variance shares geometrically (slope i carries a
    decay^i share), concentrating the signal in the leading predictors.
    Noise is Gaussian with variance (1 - snr) / snr.  Returns the dataset
    and the strong column indices.
    """
    if not 1 <= s <= p:
        raise ValueError("need 1 <= s <= p")
    if decay is not None and not 0.0 < decay <= 1.0:
        raise ValueError("decay must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    shares = np.full(s, 1.0 / s) if decay is None else decay ** np.arange(s)
    shares = shares / shares.sum()
    slopes = np.sqrt(12.0 * shares)
    X = rng.random((n, p))
    y = X[:, :s] @ slopes + math.sqrt(snr_to_sigma2(snr)) * rng.standard_normal(n)
    dataset = Dataset(
        features=X,
        feature_names=tuple(f"x{j + 1}" for j in range(p)),
        response=y,
    )
    return dataset, tuple(range(s))


def _rep_seed(seed: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(rep,))


def _root_argmax(dataset: Dataset) -> tuple[int, int]:
    """Direction of the root-node CART argmax and the number of tied maxima.

    Scans every observed threshold of every direction; ties (exact float
    equality of the maximal decrease) break toward the lower index.
    """
    n = dataset.n
    best_dir = 0
    best_val = -np.inf
    ties = 1
    for i in range(dataset.p):
        _, dec, _ = column_split_scan(dataset.features[:, i], dataset.response, n)
        v = float(dec.max())
        if v > best_val:
            best_dir, best_val, ties = i, v, 1
        elif v == best_val:
            ties += 1
    return best_dir, ties


def estimate_split_prob(dgp: Dgp, n: int, reps: int, seed: int) -> RhoEstimate:
    """Monte Carlo probability that the root split lands on the strong axis.

    Each replication draws a fresh sample, evaluates the impurity decrease
    at every observed value of every coordinate, and scores a success when
    the global argmax sits on the first (strong) coordinate.
    """
    if reps < 100:
        raise ValueError("need reps >= 100")
    hits = 0
    tie_events = 0
    for r in range(reps):
        data = sample(dgp, n, _rep_seed(seed, r))
        best_dir, ties = _root_argmax(data)
        if best_dir == 0:
            hits += 1
        if ties > 1:
            tie_events += 1
    est = hits / reps
    return RhoEstimate(
        estimate=est,
        standard_error=math.sqrt(est * (1.0 - est) / reps),
        reps=reps,
        tie_rate=tie_events / reps,
        dgp=dgp,
        n=n,
        seed=seed,
    )


def estimate_delta(dgp: Dgp, n: int, subset, seed) -> float:
    """Empirical impurity-estimation error at the root node.

    The supremum of |L_n - L*| over the given directions and the observed
    thresholds, with the population criterion along the strong coordinate
    and identically zero along weak ones.
    """
    dirs = sorted(set(subset))
    if any(i < 0 or i >= dgp.p for i in dirs):
        raise ValueError("subset indices out of range")
    data = sample(dgp, n, seed)
    g = dgp.scalar_fn()
    worst = 0.0
    for i in dirs:
        taus, dec, _ = column_split_scan(data.features[:, i], data.response, n)
        if i == 0:
            inside = (taus > 0.0) & (taus < 1.0)
            lstar = np.zeros_like(dec)
            lstar[inside] = population_criterion_grid(g, taus[inside])
        else:
            lstar = 0.0
        worst = max(worst, float(np.max(np.abs(dec - lstar))))
    return worst


SWEEP_COLUMNS = ("kind", "p", "n", "snr", "alpha", "reps", "rho_hat", "se", "tie_rate", "seed")


def _sweep_cell(args) -> dict:
    cell, reps, cell_seed = args
    kind, p, n, snr = cell[:4]
    alpha = cell[4] if len(cell) > 4 and cell[4] is not None else 4 * math.pi
    dgp = Dgp(kind=kind, p=int(p), snr=float(snr), alpha=float(alpha))
    est = estimate_split_prob(dgp, int(n), reps, cell_seed)
    return {
        "kind": kind,
        "p": int(p),
        "n": int(n),
        "snr": float(snr),
        "alpha": float(alpha) if kind == "sine" else float("nan"),
        "reps": reps,
        "rho_hat": est.estimate,
        "se": est.standard_error,
        "tie_rate": est.tie_rate,
        "seed": cell_seed,
    }


def sweep(grid, reps: int, seed: int, workers: int = 1) -> list[dict]:
    """Run estimate_split_prob over a grid of (kind, p, n, snr[, alpha]).

    Cell seeds are derived from the master seed and the cell index, so the
    table is reproducible and independent of scheduling.  Rows come back
    in grid order with the SWEEP_COLUMNS fields.
    """
    cells = [tuple(c) for c in grid]
    seeds = [
        int(np.random.SeedSequence(entropy=seed, spawn_key=(k,)).generate_state(1)[0])
        for k in range(len(cells))
    ]
    tasks = [(cell, reps, s) for cell, s in zip(cells, seeds)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_cell, tasks))
    return [_sweep_cell(t) for t in tasks]
