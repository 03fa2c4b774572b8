"""LASSO-based selection of the targeted predictor set.

The LASSO minimizes the unscaled residual sum of squares plus an L1
penalty on the coefficients of standardized predictors (the intercept is
never penalized), so the selected set is invariant to rescaling of the
original columns.  Coefficients are reported back on the original scale.
The targeted forest is then an ordinary forest fit on the selected
columns in their original, untransformed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .datacore import Dataset
from .forest import ForestConfig, ForestModel, fit_forest

__all__ = [
    "LassoFit",
    "TargetSelection",
    "ExpansionMap",
    "lasso_fit",
    "lambda_max",
    "select_targets",
    "fit_trf",
]

# Full pairwise interactions grow as p^2 and are overspecified for wide
# panels; beyond this width the expansion falls back to powers only.
MAX_INTERACTION_P = 50


@dataclass(frozen=True)
class LassoFit:
    """Solution of the L1-penalized least squares problem at one lambda."""

    intercept: float
    coefficients: np.ndarray  # original scale, zeros for dropped columns
    lam: float
    iterations: int
    converged: bool
    dropped: tuple[int, ...] = ()  # zero-variance columns, excluded from the fit

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.nonzero(self.coefficients)[0])


@dataclass(frozen=True)
class ExpansionMap:
    """Bookkeeping from expanded targeting columns back to original ones.

    column_origins[j] holds the original predictor indices feeding the
    j-th expanded column: a singleton for plain columns and powers, a pair
    for interactions.
    """

    mode: str
    column_origins: tuple[tuple[int, ...], ...]
    column_names: tuple[str, ...]

    def __post_init__(self):
        if self.mode not in ("none", "powers_23", "powers_23_plus_interactions"):
            raise ValueError(f"unknown expansion mode: {self.mode!r}")
        if any(len(o) == 0 for o in self.column_origins):
            raise ValueError("every expanded column must map to an original index")


@dataclass(frozen=True)
class TargetSelection:
    """The targeted predictor set with the LASSO evidence behind it."""

    indices: tuple[int, ...]
    names: tuple[str, ...]
    requested: int
    lam: float
    selection_scores: tuple[float, ...]
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("selected indices must be unique")

    def to_json(self) -> str:
        return json.dumps(
            {
                "indices": list(self.indices),
                "names": list(self.names),
                "requested": self.requested,
                "lambda": self.lam,
                "selection_scores": list(self.selection_scores),
                "warnings": list(self.warnings),
            }
        )


def _standardize(X: np.ndarray):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    keep = sd > 0
    Xs = (X[:, keep] - mu[keep]) / sd[keep]
    return Xs, mu, sd, np.nonzero(~keep)[0]


def _cd_residual(Xs, yc, lam, tol, max_iter, beta0=None):
    """Cyclic coordinate descent keeping the residual vector up to date.

    The stationarity condition per coordinate soft-thresholds the partial
    correlation at lam / 2 (the factor follows from the unscaled
    sum-of-squares objective).  O(n) per coordinate update; preferred when
    the design is wider than it is tall.
    """
    n, k = Xs.shape
    beta = np.zeros(k) if beta0 is None else beta0.copy()
    norms = np.einsum("ij,ij->j", Xs, Xs)
    resid = yc - Xs @ beta
    thresh = lam / 2.0
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(k):
            if norms[j] == 0.0:
                continue
            old = beta[j]
            rho_j = Xs[:, j] @ resid + norms[j] * old
            new = math.copysign(max(abs(rho_j) - thresh, 0.0), rho_j) / norms[j]
            if new != old:
                resid += Xs[:, j] * (old - new)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            converged = True
            break
    return beta, iterations, converged


class _GramProblem:
    """Precomputed Gram form of the penalized least-squares problem.

    Caches G = X'X and c = X'y so one coordinate update costs O(p)
    instead of O(n); pays off along a warm-started penalty path.
    """

    def __init__(self, Xs: np.ndarray, yc: np.ndarray):
        self.gram = Xs.T @ Xs
        self.corr = Xs.T @ yc
        self.norms = np.diag(self.gram).copy()

    def solve(self, lam, tol, max_iter, beta0=None):
        k = self.corr.size
        beta = np.zeros(k) if beta0 is None else beta0.copy()
        gram_beta = self.gram @ beta
        thresh = lam / 2.0
        iterations = 0
        converged = False
        for iterations in range(1, max_iter + 1):
            max_delta = 0.0
            for j in range(k):
                if self.norms[j] == 0.0:
                    continue
                old = beta[j]
                rho_j = self.corr[j] - gram_beta[j] + self.norms[j] * old
                new = math.copysign(max(abs(rho_j) - thresh, 0.0), rho_j) / self.norms[j]
                if new != old:
                    gram_beta += self.gram[:, j] * (new - old)
                    beta[j] = new
                    max_delta = max(max_delta, abs(new - old))
            if max_delta < tol:
                converged = True
                break
        return beta, iterations, converged


def _coordinate_descent(Xs, yc, lam, tol, max_iter, beta0=None):
    if Xs.shape[0] >= Xs.shape[1]:
        return _GramProblem(Xs, yc).solve(lam, tol, max_iter, beta0)
    return _cd_residual(Xs, yc, lam, tol, max_iter, beta0)


def lambda_max(dataset: Dataset) -> float:
    """Smallest penalty at which every coefficient is exactly zero.

    With the unscaled sum-of-squares objective the zero vector satisfies
    the stationarity conditions iff |<x_j, y_c>| <= lambda / 2 for all
    standardized columns, hence lambda_max = 2 max_j |<x_j, y_c>|.
    """
    Xs, _, _, _ = _standardize(dataset.features)
    yc = dataset.response - dataset.response.mean()
    if Xs.shape[1] == 0:
        return 0.0
    return float(2.0 * np.max(np.abs(Xs.T @ yc)))


def lasso_fit(dataset: Dataset, lam: float, tol: float = 1e-10,
              max_iter: int = 100_000) -> LassoFit:
    """Fit the L1-penalized regression by coordinate descent.

    Predictors are standardized internally (zero mean, unit standard
    deviation); reported coefficients and intercept are on the original
    scale.  Zero-variance columns are excluded from the fit and listed in
    the result.  Non-convergence is flagged, not fatal.
    """
    if dataset.n < 2:
        raise ValueError("need at least two observations")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    Xs, mu, sd, dropped = _standardize(dataset.features)
    ybar = dataset.response.mean()
    yc = dataset.response - ybar
    beta_std, iterations, converged = _coordinate_descent(Xs, yc, lam, tol, max_iter)
    coef = np.zeros(dataset.p)
    keep = sd > 0
    coef[keep] = beta_std / sd[keep]
    intercept = float(ybar - coef @ mu)
    return LassoFit(
        intercept=intercept,
        coefficients=coef,
        lam=float(lam),
        iterations=iterations,
        converged=converged,
        dropped=tuple(int(j) for j in dropped),
    )


def _expand(dataset: Dataset, mode: str, allow_large_interactions: bool = False):
    """Build the targeting design and its map back to original columns."""
    X = dataset.features
    names = dataset.feature_names
    p = dataset.p
    warnings: list[str] = []
    if mode == "powers_23_plus_interactions" and p > MAX_INTERACTION_P and not allow_large_interactions:
        warnings.append(
            f"interaction expansion disabled for p={p} > {MAX_INTERACTION_P}; using powers only"
        )
        mode = "powers_23"
    if mode == "none":
        emap = ExpansionMap(
            mode="none",
            column_origins=tuple((j,) for j in range(p)),
            column_names=names,
        )
        return X, emap, warnings
    cols = [X]
    origins = [(j,) for j in range(p)]
    out_names = list(names)
    cols.append(X**2)
    origins += [(j,) for j in range(p)]
    out_names += [f"{nm}^2" for nm in names]
    cols.append(X**3)
    origins += [(j,) for j in range(p)]
    out_names += [f"{nm}^3" for nm in names]
    if mode == "powers_23_plus_interactions":
        inter = []
        for i in range(p):
            for j in range(i + 1, p):
                inter.append(X[:, i] * X[:, j])
                origins.append((i, j))
                out_names.append(f"{names[i]}*{names[j]}")
        if inter:
            cols.append(np.column_stack(inter))
    emap = ExpansionMap(
        mode=mode, column_origins=tuple(origins), column_names=tuple(out_names)
    )
    return np.hstack(cols), emap, warnings


def select_targets(
    dataset: Dataset,
    s_prime: int,
    expansion: str = "none",
    tol: float = 1e-8,
    max_iter: int = 10_000,
    grid_size: int = 60,
    allow_large_interactions: bool = False,
) -> tuple[TargetSelection, ExpansionMap]:
    """Choose the targeted set of roughly s_prime original predictors.

    The penalty is searched on a descending logarithmic grid from
    lambda_max down to lambda_max * 1e-4 with warm starts, then bisected
    between the bracketing grid points to hit a support of exactly
    s_prime expanded columns where possible.  If the support can only
    overshoot, the s_prime largest |standardized coefficients| are kept;
    if it never reaches s_prime, the largest achievable support is
    returned with a warning.  Expanded columns are mapped back to original
    indices and deduplicated, so with expansions the final set can differ
    in size from s_prime.  s_prime = p short-circuits to all predictors.
    """
    p = dataset.p
    if not 1 <= s_prime <= p:
        raise ValueError(f"need 1 <= s_prime <= p, got {s_prime}")
    X_work, emap, warnings = _expand(dataset, expansion, allow_large_interactions)

    if s_prime == p:
        return (
            TargetSelection(
                indices=tuple(range(p)),
                names=dataset.feature_names,
                requested=s_prime,
                lam=0.0,
                selection_scores=tuple(0.0 for _ in range(p)),
                warnings=tuple(warnings),
            ),
            emap,
        )

    Xs, _, sd_work, _ = _standardize(X_work)
    kept_cols = np.nonzero(sd_work > 0)[0]  # positions in the expanded design
    yc = dataset.response - dataset.response.mean()
    lam_hi = float(2.0 * np.max(np.abs(Xs.T @ yc))) if Xs.shape[1] else 0.0
    if lam_hi == 0.0:
        raise ValueError("response is constant; nothing to target")

    solver = (
        _GramProblem(Xs, yc).solve
        if Xs.shape[0] >= Xs.shape[1]
        else lambda lam, tol_, mi, b0: _cd_residual(Xs, yc, lam, tol_, mi, b0)
    )

    def solve(lam, warm):
        return solver(lam, tol, max_iter, warm)[0]

    def support_size(beta):
        return int(np.count_nonzero(beta))

    # descend the penalty path with warm starts until the support reaches
    # s_prime; the first exact hit is the largest penalty achieving it
    grid = np.geomspace(lam_hi, lam_hi * 1e-4, grid_size)
    chosen = None
    prev: tuple[float, np.ndarray] | None = None
    largest: tuple[float, np.ndarray] | None = None
    warm = None
    for lam in grid:
        beta = solve(float(lam), warm)
        warm = beta
        size = support_size(beta)
        if largest is None or size > support_size(largest[1]):
            largest = (float(lam), beta.copy())
        if size == s_prime:
            chosen = (float(lam), beta.copy())
            break
        if size > s_prime:
            # overshot between grid points: bisect in log space for an
            # exact hit, falling back to the smallest overshoot seen
            overshoot = (float(lam), beta.copy())
            if prev is not None:
                lo, hi = float(lam), prev[0]
                warm_b = prev[1].copy()
                for _ in range(30):
                    mid = math.sqrt(lo * hi)
                    beta_m = solve(mid, warm_b)
                    warm_b = beta_m
                    size_m = support_size(beta_m)
                    if size_m == s_prime:
                        chosen = (mid, beta_m.copy())
                        break
                    if size_m < s_prime:
                        hi = mid
                    elif size_m < support_size(overshoot[1]):
                        overshoot = (mid, beta_m.copy())
                        lo = mid
                    else:
                        lo = mid
            if chosen is None:
                chosen = overshoot
            break
        prev = (float(lam), beta.copy())

    if chosen is None:
        chosen = largest
        warnings.append(
            f"support never reached {s_prime} on the penalty grid; "
            f"returning {support_size(chosen[1])} predictors"
        )

    lam_star, beta_star = chosen
    active = np.nonzero(beta_star)[0]
    scores = np.abs(beta_star[active])
    if active.size > s_prime:
        keep = np.argsort(-scores, kind="stable")[:s_prime]
        active, scores = active[keep], scores[keep]

    # map expanded columns back to original predictors, best score wins
    per_original: dict[int, float] = {}
    for col, score in zip(kept_cols[active], scores):
        for orig in emap.column_origins[col]:
            per_original[orig] = max(per_original.get(orig, 0.0), float(score))
    ordered = sorted(per_original, key=lambda j: (-per_original[j], j))

    selection = TargetSelection(
        indices=tuple(ordered),
        names=tuple(dataset.feature_names[j] for j in ordered),
        requested=s_prime,
        lam=float(lam_star),
        selection_scores=tuple(per_original[j] for j in ordered),
        warnings=tuple(warnings),
    )
    return selection, emap


def fit_trf(
    dataset: Dataset,
    s_prime: int,
    expansion: str = "none",
    forest_config: ForestConfig | None = None,
) -> tuple[TargetSelection, ForestModel]:
    """Targeted random forest: select predictors, then fit on them only.

    The forest sees the selected columns in their original form.  Unless
    the tree config pins an explicit mtry, the ceil(a/3) default applies
    to the reduced predictor count a = |selected|.
    """
    config = forest_config if forest_config is not None else ForestConfig()
    selection, _ = select_targets(dataset, s_prime, expansion)
    sub = dataset.select_columns(selection.indices)
    return selection, fit_forest(sub, config)
