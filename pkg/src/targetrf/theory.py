"""Closed-form and numerically exact calculators for the splitting theory.

Covers the hypergeometric bound on the probability that a feature draw
contains a strong predictor, the population impurity criterion and its
maximum (the maximal signal C*), the oscillating-signal bound, the
targeted-tree mean squared error, and the joint distributions of the
strong-split count with the first weak/strong split index, together with
the implied bounds on ordinary-tree MSE.

All operations are pure; returned tables are plain dicts the caller
should treat as immutable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import quad

__all__ = [
    "TheoryParams",
    "SplitSequence",
    "ScalarFn1D",
    "IntegrationError",
    "upper_bound_split_prob",
    "rho",
    "cstar_linear",
    "population_criterion",
    "population_criterion_grid",
    "cstar_numeric",
    "sine_bound",
    "floor_pow2",
    "ceil_pow2",
    "mse_targeted",
    "pmf_joint",
    "mse_bounds_ordinary",
    "snr_to_sigma2",
]

_MOMENT_TOL = 1e-8
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


class IntegrationError(RuntimeError):
    """Raised when a quadrature cannot reach the required tolerance."""


@dataclass(frozen=True)
class TheoryParams:
    """Parameter bundle shared by the bound calculators.

    p predictors of which s are strong, feature samples of size m, trees
    with L leaves, linear slope beta1 on the strong coordinate, and the
    strong-split probability rho.
    """

    p: int
    s: int
    m: int
    L: int
    beta1: float
    rho: float

    def __post_init__(self):
        if not 0 <= self.s <= self.p:
            raise ValueError("need 0 <= s <= p")
        if not 1 <= self.m <= self.p:
            raise ValueError("need 1 <= m <= p")
        if self.L < 1:
            raise ValueError("need L >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")

    @classmethod
    def with_derived_rho(cls, p: int, s: int, m: int, L: int, beta1: float) -> "TheoryParams":
        return cls(p=p, s=s, m=m, L=L, beta1=beta1, rho=rho(p, s, m))


@dataclass(frozen=True)
class SplitSequence:
    """Indicator sequence of strong splits with its summary statistics.

    Z holds L-1 indicators (1 = split drawn along a strong direction).
    N counts the ones; first_weak / first_strong are the 1-based indices
    of the first zero and the first one, both defaulting to 1 when the
    sought value never occurs.
    """

    indicators: tuple[int, ...]
    n_strong: int
    first_weak: int
    first_strong: int

    @classmethod
    def from_indicators(cls, z) -> "SplitSequence":
        z = tuple(int(v) for v in z)
        if any(v not in (0, 1) for v in z):
            raise ValueError("indicators must be 0/1")
        n_strong = sum(z)
        first_weak = next((i + 1 for i, v in enumerate(z) if v == 0), 1)
        first_strong = next((i + 1 for i, v in enumerate(z) if v == 1), 1)
        return cls(z, n_strong, first_weak, first_strong)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def upper_bound_split_prob(a: int, s_a: int, m: int) -> float:
    """Probability that a size-m draw from a predictors hits a strong one.

    Hypergeometric: 1 - C(a - s_a, m) / C(a, m), and exactly 1 once
    m > a - s_a (every draw must then contain a strong predictor).
    Exact integer arithmetic for a <= 60; log-gamma beyond that.
    """
    if not 0 <= s_a <= a:
        raise ValueError("need 0 <= s_a <= a")
    if not 1 <= m <= a:
        raise ValueError("need 1 <= m <= a")
    if m > a - s_a:
        return 1.0
    if a <= 60:
        return float(1 - Fraction(math.comb(a - s_a, m), math.comb(a, m)))
    return 1.0 - math.exp(_log_comb(a - s_a, m) - _log_comb(a, m))


def rho(p: int, s: int, m: int) -> float:
    """Probability that a tree split lands on a strong predictor when
    every feature draw that contains one uses it: identical to the
    hypergeometric draw probability with (p, s, m)."""
    return upper_bound_split_prob(p, s, m)


def cstar_linear(beta, node_intervals, strong_in_mtry) -> float:
    """Maximal signal over the strong directions available in the draw.

    For a linear regression function this is
    (1/16) * max over available strong i of beta_i^2 * Leb(A_i)^2,
    with the empty-set convention sup(empty) = 0.
    """
    beta = np.asarray(beta, dtype=np.float64)
    best = 0.0
    for i in strong_in_mtry:
        lo, hi = node_intervals[i]
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError(f"interval {node_intervals[i]} not within [0, 1]")
        best = max(best, beta[i] ** 2 * (hi - lo) ** 2 / 16.0)
    return best


@dataclass(frozen=True)
class ScalarFn1D:
    """A real function on [0, 1] for the population split criterion.

    fn must accept numpy arrays (vectorized).  variance, when known
    analytically, short-circuits normalization checks; breakpoints list
    kinks or jumps so quadrature can split the domain there.
    """

    fn: Callable
    variance: float | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return self.fn(x)


def _as_fn1d(g) -> ScalarFn1D:
    return g if isinstance(g, ScalarFn1D) else ScalarFn1D(fn=g)


def _moment(g: ScalarFn1D, a: float, b: float) -> float:
    """Integral of g over [a, b] to _MOMENT_TOL absolute accuracy."""
    pts = [p for p in g.breakpoints if a < p < b] or None
    result = quad(g.fn, a, b, points=pts, limit=200,
                  epsabs=_MOMENT_TOL * 1e-2, epsrel=0.0, full_output=1)
    value, abserr = result[0], result[1]
    if abserr > _MOMENT_TOL:
        raise IntegrationError(
            f"moment integral on [{a}, {b}] reached only {abserr:.2e} "
            f"(required {_MOMENT_TOL:.0e})"
        )
    return value


def population_criterion(g, tau: float) -> float:
    """Population impurity decrease of a split at tau along g's coordinate.

    Equals Var g(U) - tau Var(g(U) | U <= tau) - (1-tau) Var(g(U) | U > tau)
    for U uniform on [0, 1].  Expanding the conditional variances, every
    second-moment term cancels and the value reduces to first moments:

        M(tau)^2 / tau + (M(1) - M(tau))^2 / (1 - tau) - M(1)^2,

    with M(t) the integral of g over [0, t]; both moments are computed by
    adaptive quadrature to 1e-8 absolute accuracy.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    g = _as_fn1d(g)
    m_tau = _moment(g, 0.0, tau)
    m_one = m_tau + _moment(g, tau, 1.0)
    return m_tau**2 / tau + (m_one - m_tau) ** 2 / (1.0 - tau) - m_one**2


def population_criterion_grid(g, taus) -> np.ndarray:
    """population_criterion evaluated at many split points at once.

    The cumulative moment M is accumulated with composite Gauss-Legendre
    panels between consecutive grid points (split additionally at declared
    breakpoints), so the whole grid costs one pass over the function.
    """
    g = _as_fn1d(g)
    taus = np.asarray(taus, dtype=np.float64)
    if taus.ndim != 1 or taus.size == 0:
        raise ValueError("taus must be a nonempty 1-D array")
    if np.any((taus <= 0.0) | (taus >= 1.0)):
        raise ValueError("all taus must lie strictly inside (0, 1)")
    order = np.argsort(taus, kind="stable")
    edges = np.unique(
        np.concatenate([[0.0, 1.0], taus, np.asarray(g.breakpoints, dtype=np.float64)])
    )
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    nodes = a[:, None] + half[:, None] * (_GL_NODES[None, :] + 1.0)
    panel = (np.asarray(g.fn(nodes.ravel()), dtype=np.float64)
             .reshape(nodes.shape) @ _GL_WEIGHTS) * half
    cum = np.concatenate([[0.0], np.cumsum(panel)])
    m_one = cum[-1]
    m_tau = cum[np.searchsorted(edges, taus[order])]
    vals = m_tau**2 / taus[order] + (m_one - m_tau) ** 2 / (1.0 - taus[order]) - m_one**2
    out = np.empty_like(vals)
    out[order] = vals
    return out


def _golden_max(fn: Callable[[float], float], lo: float, hi: float,
                tol: float = 1e-10) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = fn(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = fn(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


def cstar_numeric(g, tau_grid_size: int = 10_000) -> float:
    """Maximal signal of g: the population criterion maximized over tau.

    Scans a uniform grid of interior split points, then refines around the
    grid argmax by golden-section search on the adaptive-quadrature
    criterion.
    """
    if tau_grid_size < 1000:
        raise ValueError("tau grid must have at least 1000 points")
    g = _as_fn1d(g)
    taus = np.linspace(0.0, 1.0, tau_grid_size + 2)[1:-1]
    vals = population_criterion_grid(g, taus)
    k = int(np.argmax(vals))
    lo = taus[k - 1] if k > 0 else taus[k] / 2.0
    hi = taus[k + 1] if k + 1 < taus.size else (1.0 + taus[k]) / 2.0
    _, refined = _golden_max(lambda t: population_criterion(g, t), lo, hi)
    return max(float(vals[k]), refined)


def sine_bound(alpha: float) -> float:
    """Upper bound 4 / (alpha - 2) on the maximal signal of the
    unit-variance oscillating regression function with frequency alpha."""
    if alpha <= 2.0:
        raise ValueError("the bound requires alpha > 2")
    return 4.0 / (alpha - 2.0)


def _floor_pow2_exact(x: Fraction) -> int:
    if x < 1:
        raise ValueError("need x >= 1")
    return 1 << ((x.numerator // x.denominator).bit_length() - 1)


def _ceil_pow2_exact(x: Fraction) -> int:
    v = _floor_pow2_exact(x)
    return v if x == v else 2 * v


def floor_pow2(x) -> float:
    """Largest power of two <= x (x >= 1).  Exact: floats are converted
    to rationals, so values sitting on a power of two are never misrounded."""
    return float(_floor_pow2_exact(Fraction(x)))


def ceil_pow2(x) -> float:
    """Smallest power of two >= x (x >= 1)."""
    return float(_ceil_pow2_exact(Fraction(x)))


def mse_targeted(L: int, beta1: float) -> float:
    """Exact MSE of the best-first targeted tree with L leaves under the
    unit-uniform linear model with slope beta1:

        beta1^2 * (7 v(L) - 3 L) / (48 v(L)^3),

    with v(L) the largest power of two <= L.  L = 1 gives beta1^2 / 12,
    the variance of the regression function itself.
    """
    if L != int(L):
        raise ValueError("leaf count must be an integer")
    L = int(L)
    if L < 1:
        raise ValueError("need L >= 1")
    v = 1 << (L.bit_length() - 1)
    return beta1**2 * (7 * v - 3 * L) / (48 * v**3)


def _binom_pmf(k: int, n: int, prob: float) -> float:
    if not 0 <= k <= n:
        return 0.0
    return math.comb(n, k) * prob**k * (1.0 - prob) ** (n - k)


def pmf_joint(L: int, rho_: float, which: str) -> dict[tuple[int, int], float]:
    """Joint pmf of (strong-split count N, first weak/strong index).

    which = "l0" gives the law of (N, first weak split index); "l1" the law
    of (N, first strong split index), for L - 1 i.i.d. strong-split
    indicators with success probability rho_.  Degenerate sequences (all
    weak or all strong) put their mass at index 1 by convention.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    if not 0.0 <= rho_ <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if which not in ("l0", "l1"):
        raise ValueError("which must be 'l0' or 'l1'")
    table: dict[tuple[int, int], float] = {}
    table[(0, 1)] = (1.0 - rho_) ** (L - 1)
    table[(L - 1, 1)] = table.get((L - 1, 1), 0.0) + rho_ ** (L - 1)
    for n in range(1, L - 1):
        if which == "l0":
            for k in range(1, n + 2):
                table[(n, k)] = table.get((n, k), 0.0) + (
                    rho_ ** (k - 1) * (1.0 - rho_) * _binom_pmf(n + 1 - k, L - 1 - k, rho_)
                )
        else:
            for k in range(1, L - n + 1):
                table[(n, k)] = table.get((n, k), 0.0) + (
                    rho_ * (1.0 - rho_) ** (k - 1) * _binom_pmf(n - 1, L - 1 - k, rho_)
                )
    return table


def mse_bounds_ordinary(L: int, rho_: float, beta1: float) -> tuple[float, float]:
    """Upper and lower bounds on the MSE of the ordinary L-leaf tree.

    Averages the targeted-tree MSE over the joint laws of the strong-split
    count and the first weak (upper) or first strong (lower) split index.
    The inner leaf-count expressions are evaluated in exact rational
    arithmetic before the power-of-two rounding, which is discontinuous.
    """
    if L < 2:
        raise ValueError("need L >= 2")
    upper = 0.0
    for (n, k), prob in pmf_joint(L, rho_, "l0").items():
        arg = Fraction(k) + Fraction(n - k + 1, k * (L - n))
        upper += prob * mse_targeted(_floor_pow2_exact(arg), beta1)
    lower = 0.0
    for (n, k), prob in pmf_joint(L, rho_, "l1").items():
        arg = 1 + Fraction(n, k)
        lower += prob * mse_targeted(_ceil_pow2_exact(arg), beta1)
    return upper, lower


def snr_to_sigma2(snr: float) -> float:
    """Noise variance implied by a signal-to-noise ratio when the
    regression function has unit variance: sigma^2 = (1 - snr) / snr."""
    if not 0.0 < snr <= 1.0:
        raise ValueError("snr must lie in (0, 1]")
    return (1.0 - snr) / snr
