"""Recombination weights, the tie-aware weight function and Lipschitz data."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln, ndtr, xlog1py, xlogy
from scipy.stats import rankdata

from ..errors import NonFiniteValueError, WeightError
from .order_stats import QuadratureGrid, default_first_method, build_moment_table

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-12
MIN_GRID_POINTS = 1000


class WeightScheme(str, Enum):
    OPTIMAL = "optimal"
    OPTIMAL_POSITIVE = "optimal_positive"
    CMA_LOG = "cma_log"
    TRUNCATION = "truncation"
    CUSTOM = "custom"


class LipschitzMethod(str, Enum):
    GRID_SUPREMUM = "grid_supremum"
    ANALYTIC_BOUND = "analytic_bound"


@dataclass(frozen=True, eq=False)
class WeightVector:
    """
    Weights w_1 ≥ ... ≥ w_λ with Σ|w_k| = 1.

    The all-zero vector is accepted as a degenerate "no move" recombination.
    """

    w: np.ndarray
    scheme: WeightScheme = WeightScheme.CUSTOM
    mu: Optional[int] = None

    def __post_init__(self):
        w = np.array(self.w, dtype=float).ravel()
        if w.size == 0:
            raise WeightError("Weight vector is empty")
        if not np.all(np.isfinite(w)):
            raise WeightError("Weights must be finite")
        scale = max(float(np.abs(w).max()), 1.0)
        if np.any(np.diff(w) > NORMALIZATION_TOL * scale):
            raise WeightError("Weights must be sorted nonincreasing")
        total = float(np.abs(w).sum())
        if total != 0.0 and abs(total - 1.0) > NORMALIZATION_TOL:
            raise WeightError(f"Σ|w| = {total!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "scheme", WeightScheme(self.scheme))

    @property
    def lam(self) -> int:
        return int(self.w.size)

    @property
    def mu_w(self) -> float:
        """Effective variance selection mass 1/Σw²."""
        sq = float(np.dot(self.w, self.w))
        return 1.0 / sq if sq > 0.0 else float("inf")

    @property
    def label(self) -> str:
        if self.scheme is WeightScheme.TRUNCATION:
            return f"truncation_mu{self.mu}"
        return self.scheme.value


@dataclass(frozen=True)
class LipschitzConstants:
    l1: float
    l2: float
    l3: float
    method: LipschitzMethod

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.l1, self.l2, self.l3


# ---------------------------------------------------------------------------
# Weight schemes
# ---------------------------------------------------------------------------

def make_optimal(e1: Sequence[float]) -> WeightVector:
    """
    Optimal weights w_k = -E[N_{k:λ}] / Σ|E[N_{i:λ}]|.

    Raises:
        WeightError: For λ = 1, where every first moment is zero
    """
    e1 = np.asarray(e1, dtype=float)
    total = np.abs(e1).sum()
    if e1.size < 2 or total == 0.0:
        raise WeightError("optimal weights undefined for λ=1")
    w = -e1 / total
    w = 0.5 * (w - w[::-1])
    return WeightVector(w=w / np.abs(w).sum(), scheme=WeightScheme.OPTIMAL)


def make_optimal_positive(e1: Sequence[float]) -> WeightVector:
    """Positive half of the optimal weights, renormalized."""
    w = np.maximum(make_optimal(e1).w, 0.0)
    return WeightVector(w=w / w.sum(), scheme=WeightScheme.OPTIMAL_POSITIVE)


def make_cma_log(lam: int) -> WeightVector:
    """w_k ∝ max(ln((λ+1)/2) - ln k, 0)."""
    if lam < 2:
        raise WeightError(f"cma_log weights need λ ≥ 2, got {lam}")
    k = np.arange(1, lam + 1)
    raw = np.maximum(np.log((lam + 1) / 2.0) - np.log(k), 0.0)
    return WeightVector(w=raw / raw.sum(), scheme=WeightScheme.CMA_LOG)


def make_truncation(lam: int, mu: int) -> WeightVector:
    """w_k = 1/μ for k ≤ μ, 0 otherwise."""
    if not 1 <= mu <= lam:
        raise WeightError(f"truncation needs 1 ≤ μ ≤ λ, got μ={mu}, λ={lam}")
    w = np.zeros(lam)
    w[:mu] = 1.0 / mu
    return WeightVector(w=w, scheme=WeightScheme.TRUNCATION, mu=int(mu))


def make_custom(values: Sequence[float]) -> WeightVector:
    """Accept user weights, re-sorting and re-normalizing them if needed."""
    w = np.asarray(values, dtype=float).ravel()
    if w.size == 0 or not np.all(np.isfinite(w)):
        raise WeightError("Custom weights must be a nonempty finite sequence")
    if np.any(np.diff(w) > 0.0):
        logger.warning("Custom weights were not nonincreasing; sorting them")
        w = np.sort(w)[::-1]
    total = np.abs(w).sum()
    if total == 0.0:
        return WeightVector(w=w, scheme=WeightScheme.CUSTOM)
    if abs(total - 1.0) > NORMALIZATION_TOL:
        logger.warning(f"Custom weights had Σ|w| = {total:.6g}; renormalizing")
        w = w / total
    return WeightVector(w=w, scheme=WeightScheme.CUSTOM)


def make_weights(
    scheme: str,
    lam: int,
    e1: Optional[Sequence[float]] = None,
    mu: Optional[int] = None,
    values: Optional[Sequence[float]] = None,
) -> WeightVector:
    """Build weights by scheme name; first moments are computed when absent."""
    scheme = WeightScheme(scheme)
    if scheme is WeightScheme.CUSTOM:
        if values is None:
            raise WeightError("custom scheme needs weight values")
        wv = make_custom(values)
        if wv.lam != lam:
            raise WeightError(f"custom weights have length {wv.lam}, λ is {lam}")
        return wv
    if scheme is WeightScheme.CMA_LOG:
        return make_cma_log(lam)
    if scheme is WeightScheme.TRUNCATION:
        if mu is None:
            raise WeightError("truncation scheme needs μ")
        return make_truncation(lam, mu)

    if e1 is None:
        e1 = build_moment_table(lam, default_first_method(lam)).e1
    if scheme is WeightScheme.OPTIMAL:
        return make_optimal(e1)
    return make_optimal_positive(e1)


# ---------------------------------------------------------------------------
# Tie-aware weight function
# ---------------------------------------------------------------------------

def weight_values(fvalues: np.ndarray, weights: WeightVector) -> np.ndarray:
    """
    W(i) for every candidate (rows of a 2-D input are independent populations).

    Tied candidates receive the arithmetic mean of the weights of the ranks
    they jointly occupy: W(i) = Σ_{k=l_i+1}^{u_i} w_k / (u_i - l_i) with l_i the
    number of strictly better and u_i the number of weakly better candidates.
    """
    f = np.asarray(fvalues, dtype=float)
    if not np.all(np.isfinite(f)):
        raise NonFiniteValueError("Objective values must be finite to rank candidates")
    rows = np.atleast_2d(f)
    if rows.shape[-1] != weights.lam:
        raise WeightError(f"{rows.shape[-1]} candidates but λ={weights.lam} weights")

    strictly_better = rankdata(rows, method="min", axis=1).astype(np.intp) - 1
    weakly_better = rankdata(rows, method="max", axis=1).astype(np.intp)
    cumulative = np.concatenate(([0.0], np.cumsum(weights.w)))
    W = (cumulative[weakly_better] - cumulative[strictly_better]) / (weakly_better - strictly_better)
    return W if f.ndim == 2 else W[0]


def weight_function(i: int, fvalues: Sequence[float], weights: WeightVector) -> float:
    """W(i) of candidate ``i`` (0-based)."""
    return float(weight_values(np.asarray(fvalues, dtype=float), weights)[i])


# ---------------------------------------------------------------------------
# u1, u2, u3
# ---------------------------------------------------------------------------

def _log_binom_pmf(k, n, p):
    return (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
            + xlogy(k, p) + xlog1py(n - k, -p))


def _log_trinom_pmf(a, b, n, p, r):
    rest = np.clip(1.0 - p - r, 0.0, 1.0)
    return (gammaln(n + 1.0) - gammaln(a + 1.0) - gammaln(b + 1.0) - gammaln(n - a - b + 1.0)
            + xlogy(a, p) + xlogy(b, r) + xlogy(n - a - b, rest))


def _binomial_series(coef: np.ndarray, n: int, p) -> np.ndarray:
    """Σ_j coef[j]·P_b(j; n, p) for an array of p."""
    p = np.clip(np.atleast_1d(np.asarray(p, dtype=float)), 0.0, 1.0)
    j = np.arange(n + 1, dtype=float)
    mass = np.exp(_log_binom_pmf(j[None, :], float(n), p[:, None]))
    return mass @ coef


def u1(p, weights: WeightVector) -> np.ndarray:
    """u1(p) = Σ_k w_k P_b(k-1; λ-1, p)."""
    return _binomial_series(weights.w, weights.lam - 1, p)


def u2(p, weights: WeightVector) -> np.ndarray:
    """u2(p) = Σ_k w_k² P_b(k-1; λ-1, p)."""
    return _binomial_series(weights.w ** 2, weights.lam - 1, p)


def u3(p, q, weights: WeightVector) -> np.ndarray:
    """u3(p, q) = Σ_{k<l} w_k w_l P_t(k-1, l-k-1; λ-2, min(p,q), |q-p|)."""
    p = np.clip(np.atleast_1d(np.asarray(p, dtype=float)), 0.0, 1.0)
    q = np.clip(np.atleast_1d(np.asarray(q, dtype=float)), 0.0, 1.0)
    p, q = np.broadcast_arrays(p, q)
    lam = weights.lam
    if lam < 2:
        return np.zeros(p.shape)

    k, l = np.triu_indices(lam, k=1)
    coef = weights.w[k] * weights.w[l]
    a = k.astype(float)
    b = (l - k - 1).astype(float)
    low = np.minimum(p, q).ravel()
    gap = np.abs(q - p).ravel()
    mass = np.exp(_log_trinom_pmf(a[None, :], b[None, :], float(lam - 2), low[:, None], gap[:, None]))
    return (mass @ coef).reshape(p.shape)


def u1_moment_integral(weights: WeightVector, grid: Optional[QuadratureGrid] = None) -> float:
    """λ·∫ u1(Φ(z))·z·φ(z) dz, which equals Σ w_i E[N_{i:λ}]."""
    grid = grid or QuadratureGrid(panels=256)
    z, wq = grid.points()
    density = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return float(weights.lam * np.dot(wq, u1(ndtr(z), weights) * z * density))


# ---------------------------------------------------------------------------
# Lipschitz constants
# ---------------------------------------------------------------------------

def _refine_1d(objective: Callable[[float], float], lo: float, hi: float) -> float:
    if hi <= lo:
        return objective(lo)
    res = minimize_scalar(lambda x: -objective(x), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return max(objective(lo), objective(hi), -float(res.fun))


def _sup_abs_on_unit_interval(series: Callable[[np.ndarray], np.ndarray], grid_points: int) -> float:
    grid = np.linspace(0.0, 1.0, grid_points)
    values = np.abs(series(grid))
    j = int(np.argmax(values))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, grid_points - 1)]
    refined = _refine_1d(lambda x: float(np.abs(series(np.array([x])))[0]), lo, hi)
    return max(float(values[j]), refined)


class _TrinomialSeries:
    """Σ_{a+b≤n} coef[a,b]·P_t(a, b; n, p, r) on the simplex p, r ≥ 0, p + r ≤ 1."""

    def __init__(self, coef: np.ndarray, n: int, chunk: int = 256):
        self.n = n
        self.chunk = chunk
        a, b = np.nonzero(np.tri(n + 1, dtype=bool)[::-1])
        self.a = a.astype(float)
        self.b = b.astype(float)
        self.coef = coef[a, b]

    def __call__(self, p: np.ndarray, r: np.ndarray) -> np.ndarray:
        p = np.atleast_1d(p)
        r = np.atleast_1d(r)
        out = np.empty(p.size)
        for start in range(0, p.size, self.chunk):
            sl = slice(start, start + self.chunk)
            logm = _log_trinom_pmf(self.a[None, :], self.b[None, :], float(self.n),
                                   p[sl, None], r[sl, None])
            out[sl] = np.exp(logm) @ self.coef
        return out

    def sup_abs(self, grid_points: int, sweeps: int = 4) -> float:
        m = int(np.ceil(np.sqrt(2.0 * grid_points)))
        axis = np.linspace(0.0, 1.0, m)
        pp, rr = np.meshgrid(axis, axis, indexing="ij")
        inside = pp + rr <= 1.0 + 1e-15
        p_pts = pp[inside]
        r_pts = np.clip(rr[inside], 0.0, 1.0 - p_pts)
        values = np.abs(self(p_pts, r_pts))
        j = int(np.argmax(values))
        best = float(values[j])
        p0, r0 = float(p_pts[j]), float(r_pts[j])

        def at(p, r):
            return float(np.abs(self(np.array([p]), np.array([r])))[0])

        for _ in range(sweeps):
            res = minimize_scalar(lambda x: -at(x, r0), bounds=(0.0, 1.0 - r0), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun > best:
                best, p0 = float(-res.fun), float(res.x)
            res = minimize_scalar(lambda x: -at(p0, x), bounds=(0.0, 1.0 - p0), method="bounded",
                                  options={"xatol": 1e-12})
            if -res.fun > best:
                best, r0 = float(-res.fun), float(res.x)
        return best


def _l3_coefficients(w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Coefficient grids of the two trinomial sums defining L3 (n = λ-3)."""
    n = w.size - 3
    a, b = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    valid = a + b <= n
    l_idx = np.where(valid, a + b + 2, 0)
    coef_a = np.where(valid, w[l_idx] * (w[a + 1] - w[a]), 0.0)
    coef_b = np.where(valid, w[a] * (w[l_idx] - w[np.maximum(l_idx - 1, 0)]), 0.0)
    return coef_a, coef_b


def lipschitz_grid(weights: WeightVector, grid_points: int = 2000) -> LipschitzConstants:
    """
    L1, L2, L3 as numerical suprema.

    One-dimensional sums are scanned on a uniform grid over [0, 1] and refined by a
    bounded scalar search around the grid argmax; L3 is scanned on the triangle
    0 ≤ p ≤ q ≤ 1 and refined coordinate-wise.

    Args:
        weights: Recombination weights
        grid_points: Grid size (≥ 1000)
    """
    if grid_points < MIN_GRID_POINTS:
        raise WeightError(f"grid_points must be ≥ {MIN_GRID_POINTS}, got {grid_points}")
    w = weights.w
    lam = weights.lam
    if lam < 2:
        return LipschitzConstants(0.0, 0.0, 0.0, LipschitzMethod.GRID_SUPREMUM)

    dw = np.diff(w)
    dw2 = np.diff(w * w)
    l1 = (lam - 1) * _sup_abs_on_unit_interval(lambda p: _binomial_series(dw, lam - 2, p), grid_points)
    l2 = (lam - 1) * _sup_abs_on_unit_interval(lambda p: _binomial_series(dw2, lam - 2, p), grid_points)

    l3 = 0.0
    if lam >= 3:
        coef_a, coef_b = _l3_coefficients(w)
        sup_a = _TrinomialSeries(coef_a, lam - 3).sup_abs(grid_points) if np.any(coef_a) else 0.0
        sup_b = _TrinomialSeries(coef_b, lam - 3).sup_abs(grid_points) if np.any(coef_b) else 0.0
        l3 = (lam - 2) * max(sup_a, sup_b)

    logger.debug(f"Grid Lipschitz constants for {weights.label}, λ={lam}: {l1:.4g}, {l2:.4g}, {l3:.4g}")
    return LipschitzConstants(float(l1), float(l2), float(l3), LipschitzMethod.GRID_SUPREMUM)


def _robbins_binomial_peak(k: int, n: int) -> float:
    """Upper bound on sup_p P_b(k; n, p) for 1 ≤ k ≤ n-1."""
    return float(np.sqrt(n / (2.0 * np.pi * k * (n - k))))


def lipschitz_bounds(weights: WeightVector) -> LipschitzConstants:
    """
    Analytic upper bounds on L1, L2, L3.

    General weights use (λ-1)·max|Δw|, (λ-1)·max|Δw²| and
    (λ-2)·max |w_j|·|w_{d+1} - w_d| over d ≤ j-2 or d ≥ j+1; truncation weights with
    3 ≤ μ ≤ λ-2 additionally use Stirling-type bounds on the binomial peak.
    """
    w = weights.w
    lam = weights.lam
    if lam < 2:
        return LipschitzConstants(0.0, 0.0, 0.0, LipschitzMethod.ANALYTIC_BOUND)

    dw = np.diff(w)
    dw2 = np.diff(w * w)
    l1 = (lam - 1) * float(np.abs(dw).max())
    l2 = (lam - 1) * float(np.abs(dw2).max())

    l3 = 0.0
    if lam >= 3:
        # the difference w_{d+1} - w_d pairs with every weight except w_d and w_{d+1}
        top = np.argsort(-np.abs(w), kind="stable")[:3]
        d = np.arange(lam - 1)
        partner = np.full(lam - 1, top[2])
        partner = np.where((top[1] != d) & (top[1] != d + 1), top[1], partner)
        partner = np.where((top[0] != d) & (top[0] != d + 1), top[0], partner)
        l3 = (lam - 2) * float(np.max(np.abs(w[partner]) * np.abs(dw)))

    mu = weights.mu
    if weights.scheme is WeightScheme.TRUNCATION and mu is not None and 3 <= mu <= lam - 2:
        peak = _robbins_binomial_peak(mu - 1, lam - 2)
        l1 = min(l1, (lam - 1) / mu * peak)
        l2 = min(l2, (lam - 1) / mu ** 2 * peak)
        l3 = min(l3, (lam - 2) / mu ** 2 * _robbins_binomial_peak(mu - 2, lam - 3))

    return LipschitzConstants(l1, l2, l3, LipschitzMethod.ANALYTIC_BOUND)


def truncation_lipschitz_exact(lam: int, mu: int) -> LipschitzConstants:
    """Closed-form L1, L2, L3 of truncation weights (binomial peaks at p = k/n)."""

    def peak(k: int, n: int) -> float:
        if n <= 0:
            return 1.0
        return float(np.exp(_log_binom_pmf(float(k), float(n), k / n)))

    l1 = (lam - 1) / mu * peak(mu - 1, lam - 2) if mu < lam else 0.0
    l2 = l1 / mu
    l3 = (lam - 2) / mu ** 2 * peak(mu - 2, lam - 3) if 2 <= mu < lam and lam >= 3 else 0.0
    return LipschitzConstants(l1, l2, l3, LipschitzMethod.ANALYTIC_BOUND)
