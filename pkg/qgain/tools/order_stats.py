"""Moments of standard-normal order statistics.

E[N_{i:λ}] is integrated numerically against the order-statistic density, the
product moments E[N_{i:λ}N_{j:λ}] are estimated by sorting Monte-Carlo samples.
Blom's approximation covers very large λ.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from itertools import repeat
from multiprocessing import Pool
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import gammaln, log_ndtr, ndtri, roots_legendre

from ..errors import MomentError

logger = logging.getLogger(__name__)

MIN_QUADRATURE_NODES = 64
MIN_MC_SAMPLES = 10_000
BLOM_ALPHA = 0.375
BLOM_THRESHOLD = 1000

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


class MomentMethod(str, Enum):
    """Provenance of a moment table."""

    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte_carlo"
    BLOM = "blom"


@dataclass(frozen=True)
class QuadratureGrid:
    """Composite Gauss-Legendre rule on [lower, upper]."""

    lower: float = -12.0
    upper: float = 12.0
    panels: int = 2048
    order: int = 8

    @property
    def nodes(self) -> int:
        return self.panels * self.order

    def check(self) -> None:
        if self.lower > -10.0 or self.upper < 10.0:
            raise MomentError(
                f"Quadrature interval [{self.lower}, {self.upper}] must cover [-10, 10]"
            )
        if self.panels < 1 or self.order < 1 or self.nodes < MIN_QUADRATURE_NODES:
            raise MomentError(
                f"Quadrature needs at least {MIN_QUADRATURE_NODES} nodes, got {self.nodes}"
            )

    def points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (nodes, weights) of the composite rule."""
        x, w = roots_legendre(self.order)
        edges = np.linspace(self.lower, self.upper, self.panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
        weights = (half[:, None] * w[None, :]).ravel()
        return nodes, weights


@dataclass(frozen=True)
class MomentTable:
    """First (and optionally product) moments of N_{1:λ} ≤ ... ≤ N_{λ:λ}.

    Monte-Carlo tables carry quadrature e1 and Monte-Carlo e2.
    """

    lam: int
    e1: np.ndarray
    e2: Optional[np.ndarray] = None
    method: MomentMethod = MomentMethod.QUADRATURE
    mc_samples: Optional[int] = None
    mc_std_err: Optional[float] = None
    seed: Optional[int] = None

    @property
    def has_e2(self) -> bool:
        return self.e2 is not None


class AsymptoticReport(NamedTuple):
    range_ratio: Optional[float]
    mean_abs: float
    mean_square: float


class _PartialSums(NamedTuple):
    count: int
    sum_xx: np.ndarray
    sum_sq: np.ndarray


def _check_lambda(lam: int) -> None:
    if int(lam) != lam or lam < 1:
        raise MomentError(f"λ must be a positive integer, got {lam}")


def first_moments_quadrature(lam: int, grid: Optional[QuadratureGrid] = None) -> np.ndarray:
    """
    E[N_{i:λ}] for i = 1..λ by composite Gauss-Legendre quadrature.

    The density λ·C(λ-1, i-1)·Φ^{i-1}(1-Φ)^{λ-i}·φ is assembled in log space,
    so λ in the thousands does not overflow.

    Args:
        lam: Population size λ
        grid: Quadrature settings (defaults to 2048 panels on [-12, 12])

    Returns:
        Array of λ first moments, nondecreasing and antisymmetric

    Raises:
        MomentError: If λ < 1 or the grid is below the accuracy floor
    """
    _check_lambda(lam)
    grid = grid or QuadratureGrid()
    grid.check()

    x, wq = grid.points()
    log_cdf = log_ndtr(x)
    log_sf = log_ndtr(-x)
    log_pdf = -0.5 * x * x - _LOG_SQRT_2PI
    weighted_x = wq * x

    i = np.arange(1, lam + 1)
    log_coef = np.log(lam) + gammaln(lam) - gammaln(i) - gammaln(lam - i + 1)

    e1 = np.empty(lam)
    for k in range(lam):
        log_density = log_coef[k] + k * log_cdf + (lam - 1 - k) * log_sf + log_pdf
        e1[k] = np.dot(weighted_x, np.exp(log_density))

    # exact antisymmetry; the middle moment of odd λ becomes 0.0
    e1 = 0.5 * (e1 - e1[::-1])
    logger.debug(f"Quadrature E1 for λ={lam} on {grid.nodes} nodes")
    return e1


def _accumulate_products(lam: int, count: int, seed_seq: np.random.SeedSequence,
                         chunk_rows: int) -> _PartialSums:
    rng = np.random.default_rng(seed_seq)
    sum_xx = np.zeros((lam, lam))
    sum_sq = np.zeros((lam, lam))
    remaining = count
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        x = np.sort(rng.standard_normal((rows, lam)), axis=1)
        sum_xx += x.T @ x
        x2 = x * x
        sum_sq += x2.T @ x2
        remaining -= rows
    return _PartialSums(count, sum_xx, sum_sq)


def product_moments_mc(lam: int, samples: int, seed: int, workers: int = 1) -> Tuple[np.ndarray, float]:
    """
    Monte-Carlo estimate of E[N_{i:λ}N_{j:λ}].

    Samples are split across workers, each with a sub-seed spawned from
    ``seed``; the result is identical for a fixed (seed, workers) pair.

    Args:
        lam: Population size λ
        samples: Number of sorted λ-samples (≥ 10⁴)
        seed: Root seed
        workers: Number of processes

    Returns:
        Tuple of (symmetrized mean matrix, largest entrywise standard error)
    """
    _check_lambda(lam)
    if samples < MIN_MC_SAMPLES:
        raise MomentError(f"Monte-Carlo E2 needs at least {MIN_MC_SAMPLES} samples, got {samples}")
    workers = max(1, int(workers))

    base, extra = divmod(int(samples), workers)
    counts = [base + (1 if k < extra else 0) for k in range(workers)]
    seeds = np.random.SeedSequence(seed).spawn(workers)
    chunk_rows = max(1, (1 << 20) // lam)

    logger.info(f"Estimating E2 for λ={lam} from {samples} samples on {workers} worker(s)")
    if workers == 1:
        parts: List[_PartialSums] = [_accumulate_products(lam, counts[0], seeds[0], chunk_rows)]
    else:
        with Pool(workers) as pool:
            parts = pool.starmap(
                _accumulate_products, zip(repeat(lam), counts, seeds, repeat(chunk_rows))
            )

    total = sum(p.count for p in parts)
    mean = sum(p.sum_xx for p in parts) / total
    mean_sq = sum(p.sum_sq for p in parts) / total
    variance = np.maximum(mean_sq - mean * mean, 0.0) * total / max(total - 1, 1)
    std_err = float(np.sqrt(variance / total).max())

    return 0.5 * (mean + mean.T), std_err


def project_row_sums(e2: np.ndarray) -> np.ndarray:
    """
    Orthogonal projection of a symmetric matrix onto {symmetric, every row sum = 1}.

    The correction is E - (a·1ᵀ + 1·aᵀ) with a solving λa + (Σa)·1 = E·1 - 1.
    """
    lam = e2.shape[0]
    residual = e2.sum(axis=1) - 1.0
    a = (residual - residual.sum() / (2.0 * lam)) / lam
    return e2 - (a[:, None] + a[None, :])


def first_moments_blom(lam: int) -> np.ndarray:
    """Blom's approximation Φ⁻¹((i - 0.375)/(λ + 0.25)), lower half mirrored."""
    _check_lambda(lam)
    half = lam // 2
    i = np.arange(1, half + 1)
    lower = ndtri((i - BLOM_ALPHA) / (lam + 1.0 - 2.0 * BLOM_ALPHA))
    e1 = np.zeros(lam)
    e1[:half] = lower
    e1[lam - half:] = -lower[::-1]
    return e1


def david_bounds(lam: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Elementwise brackets lower ≤ E[N_{i:λ}] ≤ upper.

    The bracket Φ⁻¹(i/(λ+1)) ≤ E ≤ min{Φ⁻¹(i/(λ+0.5)), Φ⁻¹((i-0.5)/λ)} holds on
    the upper half i ≥ (λ+1)/2 (for λ=2, i=1 it fails: Φ⁻¹(1/3) > -1/√π). The
    lower half is obtained by antisymmetry: lower_i = -upper_{λ+1-i} and
    upper_i = -lower_{λ+1-i}.
    """
    _check_lambda(lam)
    i = np.arange(1, lam + 1, dtype=float)
    lo = ndtri(i / (lam + 1.0))
    hi = np.minimum(ndtri(i / (lam + 0.5)), ndtri((i - 0.5) / lam))

    upper_half = i >= (lam + 1) / 2.0
    lower = np.where(upper_half, lo, -hi[::-1])
    upper = np.where(upper_half, hi, -lo[::-1])
    return lower, upper


def asymptotic_checks(table: MomentTable) -> AsymptoticReport:
    """Ratios whose limits are 1, √(2/π) and 1 as λ grows."""
    e1 = np.asarray(table.e1)
    lam = table.lam
    log_lam = np.log(lam)
    range_ratio = None
    if log_lam > 0.0:
        range_ratio = float((e1[-1] - e1[0]) / (2.0 * np.sqrt(2.0 * log_lam)))
    return AsymptoticReport(
        range_ratio=range_ratio,
        mean_abs=float(np.abs(e1).sum() / lam),
        mean_square=float((e1 * e1).sum() / lam),
    )


def default_mc_samples(lam: int) -> int:
    if lam <= 50:
        return 2_000_000
    if lam <= 500:
        return 200_000
    return 20_000


def default_first_method(lam: int) -> MomentMethod:
    return MomentMethod.BLOM if lam > BLOM_THRESHOLD else MomentMethod.QUADRATURE


def build_moment_table(
    lam: int,
    method: MomentMethod = MomentMethod.QUADRATURE,
    with_e2: bool = False,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
    workers: int = 1,
    grid: Optional[QuadratureGrid] = None,
) -> MomentTable:
    """
    Assemble a MomentTable.

    Requesting e2 (or method monte_carlo) yields a Monte-Carlo table whose e2 is
    symmetrized, made centro-symmetric and projected onto unit row sums.

    Raises:
        MomentError: If e2 is requested together with Blom's approximation
    """
    method = MomentMethod(method)
    if method is MomentMethod.BLOM:
        if with_e2:
            raise MomentError("Blom tables carry e1 only; use method monte_carlo for e2")
        return MomentTable(lam=lam, e1=first_moments_blom(lam), method=method)

    e1 = first_moments_quadrature(lam, grid)
    if not with_e2 and method is MomentMethod.QUADRATURE:
        return MomentTable(lam=lam, e1=e1, method=method)

    samples = int(samples or default_mc_samples(lam))
    seed = 1 if seed is None else int(seed)
    raw, std_err = product_moments_mc(lam, samples, seed, workers)
    centro = 0.5 * (raw + raw[::-1, ::-1])
    e2 = project_row_sums(centro)

    return MomentTable(
        lam=lam,
        e1=e1,
        e2=e2,
        method=MomentMethod.MONTE_CARLO,
        mc_samples=samples,
        mc_std_err=std_err,
        seed=seed,
    )


class MomentValidator:
    """Checks the order-statistic identities a MomentTable must satisfy."""

    def __init__(self, e1_tol: float = 1e-8, david_slack: float = 1e-10, mc_sigmas: float = 3.0):
        self.e1_tol = e1_tol
        self.david_slack = david_slack
        self.mc_sigmas = mc_sigmas

    def validate(self, table: MomentTable) -> Tuple[bool, str]:
        """
        Validate a moment table.

        Args:
            table: Table to check

        Returns:
            Tuple of (is_valid, error_message)
        """
        problems = self.find_problems(table)
        if problems:
            return False, "; ".join(problems)
        return True, ""

    def find_problems(self, table: MomentTable) -> List[str]:
        e1 = np.asarray(table.e1, dtype=float)
        lam = table.lam
        problems: List[str] = []

        if e1.shape != (lam,):
            return [f"e1 has shape {e1.shape}, expected ({lam},)"]
        if not np.all(np.isfinite(e1)):
            return ["e1 contains non-finite values"]

        if abs(e1.sum()) > self.e1_tol:
            problems.append(f"Σe1 = {e1.sum():.3e}")
        asym = np.max(np.abs(e1 + e1[::-1]))
        if asym > self.e1_tol:
            problems.append(f"antisymmetry violated by {asym:.3e}")
        if lam >= 2 and np.any(np.diff(e1) <= 0.0):
            problems.append("e1 not strictly increasing")

        if table.method is not MomentMethod.BLOM:
            lower, upper = david_bounds(lam)
            if np.any(e1 < lower - self.david_slack) or np.any(e1 > upper + self.david_slack):
                problems.append("e1 outside David brackets")

        if table.e2 is not None:
            problems.extend(self._check_e2(table, e1))
        return problems

    def _check_e2(self, table: MomentTable, e1: np.ndarray) -> List[str]:
        e2 = np.asarray(table.e2, dtype=float)
        lam = table.lam
        if e2.shape != (lam, lam):
            return [f"e2 has shape {e2.shape}, expected ({lam}, {lam})"]

        std_err = table.mc_std_err or 0.0
        tol = max(self.e1_tol, self.mc_sigmas * std_err)
        problems = []

        if np.max(np.abs(e2 - e2.T)) > self.e1_tol:
            problems.append("e2 not symmetric")
        row_dev = np.max(np.abs(e2.sum(axis=1) - 1.0))
        if row_dev > tol:
            problems.append(f"e2 row sums deviate from 1 by {row_dev:.3e}")
        if abs(np.trace(e2) - lam) > lam * tol:
            problems.append(f"Tr(e2) = {np.trace(e2):.6g}, expected {lam}")

        cov = e2 - np.outer(e1, e1)
        if np.min(cov) < -tol:
            problems.append(f"positive dependency violated by {-np.min(cov):.3e}")
        min_eig = np.linalg.eigvalsh(0.5 * (cov + cov.T)).min()
        if min_eig < -lam * tol:
            problems.append(f"e2 - e1e1ᵀ has eigenvalue {min_eig:.3e}")
        return problems
