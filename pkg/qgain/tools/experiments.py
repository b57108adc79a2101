"""
Experiment drivers producing figure tables and bound validations.

Every driver returns a pandas DataFrame whose column names are the stable CSV
headers written by the CLI. Replicates and grid cells draw from their own
SeedSequence children, so a table depends only on its config and seed.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing import Pool
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import BoundViolationError, ConfigValidationError, ExperimentBudgetError, WeightError
from .es_core import EsState, Seed, as_seed_sequence, normalized_quality_gain_mc, run_scale_invariant
from .order_stats import MomentMethod, MomentTable, build_moment_table, default_first_method
from .quadratic import QuadraticModel, compute_context, make_model
from .theory import (
    DEFAULT_LAMBDA_EXACT,
    TheoryInputs,
    error_bound,
    phi_hat,
    phi_inf,
    sigma_bar_star_general,
    sigma_bar_star_sphere,
)
from .weights import WeightVector, lipschitz_grid, make_cma_log, make_optimal, make_optimal_positive, make_truncation

logger = logging.getLogger(__name__)

DEFAULT_STEP_BUDGET = 5e9
MAX_DESK_DIM = 100
FIG56_SPECTRA = ("sphere", "discus", "ellipsoid", "cigar")
FIG1_SCHEMES = ("optimal", "cma_log", "truncation_4", "truncation_10")
FIG3_THETAS = (math.pi / 2, 3 * math.pi / 8, math.pi / 4, math.pi / 8, 0.0)
BOUND_CHECK_MAX_DIM = 20
BOUND_CHECK_MAX_LAMBDA = 8
BOUND_CHECK_MIN_REPS = 100_000

MomentSource = Callable[[int, bool], MomentTable]


class FigureKind(str, Enum):
    FIG1 = "fig1"
    FIG2 = "fig2"
    FIG3 = "fig3"
    FIG5_6 = "fig5_6"
    PROP4 = "prop4"
    BOUND_CHECK = "bound_check"
    CUSTOM_SWEEP = "custom_sweep"


def default_multipliers() -> List[float]:
    """σ̄ multipliers 2^k, k = -4..2, bracketing σ̄*."""
    return [2.0 ** k for k in range(-4, 3)]


def default_lambda_grid(lmax: int, points: int = 40) -> List[int]:
    """Roughly log-spaced integers from 2 to lmax."""
    grid = np.unique(np.round(np.geomspace(2, max(2, lmax), points)).astype(int))
    return [int(x) for x in grid]


def default_moment_source(samples: Optional[int] = None, seed: int = 1, workers: int = 1) -> MomentSource:
    """Moments computed on demand; e2 requests always go through Monte Carlo."""

    def source(lam: int, with_e2: bool) -> MomentTable:
        if with_e2:
            return build_moment_table(lam, MomentMethod.MONTE_CARLO, True, samples, seed, workers)
        return build_moment_table(lam, default_first_method(lam))

    return source


def scheme_weights(name: str, lam: int, e1: Sequence[float]) -> Optional[WeightVector]:
    """
    Weights for a figure scheme name.

    Args:
        name: optimal, optimal_positive, cma_log or truncation_<ρ> (μ = ⌊λ/ρ⌋)
        lam: Population size
        e1: First moments for λ

    Returns:
        The weight vector, or None where the scheme is undefined (μ = 0, optimal at λ = 1)
    """
    if name.startswith("truncation_"):
        mu = int(lam // float(name.split("_", 1)[1]))
        return make_truncation(lam, mu) if mu >= 1 else None
    if name == "cma_log":
        return make_cma_log(lam)
    if name in ("optimal", "optimal_positive"):
        if lam < 2:
            return None
        return make_optimal(e1) if name == "optimal" else make_optimal_positive(e1)
    raise WeightError(f"unknown scheme {name!r}")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

class Cell(NamedTuple):
    model: Dict[str, Any]
    lam: int
    scheme: str
    c_m: float
    multiplier: float


@dataclass
class ExperimentConfig:
    """A grid of simulation cells: models × λ × schemes × c_m × σ̄ multipliers."""

    figure: FigureKind
    models: List[Dict[str, Any]]
    lambdas: List[int]
    schemes: List[str] = field(default_factory=lambda: ["optimal"])
    c_m_values: List[float] = field(default_factory=lambda: [1.0, 10.0])
    sigma_bar_multipliers: List[float] = field(default_factory=default_multipliers)
    T: int = 10_000
    replicates: int = 11
    seed: int = 0
    step_budget: float = DEFAULT_STEP_BUDGET
    full_scale: bool = False
    theory_e_Ae: str = "worst_case"
    workers: int = 1

    def __post_init__(self):
        problems: List[Dict[str, str]] = []
        try:
            self.figure = FigureKind(self.figure)
        except ValueError:
            problems.append({"field": "figure", "problem": f"unknown figure {self.figure!r}"})

        for name in ("models", "lambdas", "schemes", "c_m_values", "sigma_bar_multipliers"):
            if not getattr(self, name):
                problems.append({"field": name, "problem": "must not be empty"})
        if self.T < 2 or self.T % 2:
            problems.append({"field": "T", "problem": f"must be a positive even integer, got {self.T}"})
        if self.replicates < 1:
            problems.append({"field": "replicates", "problem": "must be >= 1"})
        if any(lam < 1 for lam in self.lambdas):
            problems.append({"field": "lambdas", "problem": "every λ must be >= 1"})
        if any(c <= 0 for c in self.c_m_values):
            problems.append({"field": "c_m_values", "problem": "every c_m must be > 0"})
        if any(k <= 0 for k in self.sigma_bar_multipliers):
            problems.append({"field": "sigma_bar_multipliers", "problem": "every multiplier must be > 0"})
        if self.theory_e_Ae not in ("worst_case", "live"):
            problems.append({"field": "theory_e_Ae", "problem": "must be 'worst_case' or 'live'"})

        for spec in self.models:
            kind = spec.get("type", "sphere")
            if self.figure is FigureKind.FIG5_6 and kind not in FIG56_SPECTRA:
                problems.append({"field": "models", "problem": f"fig5_6 takes {', '.join(FIG56_SPECTRA)}; got {kind!r}"})
            if int(spec.get("dim", 0)) > MAX_DESK_DIM and not self.full_scale:
                problems.append({
                    "field": "models",
                    "problem": f"N={spec.get('dim')} exceeds the desk-scale limit {MAX_DESK_DIM}; set full_scale",
                })

        if problems:
            raise ConfigValidationError("Invalid experiment config", problems)

    @classmethod
    def fig56_defaults(cls, full_scale: bool = False, **overrides) -> "ExperimentConfig":
        """Four spectra with α = 10⁶ at N ∈ {10, 100} (plus 1000 at full scale), λ = 10."""
        dims = [10, 100, 1000] if full_scale else [10, 100]
        models = [{"type": kind, "dim": n, "alpha": 1e6} for kind in FIG56_SPECTRA for n in dims]
        params = {"figure": FigureKind.FIG5_6, "models": models, "lambdas": [10], "full_scale": full_scale}
        params.update(overrides)
        return cls(**params)

    def cells(self) -> List[Cell]:
        return [
            Cell(spec, int(lam), scheme, float(c_m), float(k))
            for spec in self.models
            for lam in self.lambdas
            for scheme in self.schemes
            for c_m in self.c_m_values
            for k in self.sigma_bar_multipliers
        ]

    def estimated_steps(self) -> float:
        """Coordinate evaluations: replicates·T·λ·N summed over cells."""
        return float(sum(
            self.replicates * self.T * cell.lam * int(cell.model.get("dim", 1)) for cell in self.cells()
        ))

    def check_budget(self) -> None:
        estimate = self.estimated_steps()
        if not self.full_scale and estimate > self.step_budget:
            raise ExperimentBudgetError(estimate, self.step_budget)


# ---------------------------------------------------------------------------
# Empirical normalized quality gain
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalQG:
    median: float
    q10: float
    q90: float
    per_run: Tuple[float, ...]


class NqgEstimate(NamedTuple):
    value: float
    truncated: bool
    used: int
    mean_e_Ae: float


def summarize_replicates(values: Sequence[float]) -> EmpiricalQG:
    """Median and 10%/90% quantiles by nearest rank; NaN replicates are ignored."""
    per_run = tuple(float(v) for v in values)
    finite = np.asarray([v for v in per_run if np.isfinite(v)], dtype=float)
    if finite.size == 0:
        return EmpiricalQG(math.nan, math.nan, math.nan, per_run)
    q10, median, q90 = np.percentile(finite, [10, 50, 90], method="inverted_cdf")
    return EmpiricalQG(float(median), float(q10), float(q90), per_run)


def empirical_nqg(
    model: QuadraticModel,
    weights: WeightVector,
    sigma_bar: float,
    c_m: float,
    T: int,
    seed: Seed,
    m0: Optional[np.ndarray] = None,
    rescale: bool = True,
) -> NqgEstimate:
    """
    Average of [f(m_t) - f(m_{t+1})]/[f(m_t)·g(m_t)] over t = T/2..T-1.

    The start point defaults to x* + N(0, I) drawn from the seed. A truncated run
    is averaged over whatever part of the second half it reached.
    """
    if T < 2 or T % 2:
        raise ConfigValidationError("Invalid run length", [{"field": "T", "problem": "must be a positive even integer"}])
    init_seq, run_seq = as_seed_sequence(seed).spawn(2)
    if m0 is None:
        m0 = model.x_star + np.random.default_rng(init_seq).standard_normal(model.dim)

    state = EsState.create(m0, 1.0, c_m, run_seq)
    trajectory = run_scale_invariant(state, model, weights, sigma_bar, T, record=lambda t: False, rescale=rescale)

    half = T // 2
    ratios = trajectory.progress[half:] / trajectory.g_m[half:]
    if ratios.size == 0:
        logger.warning(f"run truncated after {trajectory.iterations} of {T} steps; no second-half data")
        return NqgEstimate(math.nan, True, 0, math.nan)
    if trajectory.truncated:
        logger.warning(f"run truncated after {trajectory.iterations} of {T} steps; averaging {ratios.size} steps")
    return NqgEstimate(
        float(ratios.mean()),
        trajectory.truncated,
        int(ratios.size),
        float(trajectory.e_Ae[half:].mean()),
    )


def _replicate_task(model, weights, sigma_bar, c_m, T, seed_seq) -> NqgEstimate:
    return empirical_nqg(model, weights, sigma_bar, c_m, T, seed_seq)


# ---------------------------------------------------------------------------
# Figure tables
# ---------------------------------------------------------------------------

def fig1_data(
    lambdas: Sequence[int],
    schemes: Sequence[str] = FIG1_SCHEMES,
    moment_source: Optional[MomentSource] = None,
) -> pd.DataFrame:
    """φ̄∞(σ̄*, w)/λ per scheme on an increasing λ grid; NaN where a scheme is undefined."""
    lambdas = [int(lam) for lam in lambdas]
    if any(b <= a for a, b in zip(lambdas, lambdas[1:])) or (lambdas and lambdas[0] < 1):
        raise ConfigValidationError("Invalid λ grid", [{"field": "lambdas", "problem": "must be increasing and >= 1"}])
    source = moment_source or default_moment_source()

    rows = []
    for lam in lambdas:
        e1 = source(lam, False).e1
        row: Dict[str, Any] = {"lambda": lam}
        for name in schemes:
            weights = scheme_weights(name, lam, e1)
            if weights is None:
                row[name] = math.nan
                continue
            s = sigma_bar_star_sphere(weights, e1)
            row[name] = phi_inf(s, weights, e1) / lam
        rows.append(row)
    logger.info(f"fig1: {len(rows)} λ values × {len(schemes)} schemes")
    return pd.DataFrame(rows, columns=["lambda", *schemes])


def fig2_data(
    dims: Sequence[int],
    lambdas: Sequence[int],
    schemes: Sequence[str] = ("optimal",),
    lambda_exact: int = DEFAULT_LAMBDA_EXACT,
    moment_source: Optional[MomentSource] = None,
) -> pd.DataFrame:
    """
    σ̄* on the sphere (eᵀAe = 1/N) for each N, λ and scheme.

    λ ≤ lambda_exact uses product moments; larger λ use the large-λ substitute.
    """
    source = moment_source or default_moment_source()
    rows = []
    for lam in sorted({int(x) for x in lambdas}):
        exact = lam <= lambda_exact
        moments = source(lam, exact)
        mode = "exact" if exact else "large_lambda"
        for name in schemes:
            weights = scheme_weights(name, lam, moments.e1)
            if weights is None:
                continue
            for n in dims:
                e_Ae = 1.0 / n
                s = sigma_bar_star_general(weights, moments, e_Ae, mode)
                inputs = TheoryInputs(s, 1.0, weights, moments, e_Ae, e_Ae, e_Ae, allow_large_lambda=not exact)
                rows.append({
                    "N": int(n),
                    "lambda": lam,
                    "scheme": name,
                    "mode": mode,
                    "mu_w": weights.mu_w,
                    "sigma_bar_star": s,
                    "phi_hat": phi_hat(inputs),
                })
    table = pd.DataFrame(rows)
    return table.sort_values(["scheme", "N", "lambda"], kind="stable").reset_index(drop=True)


def fig3_model() -> QuadraticModel:
    """f(x) = xᵀdiag(1, 36)x/2 in its original coordinates."""
    return QuadraticModel(np.array([1.0, 36.0]), rotation=np.eye(2))


def fig3_data(
    lambdas: Sequence[int] = (2, 10, 50),
    thetas: Sequence[float] = FIG3_THETAS,
    schemes: Sequence[str] = ("optimal", "optimal_positive"),
    moment_source: Optional[MomentSource] = None,
) -> pd.DataFrame:
    """
    Asymptotically optimal step-size σ* at m = 2A^{-1/2}(cos θ, sin θ), c_m = 1.

    σ* = σ̄*·‖∇f(m)‖/Tr(A) with σ̄* from the exact fixed-weight formula at eᵀAe(m).
    """
    source = moment_source or default_moment_source()
    model = fig3_model()
    scale = np.array([1.0, 1.0 / 6.0])
    rows = []
    for lam in lambdas:
        moments = source(int(lam), True)
        for name in schemes:
            weights = scheme_weights(name, int(lam), moments.e1)
            if weights is None:
                continue
            for theta in thetas:
                m = 2.0 * scale * np.array([math.cos(theta), math.sin(theta)])
                ctx = compute_context(model, m)
                s_bar = sigma_bar_star_general(weights, moments, ctx.e_Ae, "exact")
                rows.append({
                    "lambda": int(lam),
                    "scheme": name,
                    "theta": float(theta),
                    "m1": float(m[0]),
                    "m2": float(m[1]),
                    "e_Ae": ctx.e_Ae,
                    "sigma_bar_star": s_bar,
                    "sigma_star": s_bar * ctx.grad_norm / model.trace,
                })
    return pd.DataFrame(rows)


def fig56_data(
    config: ExperimentConfig,
    moment_source: Optional[MomentSource] = None,
) -> pd.DataFrame:
    """
    Empirical normalized quality gain per (spectrum, N, λ, scheme, c_m, multiplier).

    Each cell runs ``config.replicates`` trajectories of length T at
    σ̄ = multiplier·σ̄*, where σ̄* and the φ̂ overlay use eᵀAe = d_N(Â). With
    theory_e_Ae = "live" a second overlay uses the second-half average of eᵀAe
    along the trajectories.

    Raises:
        ExperimentBudgetError: If the grid exceeds the step budget
    """
    config.check_budget()
    source = moment_source or default_moment_source()
    cells = config.cells()
    logger.info(
        f"fig5_6: {len(cells)} cells × {config.replicates} replicates, "
        f"~{config.estimated_steps():.3g} coordinate evaluations"
    )

    moments_by_lam = {lam: source(lam, True) for lam in sorted({c.lam for c in cells})}
    prepared = []
    tasks = []
    for index, cell in enumerate(cells):
        model = make_model(cell.model)
        moments = moments_by_lam[cell.lam]
        weights = scheme_weights(cell.scheme, cell.lam, moments.e1)
        if weights is None:
            raise WeightError(f"scheme {cell.scheme!r} is undefined for λ={cell.lam}")
        worst = TheoryInputs.from_model(model, weights, moments, 0.0, cell.c_m)
        s_star = sigma_bar_star_general(weights, moments, worst.e_Ae, "exact")
        s_bar = cell.multiplier * s_star
        prepared.append((cell, model, weights, moments, worst, s_star, s_bar))
        for rep in range(config.replicates):
            seed_seq = np.random.SeedSequence(entropy=config.seed, spawn_key=(index, rep))
            tasks.append((model, weights, s_bar, cell.c_m, config.T, seed_seq))

    if config.workers > 1:
        with Pool(config.workers) as pool:
            results = pool.starmap(_replicate_task, tasks)
    else:
        results = [_replicate_task(*task) for task in tasks]

    rows = []
    for index, (cell, model, weights, moments, worst, s_star, s_bar) in enumerate(prepared):
        runs = results[index * config.replicates:(index + 1) * config.replicates]
        summary = summarize_replicates([r.value for r in runs])
        row = {
            "spectrum": model.spectrum.value,
            "N": model.dim,
            "lambda": cell.lam,
            "scheme": cell.scheme,
            "c_m": cell.c_m,
            "multiplier": cell.multiplier,
            "sigma_bar": s_bar,
            "sigma_bar_star": s_star,
            "median": summary.median,
            "q10": summary.q10,
            "q90": summary.q90,
            "phi_hat": phi_hat(worst.with_sigma_bar(s_bar)),
            "truncated_runs": sum(r.truncated for r in runs),
        }
        if config.theory_e_Ae == "live":
            live = float(np.nanmedian([r.mean_e_Ae for r in runs]))
            live = min(max(live, 0.0), worst.d1_hat)
            row["phi_hat_live"] = phi_hat(TheoryInputs(
                s_bar, cell.c_m, weights, moments, live, worst.tr_A2, worst.d1_hat
            ))
        rows.append(row)
        logger.debug(
            f"cell {index}: {row['spectrum']} N={row['N']} c_m={cell.c_m} ×{cell.multiplier:g} "
            f"median={summary.median:.4g} φ̂={row['phi_hat']:.4g}"
        )
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------
# Error bound validation
# ---------------------------------------------------------------------------

def bound_check(
    N: int,
    lam: int,
    scheme: str = "optimal",
    sigma_bar_multipliers: Sequence[float] = (0.25, 0.5, 1.0, 2.0),
    c_m_values: Sequence[float] = (1.0, 10.0, 100.0),
    reps: int = BOUND_CHECK_MIN_REPS,
    spectrum: Optional[Dict[str, Any]] = None,
    seed: int = 0,
    grid_points: int = 2000,
    strict: bool = False,
    moment_source: Optional[MomentSource] = None,
) -> pd.DataFrame:
    """
    Compare the Monte-Carlo normalized quality gain with φ̂ and its error bound.

    The mean is x* + N(0, I) drawn from the seed; φ̂ uses eᵀAe at that mean.
    A cell passes when |φ̄ - φ̂| ≤ bound + 3·stderr; cells with α ≥ 1 pass as vacuous.

    Raises:
        ConfigValidationError: If the instance is too large for a controlled Monte-Carlo error
        BoundViolationError: In strict mode, if any non-vacuous cell fails
    """
    problems = []
    if N > BOUND_CHECK_MAX_DIM:
        problems.append({"field": "n", "problem": f"must be <= {BOUND_CHECK_MAX_DIM}"})
    if not 2 <= lam <= BOUND_CHECK_MAX_LAMBDA:
        problems.append({"field": "lambda", "problem": f"must lie in [2, {BOUND_CHECK_MAX_LAMBDA}]"})
    if reps < BOUND_CHECK_MIN_REPS:
        problems.append({"field": "reps", "problem": f"must be >= {BOUND_CHECK_MIN_REPS}"})
    if problems:
        raise ConfigValidationError("Invalid bound-check instance", problems)

    source = moment_source or default_moment_source()
    model = make_model({"type": "sphere", **(spectrum or {}), "dim": int(N)})
    moments = source(lam, True)
    weights = scheme_weights(scheme, lam, moments.e1)
    if weights is None:
        raise WeightError(f"scheme {scheme!r} is undefined for λ={lam}")
    lipschitz = lipschitz_grid(weights, grid_points)

    init_seq, mc_seq = as_seed_sequence(seed).spawn(2)
    m = model.x_star + np.random.default_rng(init_seq).standard_normal(model.dim)

    cells = [(float(c), float(k)) for c in c_m_values for k in sigma_bar_multipliers]
    cell_seeds = mc_seq.spawn(len(cells))
    rows = []
    for (c_m, k), cell_seed in zip(cells, cell_seeds):
        inputs = TheoryInputs.from_model(model, weights, moments, 0.0, c_m, m=m)
        s_bar = k * sigma_bar_star_general(weights, moments, inputs.e_Ae, "exact")
        inputs = inputs.with_sigma_bar(s_bar)
        predicted = phi_hat(inputs)
        bound = error_bound(inputs, lipschitz)
        est = normalized_quality_gain_mc(model, m, s_bar, c_m, weights, reps, cell_seed)
        lhs = abs(est.mean - predicted)
        passed = bound.vacuous or lhs <= bound.bound + 3.0 * est.stderr
        rows.append({
            "spectrum": model.spectrum.value,
            "N": model.dim,
            "lambda": lam,
            "c_m": c_m,
            "multiplier": k,
            "sigma_bar": s_bar,
            "phi_bar_mc": est.mean,
            "stderr": est.stderr,
            "phi_hat": predicted,
            "lhs": lhs,
            "rhs": bound.bound,
            "alpha": bound.alpha,
            "vacuous": bound.vacuous,
            "pass": bool(passed),
        })
        if not passed:
            logger.error(f"bound violated at c_m={c_m}, ×{k}: lhs={lhs:.4g} > rhs={bound.bound:.4g}")

    table = pd.DataFrame(rows)
    failed = table[~table["pass"]]
    if strict and len(failed):
        first = failed.iloc[0]
        raise BoundViolationError(
            f"{len(failed)} cell(s) exceed the error bound, e.g. c_m={first['c_m']}, "
            f"multiplier={first['multiplier']}: lhs={first['lhs']:.4g}, rhs={first['rhs']:.4g}"
        )
    return table
