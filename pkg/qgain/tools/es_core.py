"""The weighted recombination ES: sampling, ranking and the mean update."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from ..errors import NonFiniteValueError, SimulationError, ZeroGradientError
from .quadratic import QuadraticModel, compute_context, denormalize
from .weights import WeightVector, weight_values

logger = logging.getLogger(__name__)

UNDERFLOW = 1e-300
MIN_REPS = 1000
_RESCALE_LOW = 2.0 ** -600
_RESCALE_HIGH = 2.0 ** 600

Transform = Callable[[np.ndarray], np.ndarray]
Seed = Union[int, np.random.SeedSequence]


def as_seed_sequence(seed: Seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))


@dataclass(frozen=True, eq=False)
class EsState:
    """Mean, step-size, learning rate and the generator all draws come from."""

    m: np.ndarray
    sigma: float
    c_m: float
    rng: np.random.Generator
    t: int = 0

    def __post_init__(self):
        m = np.array(self.m, dtype=float).ravel()
        if not np.all(np.isfinite(m)):
            raise NonFiniteValueError("mean vector is not finite")
        if not self.sigma > 0.0:
            raise SimulationError(f"σ must be positive, got {self.sigma}")
        if not self.c_m > 0.0:
            raise SimulationError(f"c_m must be positive, got {self.c_m}")
        object.__setattr__(self, "m", m)

    @classmethod
    def create(cls, m: np.ndarray, sigma: float, c_m: float, seed: Seed) -> "EsState":
        return cls(m=m, sigma=sigma, c_m=c_m, rng=np.random.default_rng(as_seed_sequence(seed)))


class QualityGainEstimate(NamedTuple):
    mean: float
    stderr: float
    reps: int


@dataclass
class Trajectory:
    """
    Per-iteration record of a scale-invariant run.

    ``f`` holds f(m_t) for t = 0..iterations on the working scale; with rescaling
    the true value is f·4^{-exponent[t]}. Step quantities (g_m, grad_norm, sigma,
    e_Ae, progress) refer to the start of step t.
    """

    f: np.ndarray
    exponent: np.ndarray
    g_m: np.ndarray
    grad_norm: np.ndarray
    sigma: np.ndarray
    e_Ae: np.ndarray
    progress: np.ndarray
    recorded: np.ndarray
    truncated: bool = False
    requested: int = 0

    @property
    def iterations(self) -> int:
        return int(self.progress.size)

    @property
    def log10_f(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log10(self.f) - 2.0 * self.exponent * math.log10(2.0)

    def to_frame(self) -> pd.DataFrame:
        """Recorded iterations with columns t, f, grad_norm, g_m, sigma, log10_f."""
        t = np.arange(self.iterations)
        scale = np.ldexp(1.0, -self.exponent[:-1])
        frame = pd.DataFrame({
            "t": t,
            "f": np.ldexp(self.f[:-1], -2 * self.exponent[:-1]),
            "grad_norm": self.grad_norm * scale,
            "g_m": self.g_m,
            "sigma": self.sigma * scale,
            "log10_f": self.log10_f[:-1],
        })
        return frame[self.recorded].reset_index(drop=True)


def update_mean(
    m: np.ndarray,
    sigma: float,
    c_m: float,
    model: QuadraticModel,
    weights: WeightVector,
    z: np.ndarray,
    cov_sqrt: Optional[np.ndarray] = None,
    transform: Optional[Transform] = None,
) -> np.ndarray:
    """
    One mean update from given standard-normal draws.

    Args:
        m: Current mean
        sigma: Step-size
        c_m: Learning rate
        model: Objective
        weights: Recombination weights
        z: λ×N draws, one candidate per row
        cov_sqrt: Optional C^{1/2}; candidates become m + σC^{1/2}z_i
        transform: Optional strictly increasing map applied to f before ranking

    Returns:
        m + c_m·σ·Σ W(i)·C^{1/2}z_i
    """
    steps = z if cov_sqrt is None else z @ cov_sqrt.T
    fvalues = model.evaluate(m + sigma * steps)
    if transform is not None:
        fvalues = transform(fvalues)
    if not np.all(np.isfinite(fvalues)):
        raise NonFiniteValueError("objective returned non-finite values")
    W = weight_values(fvalues, weights)
    return m + c_m * sigma * (W @ steps)


def step(
    state: EsState,
    model: QuadraticModel,
    weights: WeightVector,
    cov_sqrt: Optional[np.ndarray] = None,
    transform: Optional[Transform] = None,
) -> EsState:
    """Draw λ candidates from the state's generator and update the mean; σ is unchanged."""
    z = state.rng.standard_normal((weights.lam, model.dim))
    m_new = update_mean(state.m, state.sigma, state.c_m, model, weights, z, cov_sqrt, transform)
    return replace(state, m=m_new, t=state.t + 1)


def run_scale_invariant(
    state0: EsState,
    model: QuadraticModel,
    weights: WeightVector,
    sigma_bar: float,
    T: int,
    record: Optional[Callable[[int], bool]] = None,
    rescale: bool = False,
) -> Trajectory:
    """
    Run T steps with σ = σ̄·‖∇f(m)‖/(c_m·Tr A) set before every step.

    Args:
        state0: Initial state (its σ is overwritten)
        model: Objective
        weights: Recombination weights
        sigma_bar: Normalized step-size, > 0
        T: Number of iterations
        record: Predicate selecting iterations for ``Trajectory.to_frame``
        rescale: Keep f inside [2^-600, 2^600] by exact power-of-two scaling of m - x*

    Returns:
        Trajectory; ``truncated`` is set when f drops below 1e-300 without rescaling
    """
    if not sigma_bar > 0.0:
        raise SimulationError(f"σ̄ must be positive, got {sigma_bar}")
    if T < 1:
        raise SimulationError(f"T must be positive, got {T}")

    tr = model.trace
    x_star = model.x_star
    f = np.empty(T + 1)
    exponent = np.zeros(T + 1, dtype=np.int64)
    g_m = np.empty(T)
    grad_norm = np.empty(T)
    sigma = np.empty(T)
    e_Ae = np.empty(T)
    progress = np.empty(T)

    state = state0
    shift = 0
    done = T
    truncated = False
    f_current = model.evaluate(state.m)
    for t in range(T):
        f[t] = f_current
        exponent[t] = shift
        if f_current < UNDERFLOW:
            logger.warning(f"f(m) = {f_current:.3e} underflowed at t={t}; truncating the run")
            truncated, done = True, t
            break
        ctx = compute_context(model, state.m)
        s = sigma_bar * ctx.grad_norm / (state.c_m * tr)
        g_m[t], grad_norm[t], sigma[t], e_Ae[t] = ctx.g_m, ctx.grad_norm, s, ctx.e_Ae

        state = step(replace(state, sigma=s), model, weights)
        f_next = model.evaluate(state.m)
        progress[t] = (f_current - f_next) / f_current

        if rescale and 0.0 < f_next and not _RESCALE_LOW <= f_next <= _RESCALE_HIGH:
            k = -int(round(math.log2(f_next) / 2.0))
            state = replace(state, m=x_star + np.ldexp(state.m - x_star, k))
            shift += k
            f_next = model.evaluate(state.m)
        f_current = f_next
    else:
        f[T] = f_current
        exponent[T] = shift

    n = done
    if truncated:
        f, exponent = f[: n + 1], exponent[: n + 1]
    recorded = np.array([True if record is None else bool(record(t)) for t in range(n)], dtype=bool)
    return Trajectory(
        f=f,
        exponent=exponent,
        g_m=g_m[:n],
        grad_norm=grad_norm[:n],
        sigma=sigma[:n],
        e_Ae=e_Ae[:n],
        progress=progress[:n],
        recorded=recorded,
        truncated=truncated,
        requested=T,
    )


def one_step_quality_gain_mc(
    m: np.ndarray,
    sigma: float,
    c_m: float,
    model: QuadraticModel,
    weights: WeightVector,
    reps: int,
    seed: Seed,
    cov_sqrt: Optional[np.ndarray] = None,
) -> QualityGainEstimate:
    """
    Monte-Carlo estimate of φ = E[f(m) - f(m')]/(f(m) - f(x*)).

    Draws are taken in fixed-size chunks from one seeded generator, so two calls
    with the same seed, λ and N see identical candidates.
    """
    if reps < MIN_REPS:
        raise SimulationError(f"reps must be ≥ {MIN_REPS}, got {reps}")
    if c_m < 0.0 or sigma < 0.0:
        raise SimulationError("σ and c_m must be nonnegative")
    m = np.asarray(m, dtype=float)
    f_m = model.evaluate(m)
    if not f_m > 0.0:
        raise ZeroGradientError("the mean sits at the optimum; the quality gain is undefined")

    lam, dim = weights.lam, model.dim
    rng = np.random.default_rng(as_seed_sequence(seed))
    chunk = max(1, (1 << 21) // (lam * dim))
    gains = np.empty(reps)
    for start in range(0, reps, chunk):
        k = min(chunk, reps - start)
        z = rng.standard_normal((k, lam, dim))
        steps = z if cov_sqrt is None else z @ cov_sqrt.T
        fvalues = model.evaluate((m + sigma * steps).reshape(-1, dim)).reshape(k, lam)
        W = weight_values(fvalues, weights)
        m_new = m + c_m * sigma * np.einsum("kl,kln->kn", W, steps)
        gains[start:start + k] = (f_m - model.evaluate(m_new)) / f_m

    return QualityGainEstimate(float(gains.mean()), float(gains.std(ddof=1) / math.sqrt(reps)), reps)


def normalized_quality_gain_mc(
    model: QuadraticModel,
    m: np.ndarray,
    sigma_bar: float,
    c_m: float,
    weights: WeightVector,
    reps: int,
    seed: Seed,
) -> QualityGainEstimate:
    """φ/g(m) at normalized step-size σ̄, the quantity the theory predicts."""
    ctx = compute_context(model, m)
    sigma = denormalize(model, m, sigma_bar, c_m)
    est = one_step_quality_gain_mc(m, sigma, c_m, model, weights, reps, seed)
    return QualityGainEstimate(est.mean / ctx.g_m, est.stderr / ctx.g_m, reps)
