"""Closed-form quality gain predictions and the error bound around them.

All quantities use the Tr(A) = 1 convention: callers pass e_Ae = eᵀAe/Tr(A),
tr_A2 = Tr(A²)/Tr(A)² and d1_hat = d₁(A)/Tr(A). Step-sizes returned here are
asymptotically optimal (c_m → ∞), not optimal for a finite learning rate.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg

from ..errors import NumericError, SingularSystemError, TheoryError, WeightError
from .order_stats import MomentTable, build_moment_table, default_first_method
from .quadratic import QuadraticModel, compute_context, make_model
from .weights import LipschitzConstants, WeightScheme, WeightVector, lipschitz_bounds, make_weights

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA_EXACT = 200
MAX_CONDITION = 1e12
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class TheoryInputs:
    """Everything the asymptotic prediction depends on."""

    sigma_bar: float
    c_m: float
    weights: WeightVector
    moments: MomentTable
    e_Ae: float
    tr_A2: float
    d1_hat: float
    allow_large_lambda: bool = False

    def __post_init__(self):
        if self.sigma_bar < 0.0:
            raise TheoryError(f"σ̄ must be nonnegative, got {self.sigma_bar}")
        if self.c_m <= 0.0:
            raise TheoryError(f"c_m must be positive, got {self.c_m}")
        if self.weights.lam != self.moments.lam:
            raise TheoryError(f"weights have λ={self.weights.lam}, moments λ={self.moments.lam}")
        slack = 1e-12
        if not -slack <= self.e_Ae <= self.d1_hat + slack or self.d1_hat > 1.0 + slack:
            raise TheoryError(f"need 0 ≤ e_Ae ≤ d1_hat ≤ 1, got e_Ae={self.e_Ae}, d1_hat={self.d1_hat}")
        if self.tr_A2 > self.d1_hat + slack:
            raise TheoryError(f"Tr(Â²)={self.tr_A2} exceeds d1_hat={self.d1_hat}")

    @classmethod
    def from_model(
        cls,
        model: QuadraticModel,
        weights: WeightVector,
        moments: MomentTable,
        sigma_bar: float,
        c_m: float,
        m: Optional[np.ndarray] = None,
        allow_large_lambda: bool = False,
    ) -> "TheoryInputs":
        """Inputs for a model; without a mean the worst case e_Ae = d_N(Â) is used."""
        tr = model.trace
        e_Ae = compute_context(model, m).e_Ae if m is not None else model.dN / tr
        return cls(
            sigma_bar=sigma_bar,
            c_m=c_m,
            weights=weights,
            moments=moments,
            e_Ae=float(min(e_Ae, model.d1 / tr)),
            tr_A2=model.trace_sq / tr ** 2,
            d1_hat=model.d1 / tr,
            allow_large_lambda=allow_large_lambda,
        )

    def with_sigma_bar(self, sigma_bar: float) -> "TheoryInputs":
        return replace(self, sigma_bar=sigma_bar)


@dataclass(frozen=True)
class ErrorBound:
    alpha: float
    g_alpha: float
    bound: float
    vacuous: bool


@dataclass(frozen=True)
class QualityGainPrediction:
    phi_inf: float
    phi_hat: float
    sigma_bar_star: float
    error_bound: float
    alpha: float
    g_alpha: float


@dataclass(frozen=True)
class OptimalWeightsResult:
    sigma_bar: float
    weights: WeightVector
    w_bar: np.ndarray
    optimal_value: float
    residual: float
    condition: float
    exact: bool


@dataclass(frozen=True)
class ScalingReport:
    table: pd.DataFrame
    d1_ratio_decreasing: bool
    lipschitz_ratio_decreasing: bool


# ---------------------------------------------------------------------------
# Sphere limit
# ---------------------------------------------------------------------------

def phi_inf(sigma_bar: float, weights: WeightVector, e1: Sequence[float]) -> float:
    """φ̄∞ = -σ̄ Σ w_i E[N_{i:λ}] - σ̄²/(2μ_w)."""
    w = weights.w
    return float(-sigma_bar * np.dot(w, e1) - 0.5 * sigma_bar ** 2 * np.dot(w, w))


def sigma_bar_star_sphere(weights: WeightVector, e1: Sequence[float]) -> float:
    """σ̄* = -μ_w Σ w_i E[N_{i:λ}], the maximizer of φ̄∞."""
    return float(-weights.mu_w * np.dot(weights.w, e1))


# ---------------------------------------------------------------------------
# Asymptotic normalized quality gain
# ---------------------------------------------------------------------------

def _weighted_second_moment(w: np.ndarray, moments: MomentTable, allow_large_lambda: bool) -> float:
    """wᵀE2w, or its large-λ substitute (wᵀE1)²."""
    if moments.e2 is not None:
        return float(w @ moments.e2 @ w)
    if allow_large_lambda:
        return float(np.dot(w, moments.e1)) ** 2
    raise TheoryError(f"product moments for λ={moments.lam} are absent and the large-λ approximation is off")


def phi_hat(inputs: TheoryInputs) -> float:
    """
    φ̂ = -σ̄ wᵀE1 - (σ̄²/2)(1 - eᵀAe)‖w‖² - (σ̄²/2) eᵀAe · wᵀE2w.

    Raises:
        TheoryError: If e2 is absent and the large-λ approximation is not allowed
    """
    w = inputs.weights.w
    s = inputs.sigma_bar
    quad = _weighted_second_moment(w, inputs.moments, inputs.allow_large_lambda)
    return float(
        -s * np.dot(w, inputs.moments.e1)
        - 0.5 * s ** 2 * (1.0 - inputs.e_Ae) * np.dot(w, w)
        - 0.5 * s ** 2 * inputs.e_Ae * quad
    )


def phi_hat_matrix(w_bar: np.ndarray, e1: np.ndarray, e2: np.ndarray, e_Ae: float) -> float:
    """Matrix form -w̄ᵀE1 - ½w̄ᵀ(I + eᵀAe(E2 - I))w̄ with w̄ = σ̄w."""
    w_bar = np.asarray(w_bar, dtype=float)
    system = _system_matrix(np.asarray(e2, dtype=float), e_Ae)
    return float(-np.dot(w_bar, e1) - 0.5 * w_bar @ system @ w_bar)


def _system_matrix(e2: np.ndarray, e_Ae: float) -> np.ndarray:
    lam = e2.shape[0]
    return (1.0 - e_Ae) * np.eye(lam) + e_Ae * e2


def optimal_weights_general(
    moments: MomentTable,
    e_Ae: float,
    lambda_exact: int = DEFAULT_LAMBDA_EXACT,
) -> OptimalWeightsResult:
    """
    Maximize φ̂ jointly over σ̄ and w by solving (I + eᵀAe(E2 - I))w̄ = -E1.

    Beyond ``lambda_exact`` the e_Ae → 0 solution w̄ = -E1 is returned with a
    warning.

    Raises:
        SingularSystemError: If the system is numerically singular
        NumericError: If the residual check fails
        TheoryError: If e2 is needed but absent
    """
    e1 = np.asarray(moments.e1, dtype=float)
    lam = moments.lam
    if lam < 2 or not np.any(e1):
        raise WeightError("optimal weights undefined for λ=1")

    exact = True
    condition = 1.0
    residual = 0.0
    if e_Ae == 0.0:
        w_bar = -e1.copy()
    elif lam > lambda_exact:
        logger.warning(
            f"λ={lam} exceeds λ_exact={lambda_exact}; using w̄ = -E1 (the e_Ae → 0 solution)"
        )
        w_bar = -e1.copy()
        exact = False
        residual = float("nan")
    else:
        if moments.e2 is None:
            raise TheoryError(f"optimal weights for e_Ae={e_Ae} need product moments (λ={lam})")
        system = _system_matrix(np.asarray(moments.e2, dtype=float), e_Ae)
        condition = float(np.linalg.cond(system))
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularSystemError("optimal-weight system is singular", condition)
        lu_piv = scipy.linalg.lu_factor(system)
        w_bar = scipy.linalg.lu_solve(lu_piv, -e1)
        residual = float(np.linalg.norm(system @ w_bar + e1))
        if residual > 1e-8 * np.linalg.norm(e1):
            raise NumericError(f"optimal-weight residual {residual:.3e} too large")
        w_bar = 0.5 * (w_bar - w_bar[::-1])

    sigma_bar = float(np.abs(w_bar).sum())
    weights = WeightVector(w=w_bar / sigma_bar, scheme=WeightScheme.OPTIMAL)

    return OptimalWeightsResult(
        sigma_bar=sigma_bar,
        weights=weights,
        w_bar=w_bar,
        optimal_value=float(-0.5 * np.dot(e1, w_bar)),
        residual=residual,
        condition=condition,
        exact=exact,
    )


def sigma_bar_star_general(
    weights: WeightVector,
    moments: MomentTable,
    e_Ae: float,
    mode: str = "exact",
) -> float:
    """
    Asymptotically optimal σ̄ for fixed weights.

    exact:        -wᵀE1 / ((1 - eᵀAe)‖w‖² + eᵀAe·wᵀE2w)
    large_lambda: wᵀE2w replaced by (wᵀE1)², i.e.
                  (1/eᵀAe)μ_w(-wᵀE1) / (1/eᵀAe - 1 + μ_w(wᵀE1)²)
    """
    w = weights.w
    if mode == "exact":
        if moments.e2 is None:
            raise TheoryError("exact σ̄* needs product moments")
        quad = float(w @ moments.e2 @ w)
    elif mode == "large_lambda":
        quad = float(np.dot(w, moments.e1)) ** 2
    else:
        raise TheoryError(f"unknown σ̄* mode {mode!r}")
    return float(-np.dot(w, moments.e1) / ((1.0 - e_Ae) * np.dot(w, w) + e_Ae * quad))


# ---------------------------------------------------------------------------
# Error bound
# ---------------------------------------------------------------------------

def g_alpha(alpha: float, d1_hat: float, tr_A2: float) -> float:
    """G(α) = min[1, α(2 + √2·√ln(1/α)/√π + d₁·ln(1/α)/(√(2π)·√Tr(Â²)))]."""
    if alpha >= 1.0:
        return 1.0
    if alpha <= 0.0:
        return 0.0
    log_inv = math.log(1.0 / alpha)
    value = alpha * (
        2.0
        + math.sqrt(2.0) * math.sqrt(log_inv) / math.sqrt(math.pi)
        + d1_hat * log_inv / (math.sqrt(2.0 * math.pi) * math.sqrt(tr_A2))
    )
    return min(1.0, value)


def error_bound(inputs: TheoryInputs, lipschitz: LipschitzConstants, form: str = "theorem") -> ErrorBound:
    """
    Bound on |φ̄ - φ̂| for the given inputs.

    ``form="lemma"`` evaluates the L2 and L3 terms with √Tr(Â²) kept explicit,
    σ̄²λ/2·L2(√2G + α/√(2π))√Tr(Â²) and
    σ̄²λ(λ-1)/2·L3(√(8/π)G + √2α/π)√Tr(Â²); substituting σ̄√Tr(Â²) = c_m·α
    gives the theorem form, so both agree whenever α < 1.
    """
    s = inputs.sigma_bar
    c = inputs.c_m
    lam = inputs.weights.lam
    sqrt_tr = math.sqrt(inputs.tr_A2)
    alpha = min(1.0, s / c * sqrt_tr)
    if alpha <= 0.0:
        return ErrorBound(alpha=0.0, g_alpha=0.0, bound=0.0, vacuous=False)

    G = g_alpha(alpha, inputs.d1_hat, inputs.tr_A2)
    l1, l2, l3 = lipschitz.as_tuple()

    t1 = s * lam * l1 * (_SQRT_2_OVER_PI * G + alpha / math.sqrt(4.0 * math.pi))
    if form == "theorem":
        t2 = s * c * lam * l2 * (G / math.sqrt(2.0) + alpha / math.sqrt(8.0 * math.pi)) * alpha
        t3 = s * c * lam * (lam - 1) * l3 * (_SQRT_2_OVER_PI * G + alpha / math.sqrt(2.0 * math.pi ** 2)) * alpha
    elif form == "lemma":
        t2 = 0.5 * s ** 2 * lam * l2 * (math.sqrt(2.0) * G + alpha / math.sqrt(2.0 * math.pi)) * sqrt_tr
        t3 = (0.5 * s ** 2 * lam * (lam - 1) * l3
              * (math.sqrt(8.0 / math.pi) * G + math.sqrt(2.0) * alpha / math.pi) * sqrt_tr)
    else:
        raise TheoryError(f"unknown bound form {form!r}")

    return ErrorBound(alpha=alpha, g_alpha=G, bound=float(t1 + t2 + t3), vacuous=alpha >= 1.0)


def predict(inputs: TheoryInputs, lipschitz: LipschitzConstants) -> QualityGainPrediction:
    """Every scalar prediction for one set of inputs."""
    mode = "exact" if inputs.moments.e2 is not None else "large_lambda"
    if mode == "large_lambda" and not inputs.allow_large_lambda:
        raise TheoryError("product moments absent and the large-λ approximation is off")
    bound = error_bound(inputs, lipschitz)
    return QualityGainPrediction(
        phi_inf=phi_inf(inputs.sigma_bar, inputs.weights, inputs.moments.e1),
        phi_hat=phi_hat(inputs),
        sigma_bar_star=sigma_bar_star_general(inputs.weights, inputs.moments, inputs.e_Ae, mode),
        error_bound=bound.bound,
        alpha=bound.alpha,
        g_alpha=bound.g_alpha,
    )


# ---------------------------------------------------------------------------
# Scaling conditions
# ---------------------------------------------------------------------------

def parse_lambda_rule(rule: Union[str, Callable[[int], int]]) -> Callable[[int], int]:
    """
    Turn a growth rule into a function N -> λ.

    Accepted strings: "power:β" or "power:β:scale" (λ = ⌊scale·N^β⌋),
    "linear" (λ = N) and "constant:c".
    """
    if callable(rule):
        return rule
    parts = str(rule).split(":")
    kind = parts[0]
    try:
        if kind == "power":
            beta = float(parts[1])
            scale = float(parts[2]) if len(parts) > 2 else 1.0
            return lambda n: max(2, int(math.floor(scale * n ** beta + 1e-9)))
        if kind == "linear":
            return lambda n: max(2, int(n))
        if kind == "constant":
            c = int(parts[1])
            return lambda n: c
    except (IndexError, ValueError) as exc:
        raise TheoryError(f"malformed λ rule {rule!r}") from exc
    raise TheoryError(f"unknown λ rule {rule!r}")


def weights_for_family(family: str, lam: int) -> WeightVector:
    """Weights from a family name: optimal, optimal_positive, cma_log or truncation:ρ (μ = ⌊λ/ρ⌋)."""
    name, _, arg = family.partition(":")
    if name == "truncation":
        ratio = float(arg or 4)
        return make_weights("truncation", lam, mu=max(1, int(lam // ratio)))
    if name in ("optimal", "optimal_positive"):
        e1 = build_moment_table(lam, default_first_method(lam)).e1
        return make_weights(name, lam, e1=e1)
    return make_weights(name, lam)


def scaling_condition_check(
    dims: Sequence[int],
    lambda_rule: Union[str, Callable[[int], int]],
    spectrum_family: Dict,
    weights_family: str,
    epsilon: float = 0.01,
) -> ScalingReport:
    """
    Finite-N trend of the two sufficient conditions for φ̄ → φ̂.

    Along N the report tracks λ²·d₁(Â) and
    max(λ, L1^{1/(1-ε)}λ^{(2-ε)/(1-ε)}, L2^{1/(2-ε)}λ^{(3-ε)/(2-ε)}, L3^{1/(2-ε)}λ^{(4-ε)/(2-ε)})·√Tr(Â²)
    and whether each decreases. Lipschitz constants come from the analytic bounds.
    """
    if not 0.0 < epsilon < 1.0:
        raise TheoryError(f"ε must lie in (0, 1), got {epsilon}")
    rule = parse_lambda_rule(lambda_rule)
    rows = []
    for n in dims:
        lam = int(rule(int(n)))
        model = make_model({**spectrum_family, "dim": int(n)})
        weights = weights_for_family(weights_family, lam)
        l1, l2, l3 = lipschitz_bounds(weights).as_tuple()
        d1_hat = model.d1 / model.trace
        sqrt_tr2 = math.sqrt(model.trace_sq) / model.trace
        terms = (
            float(lam),
            l1 ** (1.0 / (1.0 - epsilon)) * lam ** ((2.0 - epsilon) / (1.0 - epsilon)),
            l2 ** (1.0 / (2.0 - epsilon)) * lam ** ((3.0 - epsilon) / (2.0 - epsilon)),
            l3 ** (1.0 / (2.0 - epsilon)) * lam ** ((4.0 - epsilon) / (2.0 - epsilon)),
        )
        rows.append({
            "N": int(n),
            "lambda": lam,
            "mu": weights.mu,
            "d1_hat": d1_hat,
            "sqrt_tr2": sqrt_tr2,
            "lambda_sq_d1": lam ** 2 * d1_hat,
            "lipschitz_term": max(terms) * sqrt_tr2,
        })
        logger.debug(f"Scaling check N={n}: λ={lam}, λ²d₁={rows[-1]['lambda_sq_d1']:.4g}")

    table = pd.DataFrame(rows)
    return ScalingReport(
        table=table,
        d1_ratio_decreasing=bool(np.all(np.diff(table["lambda_sq_d1"].to_numpy()) < 0.0)),
        lipschitz_ratio_decreasing=bool(np.all(np.diff(table["lipschitz_term"].to_numpy()) < 0.0)),
    )
