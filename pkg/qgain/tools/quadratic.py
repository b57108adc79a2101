"""Convex quadratic objectives f(x) = ½(x - x*)ᵀA(x - x*) stored by spectrum."""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.stats import ortho_group

from ..errors import CovarianceError, ModelError, ZeroGradientError

logger = logging.getLogger(__name__)


class SpectrumType(str, Enum):
    SPHERE = "sphere"
    DISCUS = "discus"
    ELLIPSOID = "ellipsoid"
    CIGAR = "cigar"
    LINEAR = "linear"
    CUSTOM = "custom"


class SpectrumRatios(NamedTuple):
    dN_over_tr: float
    d1_over_tr: float
    tr2_over_tr2: float


@dataclass(frozen=True, eq=False)
class QuadraticModel:
    """
    Quadratic model with Hessian A = R·diag(d)·Rᵀ.

    Eigenvalues are kept in descending order. Without a rotation the model is
    axis-aligned and coordinate i carries eigenvalue d_i.
    """

    eigenvalues: np.ndarray
    spectrum: SpectrumType = SpectrumType.CUSTOM
    alpha: Optional[float] = None
    x_star: Optional[np.ndarray] = None
    rotation: Optional[np.ndarray] = None

    def __post_init__(self):
        d = np.array(self.eigenvalues, dtype=float).ravel()
        if d.size == 0 or not np.all(np.isfinite(d)):
            raise ModelError("Eigenvalues must be a nonempty finite sequence")
        if np.any(d < 0.0) or not np.any(d > 0.0):
            raise ModelError("Eigenvalues must be nonnegative with at least one positive")

        rotation = self.rotation
        order = np.argsort(-d, kind="stable")
        d = d[order]
        if rotation is not None:
            rotation = np.array(rotation, dtype=float)
            if rotation.shape != (d.size, d.size):
                raise ModelError(f"Rotation must be {d.size}x{d.size}")
            if np.max(np.abs(rotation.T @ rotation - np.eye(d.size))) > 1e-10:
                raise ModelError("Rotation matrix is not orthogonal")
            rotation = rotation[:, order]
            rotation.setflags(write=False)
        elif not np.array_equal(order, np.arange(d.size)):
            logger.debug("Sorted eigenvalues of an axis-aligned model into descending order")

        x_star = np.zeros(d.size) if self.x_star is None else np.array(self.x_star, dtype=float).ravel()
        if x_star.shape != d.shape:
            raise ModelError(f"x_star has length {x_star.size}, expected {d.size}")

        d.setflags(write=False)
        x_star.setflags(write=False)
        object.__setattr__(self, "eigenvalues", d)
        object.__setattr__(self, "x_star", x_star)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "spectrum", SpectrumType(self.spectrum))

    # -- constructors ---------------------------------------------------------

    @classmethod
    def sphere(cls, dim: int) -> "QuadraticModel":
        return cls(np.ones(dim), SpectrumType.SPHERE)

    @classmethod
    def discus(cls, dim: int, alpha: float) -> "QuadraticModel":
        d = np.ones(dim)
        d[0] = alpha
        return cls(d, SpectrumType.DISCUS, alpha)

    @classmethod
    def ellipsoid(cls, dim: int, alpha: float) -> "QuadraticModel":
        if dim == 1:
            return cls(np.ones(1), SpectrumType.ELLIPSOID, alpha)
        d = alpha ** (np.arange(dim) / (dim - 1.0))
        return cls(d, SpectrumType.ELLIPSOID, alpha)

    @classmethod
    def cigar(cls, dim: int, alpha: float) -> "QuadraticModel":
        d = np.full(dim, float(alpha))
        d[-1] = 1.0
        return cls(d, SpectrumType.CIGAR, alpha)

    @classmethod
    def linear(cls, dim: int) -> "QuadraticModel":
        return cls(np.arange(1.0, dim + 1.0), SpectrumType.LINEAR)

    @classmethod
    def custom(cls, eigenvalues) -> "QuadraticModel":
        return cls(eigenvalues, SpectrumType.CUSTOM)

    def with_rotation(self, rotation: np.ndarray) -> "QuadraticModel":
        return QuadraticModel(self.eigenvalues, self.spectrum, self.alpha, self.x_star, rotation)

    def with_optimum(self, x_star: np.ndarray) -> "QuadraticModel":
        return QuadraticModel(self.eigenvalues, self.spectrum, self.alpha, x_star, self.rotation)

    # -- derived scalars ------------------------------------------------------

    @property
    def dim(self) -> int:
        return int(self.eigenvalues.size)

    @property
    def trace(self) -> float:
        return float(self.eigenvalues.sum())

    @property
    def trace_sq(self) -> float:
        return float(np.dot(self.eigenvalues, self.eigenvalues))

    @property
    def d1(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def dN(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def d_min_positive(self) -> float:
        d = self.eigenvalues
        return float(d[d > 0.0].min())

    @property
    def condition_number(self) -> float:
        return self.d1 / self.dN if self.dN > 0.0 else float("inf")

    @property
    def normalized_eigenvalues(self) -> np.ndarray:
        """Spectrum of Â = A / Tr(A)."""
        return self.eigenvalues / self.trace

    @property
    def label(self) -> str:
        if self.alpha is not None and self.spectrum not in (SpectrumType.SPHERE, SpectrumType.LINEAR):
            return f"{self.spectrum.value}({self.alpha:g})"
        return self.spectrum.value

    # -- evaluation -----------------------------------------------------------

    def _eigen_coordinates(self, x: np.ndarray) -> np.ndarray:
        y = np.asarray(x, dtype=float) - self.x_star
        return y if self.rotation is None else y @ self.rotation

    def evaluate(self, x: np.ndarray):
        """f(x) for a single point or for each row of a 2-D array."""
        z = self._eigen_coordinates(x)
        values = 0.5 * ((z * z) @ self.eigenvalues)
        return float(values) if np.ndim(values) == 0 else values

    def gradient(self, x: np.ndarray) -> np.ndarray:
        g = self.eigenvalues * self._eigen_coordinates(x)
        return g if self.rotation is None else g @ self.rotation.T

    def quadratic_form(self, v: np.ndarray) -> float:
        """vᵀAv."""
        z = np.asarray(v, dtype=float)
        if self.rotation is not None:
            z = z @ self.rotation
        return float(np.dot(self.eigenvalues, z * z))

    def hessian(self) -> np.ndarray:
        if self.rotation is None:
            return np.diag(self.eigenvalues)
        r = self.rotation
        return (r * self.eigenvalues) @ r.T


@dataclass(frozen=True)
class NormalizationContext:
    """Mean-dependent quantities entering the normalized quality gain."""

    m: np.ndarray
    f_m: float
    grad_norm: float
    e_Ae: float
    g_m: float


def make_model(spec: Dict[str, Any]) -> QuadraticModel:
    """
    Build a model from a config mapping.

    Args:
        spec: {"type": "ellipsoid", "dim": 100, "alpha": 1e6} or
              {"type": "custom", "eigenvalues_file": path}; optional
              "rotate": true with "rotation_seed"

    Raises:
        ModelError: Unknown type or missing keys
    """
    try:
        kind = SpectrumType(spec.get("type", "sphere"))
    except ValueError as exc:
        raise ModelError(f"Unknown spectrum type {spec.get('type')!r}") from exc

    if kind is SpectrumType.CUSTOM:
        if "eigenvalues" in spec:
            eig = np.asarray(spec["eigenvalues"], dtype=float)
        elif "eigenvalues_file" in spec:
            eig = np.loadtxt(spec["eigenvalues_file"], ndmin=1, comments="#", delimiter=",")
        else:
            raise ModelError("custom spectrum needs 'eigenvalues' or 'eigenvalues_file'")
        model = QuadraticModel.custom(eig)
    else:
        dim = int(spec.get("dim", 0))
        if dim < 1:
            raise ModelError("Model 'dim' must be a positive integer")
        alpha = float(spec.get("alpha", 1e6))
        if kind is SpectrumType.SPHERE:
            model = QuadraticModel.sphere(dim)
        elif kind is SpectrumType.LINEAR:
            model = QuadraticModel.linear(dim)
        else:
            if alpha <= 0.0:
                raise ModelError("Model 'alpha' must be positive")
            model = getattr(QuadraticModel, kind.value)(dim, alpha)

    if spec.get("rotate") and model.dim > 1:
        rotation = ortho_group.rvs(model.dim, random_state=int(spec.get("rotation_seed", 0)))
        model = model.with_rotation(rotation)
    return model


def spectrum_ratios(model: QuadraticModel) -> SpectrumRatios:
    """(d_N/Tr, d₁/Tr, Tr(A²)/Tr(A)²) from the eigenvalues."""
    tr = model.trace
    return SpectrumRatios(model.dN / tr, model.d1 / tr, model.trace_sq / tr ** 2)


def spectrum_ratios_closed_form(spectrum: SpectrumType, dim: int, alpha: float = 1.0) -> SpectrumRatios:
    """Closed-form spectrum ratios for the named spectra."""
    spectrum = SpectrumType(spectrum)
    n = float(dim)
    if spectrum is SpectrumType.SPHERE:
        return SpectrumRatios(1.0 / n, 1.0 / n, 1.0 / n)
    if spectrum is SpectrumType.DISCUS:
        tr = n - 1.0 + alpha
        return SpectrumRatios(1.0 / tr, alpha / tr, (n - 1.0 + alpha ** 2) / tr ** 2)
    if spectrum is SpectrumType.CIGAR:
        tr = (n - 1.0) * alpha + 1.0
        return SpectrumRatios(1.0 / tr, alpha / tr, ((n - 1.0) * alpha ** 2 + 1.0) / tr ** 2)
    if spectrum is SpectrumType.LINEAR:
        tr = n * (n + 1.0) / 2.0
        return SpectrumRatios(1.0 / tr, n / tr, (n * (n + 1.0) * (2.0 * n + 1.0) / 6.0) / tr ** 2)
    if spectrum is SpectrumType.ELLIPSOID:
        if dim == 1 or alpha == 1.0:
            return SpectrumRatios(1.0 / n, 1.0 / n, 1.0 / n)
        log_r = np.log(alpha) / (n - 1.0)
        tr = np.expm1(n * log_r) / np.expm1(log_r)
        tr2 = np.expm1(2.0 * n * log_r) / np.expm1(2.0 * log_r)
        return SpectrumRatios(float(1.0 / tr), float(alpha / tr), float(tr2 / tr ** 2))
    raise ModelError("custom spectra have no closed-form ratios")


def g_bounds(model: QuadraticModel) -> Tuple[float, float]:
    """Brackets (d_M/Tr, d₁/Tr) for g(m)/2, d_M the smallest positive eigenvalue."""
    tr = model.trace
    return model.d_min_positive / tr, model.d1 / tr


def compute_context(model: QuadraticModel, m: np.ndarray) -> NormalizationContext:
    """
    Evaluate g(m) = ‖∇f‖²/(f·Tr A) and eᵀAe/Tr A at the mean.

    Raises:
        ZeroGradientError: If ∇f(m) = 0
    """
    m = np.asarray(m, dtype=float)
    grad = model.gradient(m)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm == 0.0:
        raise ZeroGradientError("gradient is zero at the mean; σ̄ and g(m) are undefined")
    f_m = model.evaluate(m)
    tr = model.trace
    e = grad / grad_norm
    return NormalizationContext(
        m=m,
        f_m=f_m,
        grad_norm=grad_norm,
        e_Ae=model.quadratic_form(e) / tr,
        g_m=grad_norm ** 2 / (f_m * tr),
    )


def _gradient_norm(model: QuadraticModel, m: np.ndarray) -> float:
    norm = float(np.linalg.norm(model.gradient(m)))
    if norm == 0.0:
        raise ZeroGradientError("gradient is zero at the mean; σ̄ is undefined")
    return norm


def normalize(model: QuadraticModel, m: np.ndarray, sigma: float, c_m: float) -> float:
    """σ̄ = σ·c_m·Tr(A)/‖∇f(m)‖."""
    return sigma * c_m * model.trace / _gradient_norm(model, m)


def denormalize(model: QuadraticModel, m: np.ndarray, sigma_bar: float, c_m: float) -> float:
    """σ = σ̄·‖∇f(m)‖/(c_m·Tr(A))."""
    return sigma_bar * _gradient_norm(model, m) / (c_m * model.trace)


def covariance_sqrt(C: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Symmetric square roots (C^{1/2}, C^{-1/2}).

    Raises:
        CovarianceError: If C is not symmetric positive definite
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise CovarianceError(f"Covariance must be square, got shape {C.shape}")
    if np.max(np.abs(C - C.T)) > 1e-12 * max(1.0, np.abs(C).max()):
        raise CovarianceError("Covariance is not symmetric")
    try:
        scipy.linalg.cholesky(C, lower=True)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError("Covariance is not positive definite") from exc

    vals, vecs = scipy.linalg.eigh(C)
    root = np.sqrt(vals)
    c_half = (vecs * root) @ vecs.T
    c_inv_half = (vecs / root) @ vecs.T
    return 0.5 * (c_half + c_half.T), 0.5 * (c_inv_half + c_inv_half.T)


def covariance_transform(model: QuadraticModel, C: np.ndarray) -> QuadraticModel:
    """
    Model seen through the sampling covariance C.

    Returns the model with Hessian C^{1/2}AC^{1/2} and optimum C^{-1/2}x*;
    sampling N(m, σ²C) on f equals sampling N(C^{-1/2}m, σ²I) on the result.
    """
    C = np.asarray(C, dtype=float)
    c_half, c_inv_half = covariance_sqrt(C)
    if np.array_equal(C, np.eye(model.dim)):
        return model

    B = c_half @ model.hessian() @ c_half
    vals, vecs = scipy.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(-vals, kind="stable")
    return QuadraticModel(
        eigenvalues=np.maximum(vals[order], 0.0),
        spectrum=SpectrumType.CUSTOM,
        x_star=c_inv_half @ model.x_star,
        rotation=vecs[:, order],
    )
