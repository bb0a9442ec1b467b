"""Gaussian kernels, Gram matrices, bandwidth selection and ridge solves."""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DegenerateDataError, InputError, NumericalError

FULL = None  # subset marker: all covariate columns


@dataclass(frozen=True)
class KernelConfig:
    bandwidth: float
    family: str = "gaussian"
    sup_value: float = 1.0

    def __post_init__(self):
        if self.family != "gaussian":
            raise InputError(f"unsupported kernel family {self.family!r}")
        if not np.isfinite(self.bandwidth) or self.bandwidth <= 0:
            raise InputError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.sup_value != 1.0:
            raise InputError("gaussian kernel has sup_x K(x, x) = 1")


@dataclass(frozen=True)
class Standardizer:
    """Column-wise z-scoring fitted on the training covariates."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        # constant columns are left unscaled
        scale = np.where(scale > 0, scale, 1.0)
        return cls(mean, scale)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.mean.shape[0]:
            raise InputError(f"expected {self.mean.shape[0]} columns, got shape {X.shape}")
        return (X - self.mean) / self.scale


def gaussian_kernel(x, x2, config: KernelConfig) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if x.shape != x2.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {x2.shape}")
    sq = float(np.sum((x - x2) ** 2))
    return float(np.exp(-sq / (2.0 * config.bandwidth**2)))


def median_heuristic(points) -> float:
    """Median of the pairwise Euclidean distances between distinct rows."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        raise InputError("median heuristic needs at least two points")
    h = float(np.median(pdist(points)))
    if h <= 0:
        raise DegenerateDataError(
            "median pairwise distance is zero; covariates are (mostly) identical"
        )
    return h


def _select(points: np.ndarray, subset) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if subset is FULL:
        return points
    subset = tuple(subset)
    if len(subset) == 0:
        raise InputError("the empty subset has no Gram matrix; handle it separately")
    if min(subset) < 0 or max(subset) >= points.shape[1]:
        raise InputError(f"subset {subset} out of range for d={points.shape[1]}")
    return points[:, list(subset)]


def gram(points, subset, config: KernelConfig) -> np.ndarray:
    """Gram matrix of ``points`` restricted to the columns in ``subset``."""
    P = _select(points, subset)
    if P.shape[0] == 1:
        return np.ones((1, 1))
    sq = squareform(pdist(P, "sqeuclidean"))
    return np.exp(-sq / (2.0 * config.bandwidth**2))


def cross_gram(points, others, subset, config: KernelConfig) -> np.ndarray:
    """``K[i, j] = K(points_i, others_j)`` on the selected columns."""
    A = _select(points, subset)
    B = _select(others, subset)
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * config.bandwidth**2))


class RidgeSolver:
    """Cholesky factorization of ``K + lam * I`` with repeated solves.

    Falls back to a small diagonal jitter if the factorization fails.
    """

    def __init__(self, K: np.ndarray, lam: float):
        if not lam > 0:
            raise InputError(f"ridge parameter must be positive, got {lam}")
        K = np.asarray(K, dtype=float)
        n = K.shape[0]
        A = K + lam * np.eye(n)
        try:
            self._factor = linalg.cho_factor(A, lower=True)
        except linalg.LinAlgError:
            jitter = 1e-10 * np.trace(K) / n
            try:
                self._factor = linalg.cho_factor(A + jitter * np.eye(n), lower=True)
            except linalg.LinAlgError as exc:
                raise NumericalError(f"Cholesky of K + lam*I failed: {exc}") from exc
        self.lam = lam
        self.n = n

    def solve(self, b) -> np.ndarray:
        return linalg.cho_solve(self._factor, b)


def ridge_inverse(K, lam: float) -> np.ndarray:
    """Explicit ``(K + lam * I)^{-1}``, symmetrized."""
    K = np.asarray(K, dtype=float)
    W = RidgeSolver(K, lam).solve(np.eye(K.shape[0]))
    return 0.5 * (W + W.T)
