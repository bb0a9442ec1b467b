"""Kernel ridge estimators of subset CATEs and conditional mean embeddings.

For a nonempty covariate subset ``V`` the conditional mean embedding of
``K(., X)`` given ``X_V`` is estimated by kernel ridge regression with
weights ``W_V = (K_V + lam I)^{-1}``. For ``V = ()`` the embedding is the
empirical mean embedding and the subset CATE is the mean pseudo-outcome.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InputError
from .kernel import KernelConfig, RidgeSolver, cross_gram
from .nuisance import PseudoOutcomes


def default_lambda(n: int, d: int) -> float:
    """``sqrt(log n / n)`` for ``d <= 5``, ``log(n)^2 / sqrt(n)`` above."""
    if d <= 5:
        return float(np.sqrt(np.log(n) / n))
    return float(np.log(n) ** 2 / np.sqrt(n))


@dataclass
class CMEModel:
    subset: tuple
    lam: float
    K_V: Optional[np.ndarray] = None
    solver: Optional[RidgeSolver] = field(default=None, repr=False)
    training_rows: Optional[np.ndarray] = field(default=None, repr=False)
    config: Optional[KernelConfig] = None

    @property
    def empty(self) -> bool:
        return len(self.subset) == 0

    @property
    def W(self) -> Optional[np.ndarray]:
        if self.empty:
            return None
        W = self.solver.solve(np.eye(self.K_V.shape[0]))
        return 0.5 * (W + W.T)


@dataclass
class CateFit:
    subset: tuple
    alpha: np.ndarray
    dual_weights: Optional[np.ndarray] = None
    mean_psi: float = 0.0


def fit_cme(subset, K_V, lam: float, training_rows=None, config: KernelConfig = None) -> CMEModel:
    subset = tuple(subset)
    if not lam > 0:
        raise InputError(f"ridge parameter must be positive, got {lam}")
    if len(subset) == 0:
        return CMEModel(subset, lam, training_rows=training_rows, config=config)
    K_V = np.asarray(K_V, dtype=float)
    return CMEModel(subset, lam, K_V, RidgeSolver(K_V, lam), training_rows, config)


def fit_cate(subset, psi, K_V, lam: float, model: CMEModel = None) -> CateFit:
    """In-sample KRR predictions ``K_V (K_V + lam I)^{-1} psi`` of the subset CATE."""
    subset = tuple(subset)
    psi = psi.psi if isinstance(psi, PseudoOutcomes) else np.asarray(psi, dtype=float)
    mean_psi = float(np.mean(psi))
    if len(subset) == 0:
        return CateFit(subset, np.full(psi.shape[0], mean_psi), None, mean_psi)
    if model is None or model.empty:
        model = fit_cme(subset, K_V, lam)
    dual = model.solver.solve(psi)
    return CateFit(subset, model.K_V @ dual, dual, mean_psi)


def predict_cate(fit: CateFit, model: CMEModel, query_points) -> np.ndarray:
    """CATE predictions at query points given in the subset's (standardized) coordinates."""
    query = np.asarray(query_points, dtype=float)
    if query.ndim == 1:
        query = query[:, None]
    if len(fit.subset) == 0:
        return np.full(query.shape[0], fit.mean_psi)
    train = model.training_rows
    if train is None or model.config is None:
        raise InputError("CME model was fitted without training rows; cannot predict")
    if query.shape[1] != train.shape[1]:
        raise InputError(f"query has {query.shape[1]} columns, subset has {train.shape[1]}")
    return cross_gram(query, train, None, model.config) @ fit.dual_weights
