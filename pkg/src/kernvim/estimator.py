"""One-step estimator of the embedded importance function.

The estimate is stored as a coefficient vector ``c`` over a set of basis
points, ``gamma(x) = sum_j c_j K(x, X_j)``, with

    c = (1/n) * sum_V omega_V * (alpha_V + W_V K_V beta_V).

By default the basis is the sample itself. In sample-splitting mode the
CME is fitted on a training fold, the basis is ``[train; eval]`` and the
one-step average runs over the ``n`` evaluation points only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .cme import CateFit, CMEModel
from .errors import InputError, NumericalError
from .kernel import KernelConfig, RidgeSolver
from .measures import WeightVector
from .nuisance import PseudoOutcomes


class Smoothing:
    """The map ``beta -> W_V K_V beta`` onto the smoothing part of the basis.

    Nonempty subsets keep a Cholesky factor of ``K_V + lam I`` (training
    rows) and the cross-Gram ``K_V`` (training x evaluation). The empty
    subset maps ``beta`` to ``sum(beta) / n_train`` on every training row,
    which is the empirical mean embedding.
    """

    def __init__(self, n_eval: int, solver: Optional[RidgeSolver] = None,
                 K_cross: Optional[np.ndarray] = None, n_train: Optional[int] = None,
                 in_sample: bool = True):
        self.n_eval = n_eval
        self.solver = solver
        self.K_cross = K_cross
        self.n_train = n_eval if n_train is None else n_train
        self.in_sample = in_sample

    @property
    def empty(self) -> bool:
        return self.solver is None

    def __call__(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        if self.empty:
            return np.full(self.n_train, beta.sum(axis=0) / self.n_train)
        if self.in_sample:
            # K_V and W_V commute: apply K_V after the triangular solves
            return self.K_cross @ self.solver.solve(beta)
        return self.solver.solve(self.K_cross @ beta)

    def matrix(self) -> np.ndarray:
        """Dense ``n_train x n_eval`` matrix of the map."""
        if self.empty:
            return np.full((self.n_train, self.n_eval), 1.0 / self.n_train)
        return self.solver.solve(self.K_cross)


@dataclass
class SubsetComponents:
    subset: tuple
    alpha: np.ndarray
    beta: np.ndarray
    smoothing: Smoothing = field(repr=False)
    alpha_offset: int = 0

    @property
    def n(self) -> int:
        return self.alpha.shape[0]


@dataclass
class EmbeddedEstimate:
    coefficients: np.ndarray
    weight_descriptor: str
    n: int
    kernel: KernelConfig


def build_components(psi, cate: CateFit, cme: CMEModel, K_V=None) -> SubsetComponents:
    """In-sample components: ``alpha`` = CATE fit, ``beta = psi - alpha``."""
    psi = psi.psi if isinstance(psi, PseudoOutcomes) else np.asarray(psi, dtype=float)
    if tuple(cate.subset) != tuple(cme.subset):
        raise InputError(f"subset mismatch: CATE fit on {cate.subset}, CME on {cme.subset}")
    if cate.alpha.shape != psi.shape:
        raise InputError("CATE fit and pseudo-outcomes are not aligned")
    alpha = cate.alpha
    beta = psi - alpha
    n = psi.shape[0]
    if cme.empty:
        smoothing = Smoothing(n)
    else:
        K_V = cme.K_V if K_V is None else np.asarray(K_V, dtype=float)
        smoothing = Smoothing(n, cme.solver, K_V)
    return SubsetComponents(tuple(cate.subset), alpha, beta, smoothing)


def build_split_components(psi_eval, alpha_eval, cme: CMEModel, K_cross=None) -> SubsetComponents:
    """Components for sample-splitting mode.

    ``alpha_eval`` are CATE predictions at the evaluation rows from a model
    fitted on the training rows; ``K_cross`` is the training x evaluation
    subset Gram matrix. The basis is ``[train; eval]``.
    """
    psi_eval = np.asarray(psi_eval, dtype=float)
    alpha_eval = np.asarray(alpha_eval, dtype=float)
    n_eval = psi_eval.shape[0]
    n_train = cme.training_rows.shape[0]
    if cme.empty:
        smoothing = Smoothing(n_eval, n_train=n_train, in_sample=False)
    else:
        smoothing = Smoothing(n_eval, cme.solver, np.asarray(K_cross, dtype=float),
                              n_train=n_train, in_sample=False)
    return SubsetComponents(tuple(cme.subset), alpha_eval, psi_eval - alpha_eval,
                            smoothing, alpha_offset=n_train)


def _basis_size(components: Sequence[SubsetComponents]) -> int:
    first = components[0]
    return first.alpha_offset + first.n


def _lookup(components, omega: WeightVector) -> Dict[tuple, SubsetComponents]:
    by_subset = {tuple(c.subset): c for c in components}
    missing = [V for V in omega.weights if V not in by_subset]
    if missing:
        raise InputError(f"no components for subsets {missing}")
    return by_subset


def combine(components: Sequence[SubsetComponents], omega: WeightVector,
            kernel: KernelConfig = None) -> EmbeddedEstimate:
    """Coefficient vector of the weighted one-step estimate."""
    if not components:
        raise InputError("no subset components supplied")
    by_subset = _lookup(components, omega)
    n = components[0].n
    c = np.zeros(_basis_size(components))
    for V, w in omega.as_float().items():
        comp = by_subset[V]
        off = comp.alpha_offset
        c[off:off + n] += w * comp.alpha
        s = comp.smoothing(comp.beta)
        c[: s.shape[0]] += w * s
    return EmbeddedEstimate(c / n, omega.descriptor, n, kernel)


def bootstrap_operator(components: Sequence[SubsetComponents], omega: WeightVector):
    """Matrix ``G`` with ``c_tilde = G @ w`` for bootstrap weights ``w``.

    ``G = sum_V omega_V (E diag(alpha_V) + S_V diag(beta_V))`` where ``E``
    places evaluation rows in the basis and ``S_V`` is the smoothing map.
    Also returns ``sum_V omega_V E alpha_V`` (basis length), the plug-in
    part of the estimate. Note ``combine(...).coefficients == G @ 1 / n``.
    """
    by_subset = _lookup(components, omega)
    n = components[0].n
    G = np.zeros((_basis_size(components), n))
    plug = np.zeros(G.shape[0])
    for V, w in omega.as_float().items():
        comp = by_subset[V]
        off = comp.alpha_offset
        idx = np.arange(n)
        G[off + idx, idx] += w * comp.alpha
        plug[off:off + n] += w * comp.alpha
        S = comp.smoothing.matrix()
        G[: S.shape[0]] += w * (S * comp.beta[None, :])
    return G, plug


def resampled_coefficients(components: Sequence[SubsetComponents], omega: WeightVector,
                           w) -> np.ndarray:
    """``c_tilde`` for one vector of bootstrap weights, applied subset by subset."""
    by_subset = _lookup(components, omega)
    w = np.asarray(w, dtype=float)
    n = components[0].n
    c = np.zeros(_basis_size(components))
    for V, wt in omega.as_float().items():
        comp = by_subset[V]
        off = comp.alpha_offset
        c[off:off + n] += wt * (w * comp.alpha)
        s = comp.smoothing(w * comp.beta)
        c[: s.shape[0]] += wt * s
    return c


def evaluate(est: EmbeddedEstimate, K_cross) -> np.ndarray:
    """Values ``K_cross @ c`` at query points; ``K_cross`` is queries x basis."""
    K_cross = np.atleast_2d(np.asarray(K_cross, dtype=float))
    if K_cross.shape[1] != est.coefficients.shape[0]:
        raise InputError(
            f"kernel sections have {K_cross.shape[1]} columns, estimate has "
            f"{est.coefficients.shape[0]} coefficients"
        )
    return K_cross @ est.coefficients


def rkhs_norm_sq(est: EmbeddedEstimate, K) -> float:
    c = est.coefficients
    K = np.asarray(K, dtype=float)
    if K.shape != (c.shape[0], c.shape[0]):
        raise InputError(f"Gram matrix shape {K.shape} does not match {c.shape[0]} coefficients")
    value = float(c @ K @ c)
    if value < -1e-12:
        raise NumericalError(f"negative squared RKHS norm {value:.3e}; Gram matrix not PSD")
    return max(value, 0.0)
