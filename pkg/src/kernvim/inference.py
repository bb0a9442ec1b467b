"""Bootstrap thresholds, the test of no importance, norm intervals, bands and BH."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import halfnorm

from .errors import InputError, NumericalError
from .estimator import (EmbeddedEstimate, SubsetComponents, bootstrap_operator, evaluate,
                        rkhs_norm_sq)
from .measures import WeightVector

DEFAULT_B = 4999
CHUNK = 64  # replicates per work unit; fixed so results do not depend on thread count


@dataclass
class BootstrapSummary:
    draws_norm_sq: np.ndarray = field(repr=False)
    draws_inner: np.ndarray = field(repr=False)
    xi_hat: float
    varsigma_hat: float
    B: int
    seed: int
    alpha: float


@dataclass
class TestReport:
    norm_sq: float
    norm: float
    xi_hat: float
    varsigma_hat: float
    p_value: float
    reject: bool
    ci_triangle: Tuple[float, float]
    ci_delta: Tuple[float, float]
    alpha: float
    measure: str
    n: int
    B: int
    seed: Optional[int] = None

    __test__ = False  # not a pytest class


def quantile_rank(B: int, alpha: float) -> int:
    """1-based rank ``ceil(B (1 - alpha))`` of the order statistic used as quantile."""
    return math.ceil(B * (1 - Fraction(repr(float(alpha)))))


def order_statistic(draws, alpha: float) -> float:
    draws = np.sort(np.asarray(draws, dtype=float))
    k = quantile_rank(draws.shape[0], alpha)
    return float(draws[max(k, 1) - 1])


def _check(B: int, alpha: float):
    if int(B) != B or B < 100:
        raise InputError(f"need an integer B >= 100, got {B}")
    if not 0 < alpha <= 0.5:
        raise InputError(f"alpha must lie in (0, 0.5], got {alpha}")


def replicate_multiplicities(seed: int, index: int, n: int) -> np.ndarray:
    """Multinomial(n; 1/n, ..., 1/n) counts for replicate ``index``.

    Each replicate has its own stream keyed by ``(seed, index)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))
    return np.bincount(rng.integers(0, n, size=n), minlength=n)


def bootstrap(components: Sequence[SubsetComponents], omega: WeightVector,
              est: EmbeddedEstimate, K, B: int = DEFAULT_B, alpha: float = 0.05,
              seed: Optional[int] = None, threads: int = 1,
              multiplicities: Optional[np.ndarray] = None) -> BootstrapSummary:
    """Empirical-bootstrap draws of ``||H#||^2`` and ``sqrt(n) |<gamma_hat, H#>|``.

    With ``w = (m - 1) / n`` the resampled coefficients are ``c~ = G w`` and
    ``||H#||^2 = n c~' K c~``. ``multiplicities`` (B x n) bypasses the RNG.
    """
    _check(B, alpha)
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    K = np.asarray(K, dtype=float)
    n = est.n
    G, _ = bootstrap_operator(components, omega)
    KG = K @ G
    Q = G.T @ KG
    Q = 0.5 * (Q + Q.T)
    v = KG.T @ est.coefficients

    def run(start: int) -> Tuple[np.ndarray, np.ndarray]:
        stop = min(start + CHUNK, B)
        if multiplicities is not None:
            M = np.asarray(multiplicities[start:stop], dtype=float)
        else:
            M = np.stack([replicate_multiplicities(seed, b, n) for b in range(start, stop)])
        Wt = (M.T - 1.0) / n  # n x chunk
        norm_sq = n * np.einsum("ib,ib->b", Wt, Q @ Wt)
        inner = math.sqrt(n) * np.abs(v @ Wt)
        return norm_sq, inner

    starts = range(0, B, CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    draws = np.concatenate([p[0] for p in parts])
    inner = np.concatenate([p[1] for p in parts])
    scale = max(1.0, float(np.max(np.abs(draws))))
    if draws.min() < -1e-10 * scale:
        raise NumericalError(f"bootstrap draw {draws.min():.3e} is negative; operator not PSD")
    draws = np.maximum(draws, 0.0)
    return BootstrapSummary(draws, inner, order_statistic(draws, alpha),
                            order_statistic(inner, alpha), B, seed, alpha)


def halfnormal_varsigma(components: Sequence[SubsetComponents], omega: WeightVector,
                        est: EmbeddedEstimate, K, alpha: float = 0.05) -> float:
    """Half-normal ``(1 - alpha)`` quantile with variance ``P_n <phi_n, gamma_hat>^2``."""
    K = np.asarray(K, dtype=float)
    G, plug = bootstrap_operator(components, omega)
    Kc = K @ est.coefficients
    u = G.T @ Kc - (plug @ Kc) / est.n
    sigma = math.sqrt(float(np.mean(u**2)))
    return float(halfnorm.ppf(1 - alpha, scale=sigma)) if sigma > 0 else 0.0


def norm_ci_triangle(norm: float, xi_hat: float, n: int) -> Tuple[float, float]:
    s = math.sqrt(xi_hat / n)
    return (max(0.0, norm - s), norm + s)


def norm_ci_delta(norm_sq: float, varsigma_hat: float, xi_hat: float, n: int) -> Tuple[float, float]:
    """Convex hull of the delta-method set for the norm and the ``{0}`` null branch.

    Assumes a strictly positive definite influence-function covariance,
    which cannot be checked from data.
    """
    t = 2.0 * varsigma_hat / math.sqrt(n)
    upper = math.sqrt(norm_sq + t)
    contains_zero = n * norm_sq <= xi_hat
    if contains_zero:
        return (0.0, upper)
    return (math.sqrt(max(0.0, norm_sq - t)), upper)


def run_test(est: EmbeddedEstimate, K, boot: BootstrapSummary, alpha: Optional[float] = None,
             varsigma_hat: Optional[float] = None) -> TestReport:
    """Reject no-importance when ``n c'Kc`` exceeds the bootstrap quantile."""
    alpha = boot.alpha if alpha is None else alpha
    n = est.n
    norm_sq = rkhs_norm_sq(est, K)
    stat = n * norm_sq
    xi_hat = boot.xi_hat if alpha == boot.alpha else order_statistic(boot.draws_norm_sq, alpha)
    if varsigma_hat is None:
        varsigma_hat = (boot.varsigma_hat if alpha == boot.alpha
                        else order_statistic(boot.draws_inner, alpha))
    count = int(np.sum(boot.draws_norm_sq >= stat))
    p_value = (1 + count) / (boot.B + 1)
    # integer form of p <= alpha
    reject = (1 + count) <= math.floor(Fraction(repr(float(alpha))) * (boot.B + 1))
    norm = math.sqrt(norm_sq)
    return TestReport(
        norm_sq=norm_sq,
        norm=norm,
        xi_hat=xi_hat,
        varsigma_hat=varsigma_hat,
        p_value=p_value,
        reject=bool(reject),
        ci_triangle=norm_ci_triangle(norm, xi_hat, n),
        ci_delta=norm_ci_delta(norm_sq, varsigma_hat, xi_hat, n),
        alpha=alpha,
        measure=est.weight_descriptor,
        n=n,
        B=boot.B,
        seed=boot.seed,
    )


def confidence_band(est: EmbeddedEstimate, xi_hat: float, K_cross, n: Optional[int] = None):
    """Sup-norm band with constant halfwidth ``sqrt(xi_hat * sup K / n)``.

    Returns ``(estimate, lower, upper)`` at the query points behind ``K_cross``.
    """
    n = est.n if n is None else n
    sup_value = est.kernel.sup_value if est.kernel is not None else 1.0
    values = evaluate(est, K_cross)
    half = math.sqrt(xi_hat * sup_value / n)
    return values, values - half, values + half


def bh_adjust(p_values) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise InputError("p-values must be a 1-d sequence")
    if p.size == 0:
        return p.copy()
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p > 1):
        raise InputError("p-values must lie in (0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    out = np.empty(m)
    out[order] = adjusted
    return out
