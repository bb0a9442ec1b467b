"""Simulation designs and a Monte Carlo harness for rejection rates and CI coverage.

Covariates come from a Gaussian copula with equicorrelation ``sigma`` and
uniform(0, 1) marginals. The equicorrelated normals are generated from a
common factor plus one independent column at a time, so a 10-dimensional
draw extends the 5-dimensional draw with the same seed.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .errors import InputError, KernvimError
from .kernel import median_heuristic
from .nuisance import Dataset
from .pipeline import ImportanceAnalysis, PipelineConfig, derive_seed

EXPERIMENTS = {"exp1_d5": 5, "exp2_d10": 10, "exp3_d3": 3}
CSV_COLUMNS = ["measure", "n", "sigma", "beta", "alternative", "reps",
               "reject_rate", "mean_norm", "coverage", "failures"]
MAX_FAILURE_RATE = 0.05


@dataclass(frozen=True)
class DgpConfig:
    experiment: str = "exp3_d3"
    n: int = 500
    sigma: float = 0.0
    beta_effect: float = 0.0
    alternative: str = "smooth"
    seed: int = 0

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InputError(f"unknown experiment {self.experiment!r}; "
                             f"choose from {', '.join(EXPERIMENTS)}")
        if not 0 <= self.sigma < 1:
            raise InputError(f"sigma must lie in [0, 1), got {self.sigma}")
        if self.n < 4:
            raise InputError(f"n must be at least 4, got {self.n}")
        if self.alternative not in ("smooth", "rough"):
            raise InputError(f"alternative must be smooth or rough, got {self.alternative!r}")

    @property
    def d(self) -> int:
        return EXPERIMENTS[self.experiment]


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def copula_normals(n: int, d: int, sigma: float, seed: int) -> np.ndarray:
    """Equicorrelated standard normals ``sqrt(sigma) F + sqrt(1 - sigma) E_j``."""
    rng = _stream(seed, 0)
    common = rng.standard_normal(n)
    cols = [rng.standard_normal(n) for _ in range(d)]
    return math.sqrt(sigma) * common[:, None] + math.sqrt(1 - sigma) * np.column_stack(cols)


def effect_modifier(x1, alternative: str):
    return x1 if alternative == "smooth" else np.sin(5 * np.pi * x1)


def true_nuisances(X, config: DgpConfig):
    """Propensity ``g(1|x)``, outcome regressions ``mu(1,x), mu(0,x)`` and CATE ``tau(x)``."""
    X = np.asarray(X, dtype=float)
    x1, x2 = X[:, 0], X[:, 1]
    tau = config.beta_effect * effect_modifier(x1, config.alternative)
    if config.experiment != "exp3_d3":
        x3, x4, x5 = X[:, 2], X[:, 3], X[:, 4]
        tau = tau + 0.2 * (x2**2 + x3 - 2 * x3 * x4 + 4 * x5)
    g1 = expit(-0.4 * x1 + 0.1 * x1 * x2)
    mu0 = x1 * x2 + 2 * x2**2 - x1
    return g1, mu0 + tau, mu0, tau


def sample_dgp(config: DgpConfig, treatment_override: Optional[int] = None) -> Dataset:
    """Draw ``(X, A, Y)``; deterministic given ``config.seed``.

    ``treatment_override`` forces every ``A`` to the given arm (for checks).
    """
    X = norm.cdf(copula_normals(config.n, config.d, config.sigma, config.seed))
    g1, mu1, mu0, _ = true_nuisances(X, config)
    if treatment_override is None:
        A = (_stream(config.seed, 1).random(config.n) < g1).astype(int)
    else:
        A = np.full(config.n, int(treatment_override))
    noise = _stream(config.seed, 2).standard_normal(config.n)
    Y = np.where(A == 1, mu1, mu0) + noise
    return Dataset(X, Y, A, [f"X{j + 1}" for j in range(config.d)])


def true_importance(X, config: DgpConfig) -> np.ndarray:
    """Importance function of ``X1`` under Experiment 3 (identical for KOI, LOO and Shapley).

    The CATE depends on ``X1`` only, so every subset CATE is either the
    CATE itself or its mean, and all three measures reduce to
    ``beta * (g(x1) - E g(X1))``.
    """
    if config.experiment != "exp3_d3":
        raise InputError("closed-form importance is only available for exp3_d3")
    x1 = np.asarray(X, dtype=float)[:, 0]
    g = effect_modifier(x1, config.alternative)
    if config.alternative == "smooth":
        mean_g = 0.5
    else:
        mean_g = (1 - math.cos(5 * math.pi)) / (5 * math.pi)
    return config.beta_effect * (g - mean_g)


def oracle_embedded_norm(config: DgpConfig, n_oracle: int = 50000, seed: int = 12345,
                         block: int = 2000, bandwidth_points: int = 4000) -> float:
    """Large-sample plug-in of the embedded norm with the true importance function.

    Uses the population standardization of uniform marginals and the median
    heuristic on a subsample, then a blocked V-statistic for
    ``E[gamma(X) K(X, X') gamma(X')]``.
    """
    big = replace(config, n=n_oracle, seed=seed)
    X = norm.cdf(copula_normals(big.n, big.d, big.sigma, big.seed))
    gamma = true_importance(X, big)
    Xs = (X - 0.5) / math.sqrt(1 / 12)
    h = median_heuristic(Xs[:bandwidth_points])
    sq_norms = np.sum(Xs**2, axis=1)
    total = 0.0
    for i in range(0, n_oracle, block):
        A = Xs[i:i + block]
        d2 = sq_norms[i:i + block, None] + sq_norms[None, :] - 2 * A @ Xs.T
        np.maximum(d2, 0, out=d2)
        total += float(gamma[i:i + block] @ np.exp(-d2 / (2 * h * h)) @ gamma)
    return math.sqrt(max(total, 0.0)) / n_oracle


@dataclass
class RepResult:
    rep: int
    reports: Dict[str, dict] = field(default_factory=dict)
    error: Optional[str] = None


def run_replicate(config: DgpConfig, pipeline: PipelineConfig, measures: Sequence[str],
                  rep: int, target=0) -> RepResult:
    seed = derive_seed(config.seed, "rep", rep)
    try:
        data = sample_dgp(replace(config, seed=seed))
        analysis = ImportanceAnalysis(data, pipeline, seed=derive_seed(seed, "analysis"))
        out = RepResult(rep)
        for m in measures:
            report, _, _ = analysis.run(m, target)
            out.reports[m] = {
                "reject": report.reject,
                "norm": report.norm,
                "p_value": report.p_value,
                "ci_triangle": report.ci_triangle,
                "ci_delta": report.ci_delta,
            }
        return out
    except KernvimError as exc:
        return RepResult(rep, error=f"{type(exc).__name__}: {exc}")
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        return RepResult(rep, error=f"{type(exc).__name__}: {exc}")


def _run_star(args):
    return run_replicate(*args)


def monte_carlo(config: DgpConfig, pipeline: Optional[PipelineConfig] = None, reps: int = 100,
                alpha: Optional[float] = None, measures: Sequence[str] = ("koi",), target=0,
                oracle: Optional[Dict[str, float]] = None, workers: int = 1,
                return_replicates: bool = False):
    """Repeat the full analysis ``reps`` times with derived seeds.

    Returns one row per measure with the rejection rate, mean norm and (when
    ``oracle`` maps measure -> true norm) the delta-interval coverage.
    Failed replicates are counted; more than 5% failures aborts.
    """
    if reps < 1:
        raise InputError("reps must be at least 1")
    pipeline = pipeline or PipelineConfig()
    if alpha is not None:
        pipeline = replace(pipeline, alpha=alpha)
    jobs = [(config, pipeline, tuple(measures), r, target) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_star, jobs))
    else:
        results = [_run_star(j) for j in jobs]
    results.sort(key=lambda r: r.rep)
    failures = [r for r in results if r.error is not None]
    if len(failures) > MAX_FAILURE_RATE * reps:
        raise KernvimError(
            f"{len(failures)} of {reps} replicates failed; first error: {failures[0].error}"
        )
    ok = [r for r in results if r.error is None]
    rows = []
    for m in measures:
        rejects = [r.reports[m]["reject"] for r in ok]
        norms = [r.reports[m]["norm"] for r in ok]
        coverage = None
        if oracle is not None and m in oracle:
            truth = oracle[m]
            coverage = float(np.mean([lo <= truth <= hi for lo, hi in
                                      (r.reports[m]["ci_delta"] for r in ok)]))
        rows.append({
            "measure": m,
            "n": config.n,
            "sigma": config.sigma,
            "beta": config.beta_effect,
            "alternative": config.alternative,
            "reps": len(ok),
            "reject_rate": float(np.mean(rejects)) if ok else float("nan"),
            "mean_norm": float(np.mean(norms)) if ok else float("nan"),
            "coverage": coverage,
            "failures": len(failures),
        })
    if return_replicates:
        return rows, results
    return rows


def write_table(rows: List[dict], csv_path=None, json_path=None, meta: Optional[dict] = None):
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in CSV_COLUMNS})
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump({"meta": meta or {}, "rows": rows}, fh, indent=2, sort_keys=True)
            fh.write("\n")
