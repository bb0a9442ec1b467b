"""End-to-end analysis of one dataset: pseudo-outcomes, per-subset fits, tests and bands."""

from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .cme import default_lambda, fit_cate, fit_cme, predict_cate
from .errors import InputError
from .estimator import (EmbeddedEstimate, SubsetComponents, build_components,
                        build_split_components, combine)
from .inference import (DEFAULT_B, BootstrapSummary, TestReport, bootstrap,
                        halfnormal_varsigma, run_test)
from .kernel import KernelConfig, Standardizer, cross_gram, gram, median_heuristic
from .measures import (WeightVector, koi_weights, loco_weights, loo_weights,
                       shapley_exact_weights, shapley_mc_weights)
from .nuisance import (Dataset, LearnerConfig, PseudoOutcomes, crossfit_pseudo,
                       split_folds)

MEASURES = ("koi", "loo", "loco", "shapley", "shapley-mc")


@dataclass
class PipelineConfig:
    alpha: float = 0.05
    B: int = DEFAULT_B
    lam: Optional[float] = None
    bandwidth: Optional[float] = None
    clip: float = 0.01
    mode: str = "cate"
    shapley_m: int = 40
    split: bool = False
    varsigma: str = "bootstrap"
    threads: int = 1
    logistic_penalty: float = 1.0
    external_nuisances: Optional[np.ndarray] = None

    def __post_init__(self):
        if not 0 < self.alpha <= 0.5:
            raise InputError(f"alpha must lie in (0, 0.5], got {self.alpha}")
        if self.B < 100:
            raise InputError(f"need B >= 100, got {self.B}")
        if self.mode not in ("cate", "prediction"):
            raise InputError(f"mode must be cate or prediction, got {self.mode!r}")
        if self.varsigma not in ("bootstrap", "halfnormal"):
            raise InputError(f"varsigma must be bootstrap or halfnormal, got {self.varsigma!r}")
        if self.lam is not None and not self.lam > 0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if self.shapley_m < 1:
            raise InputError("shapley_m must be at least 1")

    def echo(self) -> dict:
        out = asdict(self)
        out["external_nuisances"] = self.external_nuisances is not None
        return out


def derive_seed(seed: int, *keys) -> int:
    """Deterministic 32-bit child seed for ``(seed, *keys)``."""
    words = [int(seed) & 0xFFFFFFFF]
    for k in keys:
        words.append(zlib.crc32(str(k).encode()) if not isinstance(k, (int, np.integer)) else int(k))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


class ImportanceAnalysis:
    """Fitted state for importance tests on one dataset.

    ``groups`` lists the covariate columns behind each variable (player);
    by default every column is its own variable.
    """

    def __init__(self, data: Dataset, config: Optional[PipelineConfig] = None, seed: int = 0,
                 groups: Optional[Sequence[Sequence[int]]] = None,
                 group_names: Optional[Sequence[str]] = None,
                 psi: Optional[PseudoOutcomes] = None):
        self.data = data
        self.config = config or PipelineConfig()
        self.seed = int(seed)
        self.groups = [tuple(g) for g in (groups or [(j,) for j in range(data.d)])]
        self.group_names = list(group_names or (
            [data.column_names[g[0]] for g in self.groups] if groups is None
            else [f"G{k + 1}" for k in range(len(self.groups))]))
        if len(self.group_names) != len(self.groups):
            raise InputError("group_names and groups differ in length")
        cfg = self.config

        self.standardizer = Standardizer.fit(data.covariates)
        self.Xs = self.standardizer.transform(data.covariates)
        self.bandwidth = cfg.bandwidth if cfg.bandwidth is not None else median_heuristic(self.Xs)
        self.kernel = KernelConfig(self.bandwidth)
        self.lam = cfg.lam if cfg.lam is not None else default_lambda(data.n, data.d)

        if psi is None:
            learner = LearnerConfig(
                kind="external" if cfg.external_nuisances is not None else "builtin",
                clip=cfg.clip,
                logistic_penalty=cfg.logistic_penalty,
                outcome_lambda=self.lam,
                bandwidth=self.bandwidth,
                external=cfg.external_nuisances,
            )
            psi = crossfit_pseudo(data, learner, derive_seed(self.seed, "crossfit"), cfg.mode)
        self.psi = psi

        if cfg.split:
            folds = None
            if psi.fit is not None and psi.fit.fold_assignment is not None:
                folds = psi.fit.fold_assignment
            if folds is None:
                folds = split_folds(data.treatment, derive_seed(self.seed, "split"), data.n)
            self.train_idx = np.flatnonzero(folds == 1)
            self.eval_idx = np.flatnonzero(folds == 2)
            self.basis = np.vstack([self.Xs[self.train_idx], self.Xs[self.eval_idx]])
        else:
            self.train_idx = self.eval_idx = None
            self.basis = self.Xs
        self.K = gram(self.basis, None, self.kernel)
        self._components: Dict[tuple, SubsetComponents] = {}

    @property
    def n(self) -> int:
        return self.data.n if self.eval_idx is None else len(self.eval_idx)

    def components(self, subset) -> SubsetComponents:
        subset = tuple(sorted(subset))
        if subset in self._components:
            return self._components[subset]
        psi, Xs, lam, kern = self.psi.psi, self.Xs, self.lam, self.kernel
        if self.train_idx is None:
            K_V = gram(Xs, subset, kern) if subset else None
            rows = Xs[:, list(subset)] if subset else None
            model = fit_cme(subset, K_V, lam, rows, kern)
            cate = fit_cate(subset, psi, K_V, lam, model)
            comp = build_components(psi, cate, model)
        else:
            tr, ev = self.train_idx, self.eval_idx
            if subset:
                cols = list(subset)
                K_tr = gram(Xs[tr], subset, kern)
                model = fit_cme(subset, K_tr, lam, Xs[tr][:, cols], kern)
                cate = fit_cate(subset, psi[tr], K_tr, lam, model)
                alpha_eval = predict_cate(cate, model, Xs[ev][:, cols])
                K_cross = cross_gram(Xs[tr], Xs[ev], subset, kern)
            else:
                model = fit_cme((), None, lam, Xs[tr], kern)
                alpha_eval = np.full(len(ev), float(np.mean(psi[tr])))
                K_cross = None
            comp = build_split_components(psi[ev], alpha_eval, model, K_cross)
        self._components[subset] = comp
        return comp

    def player(self, target) -> int:
        if isinstance(target, (int, np.integer)):
            if not 0 <= target < len(self.groups):
                raise InputError(f"variable index {target} out of range")
            return int(target)
        try:
            return self.group_names.index(target)
        except ValueError:
            raise InputError(
                f"unknown variable {target!r}; known: {', '.join(self.group_names)}"
            ) from None

    def weights(self, measure: str, target=None, subset=None, baseline=None) -> WeightVector:
        """Weight vector over covariate-column subsets for a measure and target variable."""
        p = len(self.groups)
        if measure == "koi":
            w = koi_weights(self.player(target))
        elif measure == "loo":
            w = loo_weights(self.player(target), p)
        elif measure == "shapley":
            w = shapley_exact_weights(self.player(target), p)
        elif measure == "shapley-mc":
            i = self.player(target)
            w = shapley_mc_weights(i, p, self.config.shapley_m,
                                   seed=derive_seed(self.seed, "shapley-mc", i))
        elif measure == "loco":
            if subset is None:
                raise InputError("loco needs a subset (and optional baseline subset)")
            v1 = [self.player(t) for t in subset]
            v2 = [self.player(t) for t in (baseline or [])]
            w = loco_weights(v1, v2)
        else:
            raise InputError(f"unknown measure {measure!r}; choose from {', '.join(MEASURES)}")
        return w.expand(self.groups)

    def estimate(self, omega: WeightVector) -> Tuple[EmbeddedEstimate, list]:
        comps = [self.components(V) for V in omega.subsets]
        if not comps:
            comps = [self.components(())]
        return combine(comps, omega, self.kernel), comps

    def test(self, omega: WeightVector, seed: Optional[int] = None,
             label: str = "") -> Tuple[TestReport, BootstrapSummary, EmbeddedEstimate]:
        cfg = self.config
        est, comps = self.estimate(omega)
        if seed is None:
            seed = derive_seed(self.seed, "bootstrap", label or omega.descriptor)
        boot = bootstrap(comps, omega, est, self.K, cfg.B, cfg.alpha, seed, cfg.threads)
        varsigma = None
        if cfg.varsigma == "halfnormal":
            varsigma = halfnormal_varsigma(comps, omega, est, self.K, cfg.alpha)
        report = run_test(est, self.K, boot, cfg.alpha, varsigma)
        return report, boot, est

    def run(self, measure: str, target=None, subset=None, baseline=None):
        omega = self.weights(measure, target, subset, baseline)
        label = f"{measure}:{target if target is not None else subset}"
        return self.test(omega, label=label)

    def kernel_sections(self, query) -> np.ndarray:
        """``K(query_i, basis_j)`` for raw (unstandardized) query covariates."""
        Q = self.standardizer.transform(np.atleast_2d(np.asarray(query, dtype=float)))
        return cross_gram(Q, self.basis, None, self.kernel)

    def resolved(self) -> dict:
        return {
            "n": int(self.data.n),
            "n_eval": int(self.n),
            "d": int(self.data.d),
            "bandwidth": float(self.bandwidth),
            "lambda": float(self.lam),
            "standardize_mean": self.standardizer.mean.tolist(),
            "standardize_scale": self.standardizer.scale.tolist(),
            "variables": {name: [self.data.column_names[c] for c in g]
                          for name, g in zip(self.group_names, self.groups)},
        }


def report_dict(report: TestReport) -> dict:
    out = asdict(report)
    out["ci_triangle"] = list(report.ci_triangle)
    out["ci_delta"] = list(report.ci_delta)
    return out


def analyze(data: Dataset, measure: str, target, config: Optional[PipelineConfig] = None,
            seed: int = 0) -> TestReport:
    """One-shot convenience: fit and test a single measure/variable."""
    return ImportanceAnalysis(data, config, seed).run(measure, target)[0]
