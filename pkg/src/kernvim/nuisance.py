"""Propensity and outcome-regression nuisances and AIPW pseudo-outcomes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, InputError
from .kernel import KernelConfig, RidgeSolver, Standardizer, cross_gram, gram, median_heuristic


@dataclass
class Dataset:
    covariates: np.ndarray
    outcome: np.ndarray
    treatment: Optional[np.ndarray] = None
    column_names: Sequence[str] = ()

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        Y = np.asarray(self.outcome, dtype=float).ravel()
        n = X.shape[0]
        if Y.shape[0] != n:
            raise InputError(f"outcome has {Y.shape[0]} rows, covariates have {n}")
        if n < 4:
            raise InputError(f"need at least 4 observations, got {n}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("covariates and outcome must be finite (no missing values)")
        if self.treatment is not None:
            A = np.asarray(self.treatment, dtype=float).ravel()
            if A.shape[0] != n:
                raise InputError(f"treatment has {A.shape[0]} rows, covariates have {n}")
            if not np.all((A == 0) | (A == 1)):
                raise InputError("treatment must be binary 0/1")
            self.treatment = A.astype(int)
        self.covariates = X
        self.outcome = Y
        if not self.column_names:
            self.column_names = [f"X{j + 1}" for j in range(X.shape[1])]
        self.column_names = list(self.column_names)
        if len(self.column_names) != X.shape[1]:
            raise InputError("column_names length does not match covariate columns")

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]


@dataclass
class LearnerConfig:
    """Nuisance learner settings.

    ``kind="builtin"`` uses ridge logistic regression for the propensity and
    per-arm kernel ridge regression for the outcome. ``kind="external"``
    takes an ``(n, 3)`` array of ``g1, mu1, mu0`` predictions as given.
    """

    kind: str = "builtin"
    clip: float = 0.01
    logistic_penalty: float = 1.0
    outcome_lambda: Optional[float] = None
    bandwidth: Optional[float] = None
    external: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("builtin", "external"):
            raise InputError(f"unknown learner kind {self.kind!r}")
        if not 0 < self.clip < 0.5:
            raise InputError(f"clip must lie in (0, 0.5), got {self.clip}")
        if self.kind == "external" and self.external is None:
            raise InputError("external learner needs a predictions array")


@dataclass
class NuisanceFit:
    propensity: np.ndarray
    outcome1: np.ndarray
    outcome0: np.ndarray
    clip: float
    fold_assignment: Optional[np.ndarray] = None


@dataclass
class PseudoOutcomes:
    psi: np.ndarray
    mode: str = "cate"
    fit: Optional[NuisanceFit] = field(default=None, repr=False)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        if not np.all(np.isfinite(self.psi)):
            raise DegenerateDataError("pseudo-outcomes contain non-finite values")


def fit_logistic(X, a, penalty: float = 1.0, tol: float = 1e-8, max_iter: int = 100):
    """Ridge-penalized logistic regression by Newton's method.

    The intercept is unpenalized. Returns ``(intercept, coef)``.
    """
    X = np.asarray(X, dtype=float)
    a = np.asarray(a, dtype=float)
    n, d = X.shape
    Z = np.hstack([np.ones((n, 1)), X])
    pen = np.full(d + 1, penalty)
    pen[0] = 0.0
    theta = np.zeros(d + 1)
    p_bar = np.clip(a.mean(), 1e-6, 1 - 1e-6)
    theta[0] = np.log(p_bar / (1 - p_bar))
    for _ in range(max_iter):
        p = expit(Z @ theta)
        grad = Z.T @ (a - p) - pen * theta
        hess = (Z * (p * (1 - p))[:, None]).T @ Z + np.diag(pen) + 1e-12 * np.eye(d + 1)
        step = np.linalg.solve(hess, grad)
        theta = theta + step
        if np.max(np.abs(step)) < tol:
            break
    return theta[0], theta[1:]


def fit_krr_predict(X_train, y_train, X_query, config: KernelConfig, lam: float) -> np.ndarray:
    """Kernel ridge regression on mean-centered targets."""
    y_train = np.asarray(y_train, dtype=float)
    offset = y_train.mean()
    solver = RidgeSolver(gram(X_train, None, config), lam)
    dual = solver.solve(y_train - offset)
    return offset + cross_gram(X_query, X_train, None, config) @ dual


def split_folds(treatment, seed, n: Optional[int] = None) -> np.ndarray:
    """Random two-fold split (labels 1 and 2), each fold holding both arms.

    Without a treatment vector pass ``n``; no arm check is made then.
    """
    n = len(treatment) if treatment is not None else int(n)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm[: (n + 1) // 2]] = 1
    folds[perm[(n + 1) // 2:]] = 2
    if treatment is not None:
        A = np.asarray(treatment)
        for k in (1, 2):
            arms = set(np.unique(A[folds == k]).tolist())
            if arms != {0, 1}:
                raise DegenerateDataError(
                    f"fold {k} does not contain both treatment arms; "
                    "too few treated or control observations"
                )
    return folds


def fit_nuisances(data: Dataset, fold_assignment, learner: LearnerConfig) -> NuisanceFit:
    """Cross-fitted nuisance predictions: fold-k rows use models trained on the other fold."""
    if data.treatment is None:
        raise InputError("nuisance fitting needs a treatment column")
    clip = learner.clip
    if learner.kind == "external":
        ext = np.asarray(learner.external, dtype=float)
        if ext.ndim != 2 or ext.shape != (data.n, 3):
            raise InputError(f"external predictions must have shape ({data.n}, 3), got {ext.shape}")
        return NuisanceFit(
            propensity=np.clip(ext[:, 0], clip, 1 - clip),
            outcome1=ext[:, 1].copy(),
            outcome0=ext[:, 2].copy(),
            clip=clip,
            fold_assignment=None if fold_assignment is None else np.asarray(fold_assignment),
        )

    folds = np.asarray(fold_assignment)
    if folds.shape != (data.n,) or not set(np.unique(folds).tolist()) <= {1, 2}:
        raise InputError("fold_assignment must be a length-n vector of 1/2 labels")
    Xs = Standardizer.fit(data.covariates).transform(data.covariates)
    bandwidth = learner.bandwidth if learner.bandwidth is not None else median_heuristic(Xs)
    config = KernelConfig(bandwidth)
    lam = learner.outcome_lambda
    if lam is None:
        from .cme import default_lambda

        lam = default_lambda(data.n, data.d)
    A, Y = data.treatment, data.outcome

    g1 = np.empty(data.n)
    mu1 = np.empty(data.n)
    mu0 = np.empty(data.n)
    for k in (1, 2):
        target = folds == k
        train = ~target
        a_tr = A[train]
        if a_tr.min() == a_tr.max():
            raise DegenerateDataError(
                f"training fold for fold {k} contains only treatment arm {a_tr[0]}"
            )
        b0, b = fit_logistic(Xs[train], a_tr, penalty=learner.logistic_penalty)
        g1[target] = expit(b0 + Xs[target] @ b)
        for arm, out in ((1, mu1), (0, mu0)):
            rows = train & (A == arm)
            out[target] = fit_krr_predict(Xs[rows], Y[rows], Xs[target], config, lam)
    return NuisanceFit(np.clip(g1, clip, 1 - clip), mu1, mu0, clip, folds)


def pseudo_outcomes(data: Dataset, fit: Optional[NuisanceFit], mode: str = "cate") -> PseudoOutcomes:
    """AIPW pseudo-outcome with arm-specific inverse weights; ``Y`` itself in prediction mode."""
    if mode == "prediction":
        return PseudoOutcomes(data.outcome.copy(), mode)
    if mode != "cate":
        raise InputError(f"unknown mode {mode!r}")
    if fit is None or len(fit.propensity) != data.n:
        raise InputError("nuisance fit is missing or not aligned with the data")
    a, y = data.treatment, data.outcome
    g1 = fit.propensity
    mu_a = np.where(a == 1, fit.outcome1, fit.outcome0)
    resid = y - mu_a
    psi = a / g1 * resid - (1 - a) / (1 - g1) * resid + fit.outcome1 - fit.outcome0
    return PseudoOutcomes(psi, mode, fit)


def crossfit_pseudo(data: Dataset, learner: Optional[LearnerConfig] = None, seed=0,
                    mode: str = "cate") -> PseudoOutcomes:
    """Twofold cross-fitted pseudo-outcomes; deterministic given ``seed``."""
    if mode == "prediction":
        return pseudo_outcomes(data, None, mode)
    learner = learner or LearnerConfig()
    if data.treatment is None:
        raise InputError("cate mode needs a treatment column")
    folds = None if learner.kind == "external" else split_folds(data.treatment, seed)
    fit = fit_nuisances(data, folds, learner)
    return pseudo_outcomes(data, fit, mode)


def load_external_nuisances(path, n: int) -> np.ndarray:
    """Read a ``g1,mu1,mu0`` CSV aligned with the dataset rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty nuisance file") from None
        if header != ["g1", "mu1", "mu0"]:
            raise InputError(f"{path}: header must be g1,mu1,mu0, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric value in {row}") from None
            if len(rows[-1]) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
    if len(rows) != n:
        raise InputError(f"{path}: {len(rows)} prediction rows for {n} observations")
    return np.array(rows)
