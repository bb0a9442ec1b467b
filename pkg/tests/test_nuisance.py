import numpy as np
import pytest

from kernvim.errors import DegenerateDataError, InputError
from kernvim.nuisance import (Dataset, LearnerConfig, NuisanceFit, crossfit_pseudo,
                              fit_nuisances, load_external_nuisances, pseudo_outcomes,
                              split_folds)
from kernvim.simulate import DgpConfig, sample_dgp, true_nuisances


def make_data(rng, n=200, d=3):
    X = rng.uniform(size=(n, d))
    A = rng.integers(0, 2, n)
    Y = X[:, 0] + A * X[:, 1] + rng.normal(size=n)
    return Dataset(X, Y, A)


def test_dataset_validation(rng):
    X = rng.normal(size=(6, 2))
    with pytest.raises(InputError):
        Dataset(X, np.zeros(6), np.array([0, 1, 2, 0, 1, 0]))
    with pytest.raises(InputError):
        Dataset(X[:3], np.zeros(3), np.array([0, 1, 0]))
    X[0, 0] = np.nan
    with pytest.raises(InputError):
        Dataset(X, np.zeros(6), np.array([0, 1, 0, 1, 0, 1]))


def test_constant_outcome_is_recovered(rng):
    data = make_data(rng)
    data = Dataset(data.covariates, np.full(data.n, 7.0), data.treatment)
    fit = fit_nuisances(data, split_folds(data.treatment, 1), LearnerConfig())
    assert np.allclose(fit.outcome1, 7.0, atol=1e-6)
    assert np.allclose(fit.outcome0, 7.0, atol=1e-6)


def test_randomized_treatment_propensity(rng):
    n = 2000
    X = rng.normal(size=(n, 3))
    A = rng.binomial(1, 0.5, n)
    data = Dataset(X, rng.normal(size=n), A)
    fit = fit_nuisances(data, split_folds(A, 3), LearnerConfig())
    assert 0.45 <= fit.propensity.mean() <= 0.55


def test_external_propensity_is_clipped(rng):
    data = make_data(rng, n=10)
    ext = np.column_stack([np.full(10, 0.001), np.zeros(10), np.zeros(10)])
    ext[1, 0] = 0.9999
    fit = fit_nuisances(data, None, LearnerConfig(kind="external", external=ext, clip=0.01))
    assert fit.propensity[0] == 0.01
    assert fit.propensity[1] == 0.99


def test_clipping_invariant_builtin(rng):
    n = 300
    X = rng.normal(size=(n, 2))
    A = (X[:, 0] > 0).astype(int)  # near-separable
    A[:5] = 1 - A[:5]
    data = Dataset(X, rng.normal(size=n), A)
    fit = fit_nuisances(data, split_folds(A, 0), LearnerConfig(clip=0.05))
    assert fit.propensity.min() >= 0.05
    assert fit.propensity.max() <= 0.95


def test_folds_balanced_and_guarded(rng):
    A = rng.integers(0, 2, 101)
    folds = split_folds(A, 5)
    assert abs(np.sum(folds == 1) - np.sum(folds == 2)) <= 1
    with pytest.raises(DegenerateDataError):
        split_folds(np.ones(8, int), 0)


def test_one_arm_in_training_fold_is_degenerate(rng):
    data = make_data(rng, n=8)
    A = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    data = Dataset(data.covariates, data.outcome, A)
    folds = np.array([1, 1, 1, 1, 2, 2, 2, 2])
    with pytest.raises(DegenerateDataError):
        fit_nuisances(data, folds, LearnerConfig())


def test_pseudo_outcome_formula():
    data = Dataset(np.zeros((4, 1)) + np.arange(4)[:, None], np.array([1.0, 0, 0, 0]),
                   np.array([1, 0, 1, 0]))
    fit = NuisanceFit(np.full(4, 0.5), np.zeros(4), np.zeros(4), 0.01)
    assert pseudo_outcomes(data, fit).psi[0] == 2.0
    pred = Dataset(np.arange(4.0)[:, None], np.array([3.0, -1.0, 0.5, 2.0]))
    assert pseudo_outcomes(pred, None, "prediction").psi[:2].tolist() == [3.0, -1.0]


def test_zero_residual_identity(rng):
    n = 50
    X = rng.normal(size=(n, 2))
    A = rng.integers(0, 2, n)
    mu1, mu0 = rng.normal(size=n), rng.normal(size=n)
    Y = np.where(A == 1, mu1, mu0)
    data = Dataset(X, Y, A)
    for g in (np.full(n, 0.3), rng.uniform(0.05, 0.95, n)):
        psi = pseudo_outcomes(data, NuisanceFit(g, mu1, mu0, 0.01)).psi
        assert np.allclose(psi, mu1 - mu0, atol=1e-12)


def test_crossfit_deterministic(rng):
    data = make_data(rng)
    a = crossfit_pseudo(data, seed=11).psi
    b = crossfit_pseudo(data, seed=11).psi
    assert np.array_equal(a, b)


def test_crossfit_poisoning(rng):
    data = make_data(rng, n=120)
    base = crossfit_pseudo(data, seed=4)
    folds = base.fit.fold_assignment
    i = int(np.flatnonzero(folds == 1)[0])
    Y = data.outcome.copy()
    Y[i] += 1e6
    poisoned = crossfit_pseudo(Dataset(data.covariates, Y, data.treatment), seed=4)
    fold1 = folds == 1
    others = fold1.copy()
    others[i] = False
    # fold-1 predictions come from fold-2 models only
    for attr in ("propensity", "outcome1", "outcome0"):
        assert np.array_equal(getattr(base.fit, attr)[fold1], getattr(poisoned.fit, attr)[fold1])
    assert np.array_equal(base.psi[others], poisoned.psi[others])
    assert poisoned.psi[i] != base.psi[i]
    assert not np.allclose(base.psi[~fold1], poisoned.psi[~fold1])


def test_oracle_nuisances_recover_ate():
    cfg = DgpConfig("exp3_d3", n=2000, beta_effect=5, seed=8)
    data = sample_dgp(cfg)
    g1, mu1, mu0, _ = true_nuisances(data.covariates, cfg)
    ext = np.column_stack([g1, mu1, mu0])
    psi = crossfit_pseudo(data, LearnerConfig(kind="external", external=ext)).psi
    se = psi.std(ddof=1) / np.sqrt(len(psi))
    assert abs(psi.mean() - 2.5) <= 3 * se


def test_load_external_nuisances(tmp_path):
    p = tmp_path / "nu.csv"
    p.write_text("g1,mu1,mu0\n0.5,1,0\n0.4,2,1\n")
    arr = load_external_nuisances(p, 2)
    assert arr.shape == (2, 3)
    with pytest.raises(InputError):
        load_external_nuisances(p, 3)
    p.write_text("g,mu1,mu0\n0.5,1,0\n")
    with pytest.raises(InputError):
        load_external_nuisances(p, 1)
