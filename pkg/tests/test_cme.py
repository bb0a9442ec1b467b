import numpy as np
import pytest
from hypothesis import given, strategies as st

from kernvim.cme import default_lambda, fit_cate, fit_cme, predict_cate
from kernvim.kernel import KernelConfig, gram

K2 = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_fit_cme_examples(rng):
    assert fit_cme((0,), np.array([[1.0]]), 1.0).W[0, 0] == pytest.approx(0.5)
    assert fit_cme((), None, 1.0).empty
    X = rng.normal(size=(12, 2))
    W = fit_cme((0, 1), gram(X, None, KernelConfig(1.0)), 0.2).W
    assert np.max(np.abs(W - W.T)) <= 1e-10
    KV = gram(X, None, KernelConfig(1.0))
    assert np.max(np.abs(W @ (KV + 0.2 * np.eye(12)) - np.eye(12))) <= 1e-8


def test_fit_cate_examples(rng):
    assert np.all(fit_cate((0,), np.zeros(2), K2, 0.1).alpha == 0)
    fit = fit_cate((0,), np.array([1.0, 0.0]), K2, 0.1)
    assert fit.alpha == pytest.approx([85 / 96, 5 / 96], rel=1e-12)
    X = np.linspace(0, 1, 5)[:, None]
    psi = rng.normal(size=5)
    alpha = fit_cate((0,), psi, gram(X, None, KernelConfig(0.3)), 1e-10).alpha
    assert np.max(np.abs(alpha - psi)) <= 1e-4


def test_empty_subset_is_mean():
    fit = fit_cate((), np.array([1.0, 3.0, 5.0]), None, 0.1)
    assert fit.alpha.tolist() == [3.0, 3.0, 3.0]
    assert predict_cate(fit, fit_cme((), None, 0.1), np.zeros((4, 0))).tolist() == [3.0] * 4


def test_predict_matches_fit(rng):
    cfg = KernelConfig(0.7)
    X = rng.normal(size=(15, 2))
    psi = rng.normal(size=15)
    KV = gram(X, (1,), cfg)
    model = fit_cme((1,), KV, 0.05, X[:, [1]], cfg)
    fit = fit_cate((1,), psi, KV, 0.05, model)
    assert np.allclose(predict_cate(fit, model, X[:, [1]]), fit.alpha, atol=1e-10, rtol=0)
    two = fit_cme((0,), K2, 0.1, np.array([[0.0], [np.sqrt(2 * np.log(2))]]), KernelConfig(1.0))
    f2 = fit_cate((0,), np.array([1.0, 0.0]), K2, 0.1, two)
    assert predict_cate(f2, two, [[0.0]])[0] == pytest.approx(f2.alpha[0], rel=1e-12)


def test_interpolation_at_training_point():
    cfg = KernelConfig(0.3)
    X = np.linspace(0, 1, 5)[:, None]
    psi = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    KV = gram(X, None, cfg)
    model = fit_cme((0,), KV, 1e-10, X, cfg)
    fit = fit_cate((0,), psi, KV, 1e-10, model)
    assert predict_cate(fit, model, X[2:3])[0] == pytest.approx(0.5, abs=1e-4)


def test_default_lambda():
    assert default_lambda(500, 3) == pytest.approx(np.sqrt(np.log(500) / 500))
    assert default_lambda(500, 10) == pytest.approx(np.log(500) ** 2 / np.sqrt(500))


@given(st.integers(0, 2**31 - 1))
def test_shrinkage_monotone_in_lambda(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(20, 2))
    psi = r.normal(size=20)
    KV = gram(X, None, KernelConfig(1.0))
    norms = [np.linalg.norm(fit_cate((0, 1), psi, KV, lam).alpha)
             for lam in 10.0 ** np.arange(-3, 3)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_in_psi(seed, a, b):
    r = np.random.default_rng(seed)
    X = r.normal(size=(10, 2))
    p1, p2 = r.normal(size=(2, 10))
    KV = gram(X, (0,), KernelConfig(0.8))
    lhs = fit_cate((0,), a * p1 + b * p2, KV, 0.1).alpha
    rhs = a * fit_cate((0,), p1, KV, 0.1).alpha + b * fit_cate((0,), p2, KV, 0.1).alpha
    assert np.allclose(lhs, rhs, atol=1e-10, rtol=0)
