import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kernvim.errors import InputError
from kernvim.estimator import EmbeddedEstimate, combine
from kernvim.inference import (BootstrapSummary, bh_adjust, bootstrap, confidence_band,
                               norm_ci_delta, norm_ci_triangle, order_statistic, quantile_rank,
                               replicate_multiplicities, run_test)
from kernvim.measures import koi_weights, loo_weights, shapley_exact_weights

from helpers import fixed_psi_analysis
from oracles import bootstrap_draw
from test_estimator import two_point


def _boot(an, omega, B=200, seed=1, **kw):
    est, comps = an.estimate(omega)
    return bootstrap(comps, omega, est, an.K, B, 0.05, seed, **kw), est


def test_quantile_rank():
    assert quantile_rank(999, 0.05) == 950
    assert quantile_rank(100, 0.05) == 95
    assert quantile_rank(4999, 0.05) == 4750
    assert order_statistic(np.arange(1.0, 101.0), 0.05) == 95.0


def test_multiplicities_sum_to_n():
    m = replicate_multiplicities(3, 7, 25)
    assert m.sum() == 25 and m.shape == (25,)
    assert np.array_equal(m, replicate_multiplicities(3, 7, 25))


def test_identity_multiplicities_give_zero(rng):
    an = fixed_psi_analysis(rng.normal(size=(10, 2)), rng.normal(size=10))
    boot, _ = _boot(an, koi_weights(0), B=100, multiplicities=np.ones((100, 10), int))
    assert np.all(boot.draws_norm_sq == 0) and np.all(boot.draws_inner == 0)


def test_two_point_hand_value():
    comps = two_point([1.0, 0.0])
    omega = koi_weights(0)
    est = combine(comps, omega)
    M = np.tile([2, 0], (100, 1))
    boot = bootstrap(comps, omega, est, np.array([[1.0, 0.5], [0.5, 1.0]]), 100, 0.05, 0,
                     multiplicities=M)
    assert boot.draws_norm_sq[0] == pytest.approx(1 / 18432, rel=1e-10)


@pytest.mark.parametrize("n", [6, 11, 15])
def test_draws_match_oracle(n, rng):
    X = rng.normal(size=(n, 3))
    psi = rng.normal(size=n)
    an = fixed_psi_analysis(X, psi, bandwidth=1.1, lam=0.25)
    M = np.stack([replicate_multiplicities(5, b, n) for b in range(100)])
    for omega in (koi_weights(1), loo_weights(0, 3), shapley_exact_weights(2, 3)):
        boot, _ = _boot(an, omega, B=100, multiplicities=M)
        for b in range(4):
            ns, inner = bootstrap_draw(an.Xs, psi, omega.weights, 1.1, 0.25, M[b])
            assert boot.draws_norm_sq[b] == pytest.approx(ns, rel=1e-8, abs=1e-14)
            assert boot.draws_inner[b] == pytest.approx(inner, rel=1e-8, abs=1e-14)


def test_rng_path_equals_injected(rng):
    an = fixed_psi_analysis(rng.normal(size=(9, 2)), rng.normal(size=9))
    M = np.stack([replicate_multiplicities(4, b, 9) for b in range(150)])
    a, _ = _boot(an, koi_weights(0), B=150, seed=4)
    b, _ = _boot(an, koi_weights(0), B=150, seed=4, multiplicities=M)
    assert np.array_equal(a.draws_norm_sq, b.draws_norm_sq)


def test_thread_count_does_not_change_draws(rng):
    an = fixed_psi_analysis(rng.normal(size=(30, 3)), rng.normal(size=30))
    ref, _ = _boot(an, shapley_exact_weights(0, 3), B=300, seed=9)
    for t in (2, 3, 8):
        got, _ = _boot(an, shapley_exact_weights(0, 3), B=300, seed=9, threads=t)
        assert np.array_equal(ref.draws_norm_sq, got.draws_norm_sq)


def test_bootstrap_argument_checks(rng):
    an = fixed_psi_analysis(rng.normal(size=(8, 2)), rng.normal(size=8))
    with pytest.raises(InputError):
        _boot(an, koi_weights(0), B=50)
    est, comps = an.estimate(koi_weights(0))
    with pytest.raises(InputError):
        bootstrap(comps, koi_weights(0), est, an.K, 200, 0.7, 0)


def _summary(draws, alpha=0.05):
    draws = np.asarray(draws, float)
    return BootstrapSummary(draws, draws, order_statistic(draws, alpha),
                            order_statistic(draws, alpha), len(draws), 0, alpha)


def test_p_value_extremes():
    est0 = EmbeddedEstimate(np.zeros(4), "", 4, None)
    K = np.eye(4)
    rep = run_test(est0, K, _summary(np.linspace(0, 1, 199)))
    assert rep.p_value == 1.0 and not rep.reject
    big = EmbeddedEstimate(np.full(4, 100.0), "", 4, None)
    rep = run_test(big, K, _summary(np.linspace(0, 1, 199)))
    assert rep.p_value == 1 / 200 and rep.reject


def test_reject_matches_quantile_and_ci():
    K = np.eye(1)
    draws = np.linspace(0, 10, 999)
    s = _summary(draws)
    for c in np.linspace(0, 4, 41):
        rep = run_test(EmbeddedEstimate(np.array([c]), "", 1, None), K, s)
        assert rep.reject == (rep.norm_sq * rep.n > s.xi_hat) or math.isclose(
            rep.norm_sq * rep.n, s.xi_hat)
        assert rep.reject == (rep.ci_triangle[0] > 0) or math.isclose(rep.norm_sq, s.xi_hat)
        if rep.n * rep.norm_sq <= s.xi_hat:
            assert rep.ci_delta[0] == 0


def test_ci_examples():
    assert norm_ci_triangle(0.0, 4.0, 4) == (0.0, 1.0)
    lo, hi = norm_ci_triangle(2.0, 4.0, 4)
    assert (lo, hi) == (1.0, 3.0)
    lo, hi = norm_ci_delta(4.0, 2.0, 1.0, 4)  # |4 - x^2| <= 2
    assert lo == pytest.approx(math.sqrt(2)) and hi == pytest.approx(math.sqrt(6))
    assert norm_ci_delta(0.0, 2.0, 1.0, 4) == (0.0, pytest.approx(math.sqrt(2)))


def test_band_examples():
    est = EmbeddedEstimate(np.array([1.0, 1.0]), "", 4, None)
    vals, lo, hi = confidence_band(est, 4.0, np.array([[1.0, 0.0], [0.5, 0.5]]))
    assert vals.tolist() == [1.0, 1.0]
    assert np.allclose(hi - vals, 1.0) and np.allclose(vals - lo, 1.0)
    _, lo, hi = confidence_band(est, 0.0, np.array([[1.0, 0.0]]))
    assert lo[0] == hi[0]


def test_bh_examples():
    assert bh_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.04, 0.04])
    assert bh_adjust([0.01, 0.02, 0.03]) == pytest.approx([0.03, 0.03, 0.03])
    assert bh_adjust([0.5]).tolist() == [0.5]
    assert bh_adjust([]).size == 0
    for bad in ([0.0], [1.2], [float("nan")]):
        with pytest.raises(InputError):
            bh_adjust(bad)


@given(st.lists(st.floats(1e-6, 1.0), min_size=1, max_size=30))
def test_bh_properties(p):
    adj = bh_adjust(p)
    assert np.all(adj >= np.asarray(p) - 1e-15)
    assert np.all(adj <= 1.0)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)


@given(st.lists(st.floats(0, 100), min_size=100, max_size=200),
       st.floats(0.01, 0.2), st.floats(0.01, 0.2))
def test_xi_monotone_in_alpha(draws, a1, a2):
    lo, hi = sorted((a1, a2))
    assert order_statistic(draws, lo) >= order_statistic(draws, hi)


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.integers(1, 1000))
def test_delta_ci_contains_estimate(norm_sq, varsigma, xi, n):
    lo, hi = norm_ci_delta(norm_sq, varsigma, xi, n)
    assert lo <= math.sqrt(norm_sq) <= hi + 1e-12
