import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fit_at, random_dataset
from ipwdebias.data import Dataset, ScenarioSpec, SeedSpec, generate_dataset
from ipwdebias.exceptions import InvalidArgumentError, NonConvergenceError, SingularFisherError
from ipwdebias.logistic import (
    FisherMatrix,
    LogisticFit,
    empirical_fisher,
    fisher_inverse,
    fit_mle,
    hessian,
    link,
    log_likelihood,
    score,
)

LN3 = math.log(3)


def test_link_values():
    assert link(0.0) == 0.5
    assert link(LN3) == pytest.approx(0.75)
    z = np.linspace(-30, 30, 13)
    np.testing.assert_allclose(link(z) + link(-z), 1.0)


def test_log_likelihood_examples():
    data = Dataset(np.array([[1.0], [-2.0], [0.3]]), [1, 0, 1], [0, 0, 0])
    assert log_likelihood(data, [0.0]) == pytest.approx(math.log(0.5))
    one = Dataset(np.array([[LN3]]), [1], [0])
    assert log_likelihood(one, [1.0]) == pytest.approx(math.log(0.75))
    two = Dataset(np.array([[LN3], [LN3]]), [1, 0], [0, 0])
    assert log_likelihood(two, [1.0]) == pytest.approx((math.log(0.75) + math.log(0.25)) / 2)
    assert log_likelihood(two, [1.0]) == pytest.approx(-0.836988, abs=1e-6)


def test_log_likelihood_is_stable_for_large_margins():
    data = Dataset(np.array([[1.0], [-1.0]]), [1, 0], [0, 0])
    assert log_likelihood(data, [800.0]) == pytest.approx(0.0, abs=1e-300)
    assert log_likelihood(data, [-800.0]) == pytest.approx(-800.0)


def test_score_examples():
    data = Dataset(np.array([[1.0]]), [1], [0])
    np.testing.assert_allclose(score(data, [0.0]), [0.5])
    with pytest.raises(InvalidArgumentError):
        score(data, [0.0, 1.0])


def _fd_grad(f, beta, h):
    g = np.empty_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        g[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return g


@settings(max_examples=100, deadline=None)
@given(
    n=st.integers(2, 50),
    d=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_score_and_hessian_match_finite_differences(n, d, seed):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, n, d)
    beta = rng.normal(scale=0.7, size=d)
    g = score(data, beta)
    g_fd = _fd_grad(lambda b: log_likelihood(data, b), beta, 1e-5)
    assert np.linalg.norm(g - g_fd) <= 1e-6 * max(1.0, np.linalg.norm(g))
    H = hessian(data, beta)
    H_fd = np.column_stack([_fd_grad(lambda b: score(data, b)[i], beta, 1e-5) for i in range(d)])
    assert np.abs(H - H_fd).max() <= 1e-5 * max(1.0, np.abs(H).max())
    np.testing.assert_allclose(H, H.T)


def test_mle_intercept_only():
    data = Dataset(np.ones((4, 1)), [1, 1, 1, 0], np.zeros(4))
    fit = fit_mle(data)
    assert fit.converged
    assert fit.beta_hat[0] == pytest.approx(LN3, abs=1e-9)
    assert np.linalg.norm(score(data, fit.beta_hat)) <= 1e-10 * (1 + LN3)
    assert all(b >= a - 1e-12 for a, b in zip(fit.history, fit.history[1:]))


def test_mle_separation_raises():
    data = Dataset(np.ones((4, 1)), [1, 1, 1, 1], np.zeros(4))
    with pytest.raises(NonConvergenceError) as info:
        fit_mle(data)
    assert info.value.iterations >= 1


def test_mle_linearly_separated_raises():
    x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    with pytest.raises(NonConvergenceError):
        fit_mle(Dataset(x, [0, 0, 1, 1], np.zeros(4)))


def test_mle_max_iterations():
    data = Dataset(np.ones((4, 1)), [1, 1, 1, 0], np.zeros(4))
    with pytest.raises(NonConvergenceError) as info:
        fit_mle(data, max_iter=1)
    assert info.value.iterations == 1


def test_mle_recovers_truth():
    spec = ScenarioSpec("wellspec", 5)
    data = generate_dataset(spec, 5000, SeedSpec(17))
    fit = fit_mle(data)
    assert np.linalg.norm(fit.beta_hat - spec.beta_star) <= 0.25


def test_mle_is_permutation_invariant(rng):
    data = random_dataset(rng, 300, 4)
    order = rng.permutation(300)
    b1 = fit_mle(data).beta_hat
    b2 = fit_mle(data.permuted(order)).beta_hat
    np.testing.assert_allclose(b1, b2, atol=1e-9)


def test_empirical_fisher_examples():
    one = Dataset(np.array([[1.0]]), [1], [0])
    np.testing.assert_allclose(empirical_fisher(one, fit_at([0.0])).matrix, [[0.25]])
    two = Dataset(np.eye(2), [1, 0], [0, 0])
    np.testing.assert_allclose(empirical_fisher(two, fit_at([0.0, 0.0])).matrix, 0.125 * np.eye(2))


def test_empirical_fisher_matches_term_by_term_sum(rng):
    data = random_dataset(rng, 40, 3)
    beta = rng.normal(size=3)
    J = np.zeros((3, 3))
    for x in data.covariates:
        p = 1.0 / (1.0 + math.exp(-x @ beta))
        J += p * (1 - p) * np.outer(x, x)
    np.testing.assert_allclose(empirical_fisher(data, fit_at(beta)).matrix, J / 40, rtol=1e-12)


def test_empirical_fisher_needs_converged_fit():
    data = Dataset(np.array([[1.0]]), [1], [0])
    with pytest.raises(InvalidArgumentError):
        empirical_fisher(data, LogisticFit(np.zeros(1), 3, 1.0, False))


def test_fisher_inverse_examples():
    np.testing.assert_allclose(fisher_inverse(np.array([[0.25]])), [[4.0]])
    np.testing.assert_allclose(fisher_inverse(FisherMatrix(0.125 * np.eye(2), np.zeros(2))), 8 * np.eye(2))


def test_fisher_inverse_singular():
    data = Dataset(np.column_stack([np.ones(3), np.zeros(3)]), [1, 0, 1], [0, 0, 0])
    J = empirical_fisher(data, fit_at([0.0, 0.0]))
    with pytest.raises(SingularFisherError):
        fisher_inverse(J)
    with pytest.raises(SingularFisherError):
        fisher_inverse(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_fisher_inverse_random(rng):
    M = rng.standard_normal((5, 5))
    J = M @ M.T + 0.1 * np.eye(5)
    inv = fisher_inverse(J)
    np.testing.assert_allclose(inv @ J, np.eye(5), atol=1e-10)
    np.testing.assert_array_equal(inv, inv.T)
