import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import expit

from ipwdebias.data import ScenarioSpec, SeedSpec
from ipwdebias.exceptions import InvalidArgumentError
from ipwdebias.oracle import (
    check_decomposition,
    check_variance_identity,
    mc_population,
    scenario_diagnostics,
)


def _gauss_mean(f):
    return integrate.quad(lambda z: f(z) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), -40, 40, limit=200)[0]


def _pi(z):
    return expit(z / 2)


# In the well-specified scenario X = z u + w with u = 1/sqrt(d) and w
# orthogonal to u, so J* = a u u^T + b (I - u u^T) and every population
# quantity reduces to a one-dimensional integral over z ~ N(0, 1).
A_PAR = _gauss_mean(lambda z: _pi(z) * (1 - _pi(z)) * z * z)
B_PERP = _gauss_mean(lambda z: _pi(z) * (1 - _pi(z)))
C_THETA = _gauss_mean(lambda z: (1 - _pi(z)) * abs(z) * z)


def b1_quadrature(d):
    k = C_THETA / A_PAR
    return 0.5 * _gauss_mean(
        lambda z: (abs(z) - _pi(z) * k * z) * (1 - _pi(z)) * (2 * _pi(z) - 1) * (z * z / A_PAR + (d - 1) / B_PERP)
    )


def test_quadrature_constants():
    assert A_PAR == pytest.approx(0.2110035, abs=1e-6)
    assert B_PERP == pytest.approx(0.2360444, abs=1e-6)
    assert b1_quadrature(3) == pytest.approx(-0.1052146, abs=1e-6)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_population_matches_quadrature(d):
    pq = mc_population(ScenarioSpec("wellspec", d), 1_000_000, SeedSpec(4))
    u = np.ones(d) / math.sqrt(d)
    J = A_PAR * np.outer(u, u) + B_PERP * (np.eye(d) - np.outer(u, u))
    np.testing.assert_allclose(pq.fisher_pop, J, atol=5e-3)
    np.testing.assert_allclose(pq.theta1, C_THETA * u, atol=4 * np.max(pq.std_errors["theta1"]) + 1e-3)
    np.testing.assert_allclose(pq.theta0, 0.0)
    assert pq.b0 == 0.0
    assert abs(pq.b1 - b1_quadrature(d)) <= 4 * pq.std_errors["b1"]
    assert pq.tau_star == pytest.approx(math.sqrt(2 / math.pi), abs=4 * pq.std_errors["tau_star"] + 1e-3)


def test_zero_bias_population():
    pq = mc_population(ScenarioSpec("zerobias", 3), 200_000, SeedSpec(1))
    for k in ("b1", "b0"):
        assert abs(getattr(pq, k)) <= 3 * pq.std_errors[k] + 1e-12


def test_zero_outcome_population():
    pq = mc_population(ScenarioSpec("wellspec", 2), 50_000, SeedSpec(1), treated_outcome=lambda z: 0 * z)
    assert not pq.theta1.any() and not pq.theta0.any()
    assert pq.b1 == 0.0 and pq.b0 == 0.0
    assert pq.vstar_sq == 0.0 and pq.vbar_sq == 0.0
    rep = check_variance_identity(
        ScenarioSpec("wellspec", 2), 50_000, SeedSpec(1), treated_outcome=lambda z: 0 * z
    )
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.holds


def test_population_is_reproducible():
    spec = ScenarioSpec("misspec", 3)
    a = mc_population(spec, 100_000, SeedSpec(8))
    b = mc_population(spec, 100_000, SeedSpec(8), threads=3)
    assert a.to_dict() == b.to_dict()


def test_vbar_consistent_across_seeds():
    spec = ScenarioSpec("wellspec", 2)
    a = mc_population(spec, 1_000_000, SeedSpec(1))
    b = mc_population(spec, 1_000_000, SeedSpec(2))
    se = math.hypot(a.std_errors["vbar_sq"], b.std_errors["vbar_sq"])
    assert abs(a.vbar_sq - b.vbar_sq) <= 3 * se


def test_theta_solves_fisher_norm_projection():
    # brute-force minimization of the defining least-squares objective on a grid
    spec = ScenarioSpec("wellspec", 1)
    pq = mc_population(spec, 400_000, SeedSpec(6))
    rng = np.random.default_rng(123)
    x = rng.standard_normal(400_000)
    pi = _pi(x)
    a = (rng.random(x.size) < pi).astype(float)
    y = np.abs(x)
    jinv = 1.0 / pq.fisher_pop[0, 0]
    target1 = a * y / pi - y.mean()
    target0 = np.zeros_like(x)  # control outcomes are identically zero
    grid = np.linspace(-0.5, 0.5, 2001)

    def objective(target, g):
        # E[(T - t g)^2] expanded so the grid is scanned without resampling
        return np.mean(target**2) - 2 * grid * np.mean(target * g) + grid**2 * np.mean(g * g)

    obj1 = objective(target1, (a - pi) * jinv * x)
    obj0 = objective(target0, (pi - a) * jinv * x)
    step = grid[1] - grid[0]
    assert grid[int(np.argmin(obj1))] == pytest.approx(pq.theta1[0], abs=0.01 + step)
    assert grid[int(np.argmin(obj0))] == pytest.approx(pq.theta0[0], abs=step)


@pytest.mark.parametrize("kind,d", [("wellspec", 3), ("zerobias", 2)])
def test_variance_identity(kind, d):
    rep = check_variance_identity(ScenarioSpec(kind, d), 1_000_000, SeedSpec(2))
    assert rep.holds, rep


def test_efficiency_ordering():
    spec = ScenarioSpec("wellspec", 3)
    pq = mc_population(spec, 1_000_000, SeedSpec(3))
    se = pq.std_errors
    assert pq.vstar_sq <= pq.vbar_sq + 3 * math.hypot(se["vstar_sq"], se["vbar_sq"])
    assert pq.vbar_sq <= pq.oracle_var + 3 * math.hypot(se["vbar_sq"], se["oracle_var"])
    assert pq.fisher_norm_sq >= 0


def test_sample_count_validation():
    with pytest.raises(InvalidArgumentError):
        mc_population(ScenarioSpec("wellspec", 2), 100)
    with pytest.raises(InvalidArgumentError):
        check_decomposition(ScenarioSpec("wellspec", 2), 100, 2, trials=10)


def test_decomposition_small_dimension():
    rep = check_decomposition(ScenarioSpec("wellspec", 2), 500, 2, trials=400, seed=SeedSpec(5), mc_samples=200_000)
    assert rep.trials_used + rep.failures == 400
    assert rep.holds, rep
    assert abs(rep.oracle_bias) <= 4 * rep.oracle_bias_se


def test_diagnostics():
    diag = scenario_diagnostics(ScenarioSpec("wellspec", 4), 200_000, SeedSpec(1))
    assert diag.pi_min_hat + diag.pi_max_hat == pytest.approx(1.0, abs=0.02)
    assert diag.gamma_hat > 0 and diag.nu_proxy > 0
    mis = scenario_diagnostics(ScenarioSpec("misspec", 4), 50_000, SeedSpec(1))
    assert mis.pi_min_hat < 0.5 < mis.pi_max_hat
    one = scenario_diagnostics(ScenarioSpec("wellspec", 1), 1_000_000, SeedSpec(2))
    assert one.gamma_hat == pytest.approx(A_PAR, abs=3e-3)
