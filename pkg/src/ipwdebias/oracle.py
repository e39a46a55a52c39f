"""Brute-force Monte Carlo evaluation of population quantities.

Everything here is computed from fresh draws of the scenario's covariates
and treatments, never from the estimators, so it serves as an independent
check on them. Standard errors come from splitting each pass into
``BATCHES`` equal batches; each batch owns its own random stream, which
makes results independent of how batches are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .data import (
    ScenarioKind,
    ScenarioSpec,
    SeedSpec,
    _treated_outcome_from_index,
    generate_dataset,
    true_propensity,
)
from .estimators import ipw, oracle_ipw
from .exceptions import ESTIMATION_ERRORS, InvalidArgumentError, InvalidScenarioError
from .logistic import fit_mle

BATCHES = 100
MIN_SAMPLES = 10_000
_PASS_MOMENTS, _PASS_INTEGRALS, _PASS_ORACLE_VAR, _PASS_TAU, _PASS_DIAG = 1, 2, 3, 4, 5


@dataclass(frozen=True, eq=False)
class PopulationQuantities:
    theta1: np.ndarray
    theta0: np.ndarray
    fisher_pop: np.ndarray
    b1: float
    b0: float
    vbar_sq: float
    vstar_sq: float
    vbar_haj_sq: float
    oracle_var: float
    fisher_norm_sq: float
    tau_star: float
    mc_samples: int
    std_errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theta1": self.theta1.tolist(),
            "theta0": self.theta0.tolist(),
            "fisher_pop": self.fisher_pop.tolist(),
            "b1": self.b1,
            "b0": self.b0,
            "vbar_sq": self.vbar_sq,
            "vstar_sq": self.vstar_sq,
            "vbar_haj_sq": self.vbar_haj_sq,
            "oracle_var": self.oracle_var,
            "fisher_norm_sq": self.fisher_norm_sq,
            "tau_star": self.tau_star,
            "mc_samples": self.mc_samples,
            "std_errors": {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.std_errors.items()},
        }


@dataclass(frozen=True)
class ScenarioDiagnostics:
    nu_proxy: float
    gamma_hat: float
    pi_min_hat: float
    pi_max_hat: float


@dataclass(frozen=True)
class IdentityReport:
    lhs: float
    rhs: float
    difference: float
    combined_se: float
    holds: bool


@dataclass(frozen=True)
class DecompositionReport:
    n: int
    d: int
    trials_used: int
    failures: int
    scaled_bias: float
    scaled_bias_se: float
    bias_constant: float
    bias_constant_se: float
    residual: float
    combined_se: float
    tolerance: float
    holds: bool
    oracle_bias: float
    oracle_bias_se: float
    higher_order_scale: float


class _Scenario:
    """Scenario plus an optional replacement of the treated outcome mu(x, 1)."""

    def __init__(self, spec: ScenarioSpec, treated_outcome=None):
        self.spec = spec
        self.treated_outcome = treated_outcome

    def draw(self, rng, m):
        d = self.spec.dimension
        X = rng.standard_normal((m, d))
        z = X.sum(axis=1) / math.sqrt(d)
        pi = true_propensity(self.spec, X)
        mu1 = self.treated_outcome(z) if self.treated_outcome else _treated_outcome_from_index(self.spec, z)
        mu0 = np.zeros(m)
        return X, pi, np.asarray(mu1, dtype=np.float64), mu0


def _batch_sizes(total: int):
    base, extra = divmod(total, BATCHES)
    return [base + (1 if b < extra else 0) for b in range(BATCHES)]


def _run_batches(fn, seed: SeedSpec, pass_id: int, total: int, threads: int):
    jobs = [(seed.substream(pass_id, b).generator(), m) for b, m in enumerate(_batch_sizes(total))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda job: fn(*job), jobs))
    return [fn(*job) for job in jobs]


def _mean_se(values):
    values = np.asarray(values, dtype=np.float64)
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(len(values))


def _check_samples(mc_samples):
    if int(mc_samples) != mc_samples or mc_samples < MIN_SAMPLES:
        raise InvalidArgumentError(f"mc_samples must be an integer >= {MIN_SAMPLES}, got {mc_samples}")
    return int(mc_samples)


def _tau_star(scn: _Scenario, seed: SeedSpec, samples: int = 10_000_000):
    """E[Y(1)] - E[Y(0)] by 1-D Monte Carlo over the standardized index."""
    spec = scn.spec

    def batch(rng, m):
        z = rng.standard_normal(m)
        y = scn.treated_outcome(z) if scn.treated_outcome else _treated_outcome_from_index(spec, z)
        return float(np.mean(y))

    if scn.treated_outcome is None and spec.kind is ScenarioKind.WELL_SPECIFIED:
        return math.sqrt(2.0 / math.pi), 0.0
    return _mean_se(_run_batches(batch, seed, _PASS_TAU, samples, 1))


def _moments_pass(scn: _Scenario, seed, mc_samples, threads):
    def batch(rng, m):
        X, pi, mu1, mu0 = scn.draw(rng, m)
        w = pi * (1.0 - pi)
        return (
            (X.T * w) @ X / m,
            X.T @ ((1.0 - pi) * mu1) / m,
            X.T @ (pi * mu0) / m,
            X.T @ (1.0 - pi) / m,
            X.T @ pi / m,
            mu1.mean(),
            mu0.mean(),
        )

    parts = _run_batches(batch, seed, _PASS_MOMENTS, mc_samples, threads)
    stacked = [np.array([p[k] for p in parts]) for k in range(7)]
    J = stacked[0].mean(axis=0)
    J = 0.5 * (J + J.T)
    theta1, theta1_se = _mean_se(stacked[1])
    theta0, theta0_se = _mean_se(stacked[2])
    out = dict(
        J=J,
        theta1=theta1,
        theta0=theta0,
        theta1_se=theta1_se,
        theta0_se=theta0_se,
        e_x_1mpi=stacked[3].mean(axis=0),
        e_x_pi=stacked[4].mean(axis=0),
        ey1=float(stacked[5].mean()),
        ey0=float(stacked[6].mean()),
    )
    if not np.all(np.isfinite(J)) or np.linalg.eigvalsh(J)[0] <= 0:
        raise InvalidScenarioError("Monte Carlo Fisher matrix is not positive definite")
    out["Jinv"] = np.linalg.inv(J)
    out["Jinv"] = 0.5 * (out["Jinv"] + out["Jinv"].T)
    return out


def mc_population(
    spec: ScenarioSpec,
    mc_samples: int = 1_000_000,
    seed: SeedSpec | None = None,
    *,
    threads: int = 1,
    treated_outcome=None,
) -> PopulationQuantities:
    """Population Fisher matrix, projections, bias constants and variances.

    Pass one estimates the Fisher matrix and projection vectors; pass two,
    on an independent stream, integrates the bias constants and variance
    functionals with those frozen. ``treated_outcome`` optionally replaces
    mu(x, 1) by a function of the standardized index ``<x, 1>/sqrt(d)``
    (used to build test scenarios).
    """
    mc_samples = _check_samples(mc_samples)
    seed = seed or SeedSpec(0)
    scn = _Scenario(spec, treated_outcome)
    mom = _moments_pass(scn, seed, mc_samples, threads)
    tau, tau_se = _tau_star(scn, seed)
    Jinv, theta1, theta0 = mom["Jinv"], mom["theta1"], mom["theta0"]
    theta_sum = theta1 + theta0
    theta1_h = theta1 - mom["ey1"] * mom["e_x_1mpi"]
    theta0_h = theta0 - mom["ey0"] * mom["e_x_pi"]
    V = np.column_stack([theta1, theta0, theta1_h + theta0_h])

    def batch(rng, m):
        X, pi, mu1, mu0 = scn.draw(rng, m)
        A = (rng.random(m) < pi).astype(np.float64)
        q, U = _kernels.fisher_forms(X, Jinv, V)
        tilt = 0.5 * (2.0 * pi - 1.0) * q
        b1 = (mu1 - pi * U[:, 0]) * (1.0 - pi) * tilt
        b0 = (mu0 + (1.0 - pi) * U[:, 1]) * pi * tilt
        y = A * mu1 + (1.0 - A) * mu0
        summand = A * y / pi - (1.0 - A) * y / (1.0 - pi)
        resid = A - pi
        w = summand - tau - resid * (U[:, 0] + U[:, 1])
        yc = A * (mu1 - mom["ey1"]) / pi - (1.0 - A) * (mu0 - mom["ey0"]) / (1.0 - pi)
        wh = yc - resid * U[:, 2]
        cate = mu1 - mu0
        return (
            b1.mean(),
            b0.mean(),
            (b1 - b0).mean(),
            np.mean(w * w),
            cate.var(ddof=1),
            np.mean(wh * wh),
            np.mean((summand - tau) ** 2),
        )

    parts = np.array(_run_batches(batch, seed, _PASS_INTEGRALS, mc_samples, threads))
    means, ses = _mean_se(parts)
    names = ["b1", "b0", "b_diff", "vbar_sq", "vstar_sq", "vbar_haj_sq", "oracle_var"]
    std_errors = dict(zip(names, (float(s) for s in ses)))
    std_errors.update(theta1=mom["theta1_se"], theta0=mom["theta0_se"], tau_star=float(tau_se))
    return PopulationQuantities(
        theta1=theta1,
        theta0=theta0,
        fisher_pop=mom["J"],
        b1=float(means[0]),
        b0=float(means[1]),
        vbar_sq=float(means[3]),
        vstar_sq=float(means[4]),
        vbar_haj_sq=float(means[5]),
        oracle_var=float(means[6]),
        fisher_norm_sq=float(theta_sum @ Jinv @ theta_sum),
        tau_star=float(tau),
        mc_samples=mc_samples,
        std_errors=std_errors,
    )


def check_variance_identity(
    spec: ScenarioSpec,
    mc_samples: int = 1_000_000,
    seed: SeedSpec | None = None,
    *,
    threads: int = 1,
    treated_outcome=None,
    population: PopulationQuantities | None = None,
) -> IdentityReport:
    """Compare the direct asymptotic variance with the oracle variance minus the Fisher-norm correction.

    The left side is the second moment of the influence function; the right
    side is the variance of one oracle IPW summand, drawn on a separate
    stream, minus ``||theta1 + theta0||^2`` in the inverse population
    Fisher norm.
    """
    seed = seed or SeedSpec(0)
    mc_samples = _check_samples(mc_samples)
    pq = population or mc_population(spec, mc_samples, seed, threads=threads, treated_outcome=treated_outcome)
    scn = _Scenario(spec, treated_outcome)
    tau = pq.tau_star

    def batch(rng, m):
        X, pi, mu1, mu0 = scn.draw(rng, m)
        A = (rng.random(m) < pi).astype(np.float64)
        y = A * mu1 + (1.0 - A) * mu0
        s = A * y / pi - (1.0 - A) * y / (1.0 - pi)
        return np.mean((s - tau) ** 2)

    var_or, var_or_se = _mean_se(_run_batches(batch, seed, _PASS_ORACLE_VAR, mc_samples, threads))
    lhs = pq.vbar_sq
    rhs = float(var_or) - pq.fisher_norm_sq
    se = math.hypot(pq.std_errors["vbar_sq"], float(var_or_se))
    diff = lhs - rhs
    return IdentityReport(lhs, rhs, diff, se, abs(diff) <= 3.0 * se)


def check_decomposition(
    spec: ScenarioSpec,
    n: int,
    d: int,
    trials: int,
    seed: SeedSpec | None = None,
    *,
    mc_samples: int = 1_000_000,
    threads: int = 1,
) -> DecompositionReport:
    """Compare the empirical ``n * E[tau_ipw - tau*]`` against ``B1 - B0``.

    The tolerance is ``max(0.3 |B1 - B0|, 3 * combined SE)``; the slack
    absorbs the higher-order remainder, whose scale ``d^{3/2} / sqrt(n)``
    is reported for context.
    """
    if trials < 200:
        raise InvalidArgumentError("check_decomposition needs at least 200 trials")
    seed = seed or SeedSpec(0)
    spec = spec.with_dimension(d)
    pq = mc_population(spec, mc_samples, seed.substream(0), threads=threads)
    tau = pq.tau_star

    def trial(k):
        data = generate_dataset(spec, n, SeedSpec(seed.master_seed, k, seed.stream + (1, d)))
        t_or = oracle_ipw(data, true_propensity(spec, data.covariates))
        try:
            return ipw(data, fit_mle(data)), t_or
        except ESTIMATION_ERRORS:
            return None, t_or

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(trial, range(trials)))
    else:
        results = [trial(k) for k in range(trials)]

    est = np.array([r[0] for r in results if r[0] is not None])
    orc = np.array([r[1] for r in results])
    used = len(est)
    scaled = n * (est.mean() - tau)
    scaled_se = n * est.std(ddof=1) / math.sqrt(used)
    bdiff = pq.b1 - pq.b0
    bdiff_se = pq.std_errors["b_diff"]
    combined = math.sqrt(scaled_se**2 + bdiff_se**2 + (n * pq.std_errors["tau_star"]) ** 2)
    tol = max(0.3 * abs(bdiff), 3.0 * combined)
    residual = scaled - bdiff
    return DecompositionReport(
        n=n,
        d=d,
        trials_used=used,
        failures=trials - used,
        scaled_bias=float(scaled),
        scaled_bias_se=float(scaled_se),
        bias_constant=float(bdiff),
        bias_constant_se=float(bdiff_se),
        residual=float(residual),
        combined_se=float(combined),
        tolerance=float(tol),
        holds=bool(abs(residual) <= tol),
        oracle_bias=float(orc.mean() - tau),
        oracle_bias_se=float(orc.std(ddof=1) / math.sqrt(len(orc))),
        higher_order_scale=d**1.5 / math.sqrt(n),
    )


def scenario_diagnostics(
    spec: ScenarioSpec, mc_samples: int = 100_000, seed: SeedSpec | None = None, probes: int = 10
) -> ScenarioDiagnostics:
    """Empirical stand-ins for the tail, curvature and overlap constants.

    ``nu_proxy`` is the smallest nu with ``E|<u, X>|^p <= p^{p/2} nu^p`` for
    p in {2, 4, 6} over a set of probe directions u; ``gamma_hat`` is the
    smallest eigenvalue of the Monte Carlo Fisher matrix.
    """
    mc_samples = _check_samples(mc_samples)
    seed = seed or SeedSpec(0)
    d = spec.dimension
    rng = seed.substream(_PASS_DIAG).generator()
    dirs = [np.eye(d)[j] for j in range(min(d, probes))]
    dirs.append(np.ones(d) / math.sqrt(d))
    for _ in range(probes):
        u = rng.standard_normal(d)
        dirs.append(u / np.linalg.norm(u))
    U = np.column_stack(dirs)

    J = np.zeros((d, d))
    moments = np.zeros((3, U.shape[1]))
    pmin, pmax = 1.0, 0.0
    for m in _batch_sizes(mc_samples):
        X = rng.standard_normal((m, d))
        pi = expit(X @ spec.beta_star + spec.propensity_offset)
        J += (X.T * (pi * (1.0 - pi))) @ X
        proj = np.abs(X @ U)
        for k, p in enumerate((2, 4, 6)):
            moments[k] += (proj**p).sum(axis=0)
        pmin = min(pmin, float(pi.min()))
        pmax = max(pmax, float(pi.max()))
    J /= mc_samples
    moments /= mc_samples
    nu = max(float((moments[k] ** (1.0 / p)).max() / math.sqrt(p)) for k, p in enumerate((2, 4, 6)))
    gamma = float(np.linalg.eigvalsh(0.5 * (J + J.T))[0])
    return ScenarioDiagnostics(nu, gamma, pmin, pmax)


__all__ = [
    "PopulationQuantities",
    "ScenarioDiagnostics",
    "IdentityReport",
    "DecompositionReport",
    "mc_population",
    "check_variance_identity",
    "check_decomposition",
    "scenario_diagnostics",
]
