"""Datasets, the three simulation scenarios, and reproducible random streams."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .exceptions import InvalidArgumentError

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
MISSPEC_OFFSET = -0.1
_MC_CHUNK = 1_000_000


@dataclass(frozen=True, eq=False)
class Dataset:
    """An i.i.d. sample of (covariates, treatment, outcome) triples.

    Arrays are copied to float64 and made read-only on construction.
    """

    covariates: np.ndarray
    treatments: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        X = np.array(self.covariates, dtype=np.float64)
        a = np.array(self.treatments, dtype=np.float64)
        y = np.array(self.outcomes, dtype=np.float64)
        if X.ndim != 2:
            raise InvalidArgumentError(f"covariates must be 2-D, got shape {X.shape}")
        n, d = X.shape
        if n < 1 or d < 1:
            raise InvalidArgumentError(f"need n >= 1 and d >= 1, got shape {X.shape}")
        if a.shape != (n,) or y.shape != (n,):
            raise InvalidArgumentError(
                f"length mismatch: covariates {n}, treatments {a.shape}, outcomes {y.shape}"
            )
        if not np.all((a == 0.0) | (a == 1.0)):
            raise InvalidArgumentError("treatments must be exactly 0 or 1")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("covariates and outcomes must be finite")
        for arr in (X, a, y):
            arr.flags.writeable = False
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "treatments", a)
        object.__setattr__(self, "outcomes", y)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def d(self) -> int:
        return self.covariates.shape[1]

    def permuted(self, order) -> Dataset:
        order = np.asarray(order)
        return Dataset(self.covariates[order], self.treatments[order], self.outcomes[order])

    def with_outcomes(self, outcomes) -> Dataset:
        return Dataset(self.covariates, self.treatments, outcomes)


def read_csv(path) -> Dataset:
    """Read a dataset from a ``y,a,x1,...,xd`` CSV file."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file") from None
        d = len(header) - 2
        expected = ["y", "a"] + [f"x{j}" for j in range(1, d + 1)]
        if d < 1 or header != expected:
            raise InvalidArgumentError(f"{path}: header must be y,a,x1,...,xd; got {','.join(header)}")
        rows = [row for row in reader if row]
    if not rows:
        raise InvalidArgumentError(f"{path}: no data rows")
    try:
        values = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
    if values.shape[1] != d + 2:
        raise InvalidArgumentError(f"{path}: ragged rows")
    return Dataset(values[:, 2:], values[:, 1], values[:, 0])


def write_csv(data: Dataset, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y", "a"] + [f"x{j}" for j in range(1, data.d + 1)])
        for y, a, x in zip(data.outcomes, data.treatments, data.covariates):
            writer.writerow([repr(float(y)), int(a)] + [repr(float(v)) for v in x])


class ScenarioKind(enum.Enum):
    WELL_SPECIFIED = "wellspec"
    ZERO_BIAS = "zerobias"
    MISSPECIFIED = "misspec"

    @classmethod
    def parse(cls, token: str) -> ScenarioKind:
        key = token.strip().lower().replace("_", "").replace("-", "")
        aliases = {
            "wellspec": cls.WELL_SPECIFIED,
            "wellspecified": cls.WELL_SPECIFIED,
            "zerobias": cls.ZERO_BIAS,
            "misspec": cls.MISSPECIFIED,
            "misspecified": cls.MISSPECIFIED,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidArgumentError(f"unknown scenario {token!r}") from None


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """One of the three data-generating processes.

    ``beta_star`` is ``1/(2 sqrt(d))`` in every coordinate, and the true
    propensity is ``expit(<x, beta_star> + propensity_offset)``.
    """

    kind: ScenarioKind
    dimension: int
    beta_star: np.ndarray = field(init=False)
    propensity_offset: float = field(init=False)

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", ScenarioKind.parse(self.kind))
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise InvalidArgumentError(f"dimension must be a positive integer, got {self.dimension}")
        d = int(self.dimension)
        beta = np.full(d, 1.0 / (2.0 * math.sqrt(d)))
        beta.flags.writeable = False
        object.__setattr__(self, "dimension", d)
        object.__setattr__(self, "beta_star", beta)
        offset = MISSPEC_OFFSET if self.kind is ScenarioKind.MISSPECIFIED else 0.0
        object.__setattr__(self, "propensity_offset", offset)

    def __eq__(self, other):
        if not isinstance(other, ScenarioSpec):
            return NotImplemented
        return (self.kind, self.dimension) == (other.kind, other.dimension)

    def __hash__(self):
        return hash((self.kind, self.dimension))

    def with_dimension(self, d: int) -> ScenarioSpec:
        return ScenarioSpec(self.kind, d)


@dataclass(frozen=True)
class SeedSpec:
    """Key of a counter-based random stream.

    ``stream`` is an optional tuple of extra non-negative integers that
    separates independent uses of the same (master_seed, trial_index),
    e.g. one stream per dimension in a grid.
    """

    master_seed: int
    trial_index: int = 0
    stream: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise InvalidArgumentError(f"master_seed must fit in 64 unsigned bits, got {self.master_seed}")
        if int(self.trial_index) < 0:
            raise InvalidArgumentError(f"trial_index must be non-negative, got {self.trial_index}")
        if any(int(s) < 0 for s in self.stream):
            raise InvalidArgumentError("stream entries must be non-negative")
        object.__setattr__(self, "stream", tuple(int(s) for s in self.stream))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(*self.stream, int(self.trial_index)))
        return np.random.Generator(np.random.Philox(seq))

    def substream(self, *tags: int) -> SeedSpec:
        return SeedSpec(self.master_seed, self.trial_index, self.stream + tuple(tags))


def _check_x(spec: ScenarioSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != (spec.dimension,):
        raise InvalidArgumentError(f"expected covariate length {spec.dimension}, got shape {x.shape}")
    return x


def _propensity_from_index(spec: ScenarioSpec, z):
    # <x, beta_star> = z / 2 where z = <x, 1/sqrt(d)>
    return expit(0.5 * z + spec.propensity_offset)


def _treated_outcome_from_index(spec: ScenarioSpec, z):
    if spec.kind is ScenarioKind.ZERO_BIAS:
        return _propensity_from_index(spec, z) * z
    return np.abs(z)


def true_propensity(spec: ScenarioSpec, x):
    """P(A = 1 | X = x). Accepts a single vector or an (m, d) batch."""
    x = _check_x(spec, x)
    p = expit(x @ spec.beta_star + spec.propensity_offset)
    return float(p) if p.ndim == 0 else p


def true_outcome(spec: ScenarioSpec, x, a):
    """Potential outcome Y(a) at x; Y(0) is identically zero in every scenario."""
    x = _check_x(spec, x)
    z = x.sum(axis=-1) / math.sqrt(spec.dimension)
    y1 = _treated_outcome_from_index(spec, z)
    y = np.where(np.asarray(a) == 1, y1, 0.0)
    return float(y) if y.ndim == 0 else y


def generate_dataset(spec: ScenarioSpec, n: int, seed: SeedSpec) -> Dataset:
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"n must be a positive integer, got {n}")
    rng = seed.generator()
    X = rng.standard_normal((int(n), spec.dimension))
    u = rng.random(int(n))
    a = (u < true_propensity(spec, X)).astype(np.float64)
    y = true_outcome(spec, X, a)
    return Dataset(X, a, y)


def true_tau(spec: ScenarioSpec, mc_samples: int = 10_000_000, seed: SeedSpec | None = None) -> float:
    """The average treatment effect E[Y(1)] - E[Y(0)] = E[Y(1)].

    Closed form for the well-specified scenario; otherwise a Monte Carlo
    average over the one-dimensional index z = <X, 1/sqrt(d)> ~ N(0, 1),
    which carries all of the outcome's dependence on X.
    """
    return true_tau_with_error(spec, mc_samples, seed)[0]


def true_tau_with_error(spec: ScenarioSpec, mc_samples: int = 10_000_000, seed: SeedSpec | None = None):
    """Like :func:`true_tau` but also returns the MC standard error (0 for closed forms)."""
    if spec.kind is ScenarioKind.WELL_SPECIFIED:
        return SQRT_2_OVER_PI, 0.0
    if int(mc_samples) != mc_samples or mc_samples < 1:
        raise InvalidArgumentError(f"mc_samples must be a positive integer, got {mc_samples}")
    rng = (seed or SeedSpec(0)).generator()
    total = 0.0
    total_sq = 0.0
    remaining = int(mc_samples)
    while remaining > 0:
        m = min(remaining, _MC_CHUNK)
        y = _treated_outcome_from_index(spec, rng.standard_normal(m))
        total += float(y.sum())
        total_sq += float(np.dot(y, y))
        remaining -= m
    N = int(mc_samples)
    mean = total / N
    var = max(total_sq / N - mean * mean, 0.0)
    return mean, math.sqrt(var / N)


def tau_is_closed_form(spec: ScenarioSpec) -> bool:
    return spec.kind is ScenarioKind.WELL_SPECIFIED
