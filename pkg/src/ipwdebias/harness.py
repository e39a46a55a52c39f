"""Monte Carlo experiment runner: scenario x dimension grid x K trials.

Every trial draws from its own counter-based stream keyed by
``(master_seed, d, trial_index)``, and results are reduced in a fixed
order, so tables are identical for any number of worker threads.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import _kernels
from .data import (
    Dataset,
    ScenarioKind,
    ScenarioSpec,
    SeedSpec,
    generate_dataset,
    tau_is_closed_form,
    true_propensity,
    true_tau_with_error,
)
from .exceptions import ConfigError, IPWError
from .inference import Z_95, EstimateReport, Method, evaluate_methods

CSV_COLUMNS = ["method", "d", "n", "trials_used", "failures", "abs_bias", "mse", "coverage", "mean_ci_length"]
DEFAULT_METHODS = (Method.ORACLE, Method.IPW, Method.DEBIASED_IPW)
# stream tag for the tau* Monte Carlo; dimensions use their own value as tag
_TAU_STREAM = 0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioKind
    n: int
    trials: int
    grid_points: int = 15
    methods: tuple = DEFAULT_METHODS
    master_seed: int = 0
    mc_oracle_samples: int = 10_000_000
    threads: int = 1
    dims: tuple | None = None
    out_csv: str | None = None
    out_json: str | None = None
    out_plot: str | None = None

    def __post_init__(self):
        if isinstance(self.scenario, str):
            object.__setattr__(self, "scenario", ScenarioKind.parse(self.scenario))
        methods = tuple(Method.parse(m) if isinstance(m, str) else m for m in self.methods)
        object.__setattr__(self, "methods", tuple(m for m in Method if m in methods))
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        self.validate()

    def validate(self):
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.n < 2:
            raise ConfigError(f"n must be at least 2, got {self.n}")
        if self.trials < 1:
            raise ConfigError(f"trials must be positive, got {self.trials}")
        if self.grid_points < 1:
            raise ConfigError(f"grid_points must be positive, got {self.grid_points}")
        if self.threads < 1:
            raise ConfigError(f"threads must be positive, got {self.threads}")
        if self.mc_oracle_samples < 1:
            raise ConfigError("mc_oracle_samples must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must fit in 64 unsigned bits")
        if self.dims is not None and (not self.dims or min(self.dims) < 1):
            raise ConfigError("dims must be a non-empty list of positive integers")

    def dimensions(self) -> list:
        return list(self.dims) if self.dims is not None else dimension_grid(self.n, self.grid_points)


@dataclass(frozen=True)
class MethodOutcome:
    tau_hat: float
    sigma_hat: float
    covered: bool
    failed: bool
    error: str | None = None


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    d: int
    outcomes: dict


@dataclass(frozen=True)
class TableRow:
    method: Method
    d: int
    n: int
    trials_used: int
    failures: int
    abs_bias: float
    mse: float
    coverage: float
    mean_ci_length: float

    @property
    def missing(self) -> bool:
        return self.trials_used == 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        for k in ("abs_bias", "mse", "coverage", "mean_ci_length"):
            if math.isnan(out[k]):
                out[k] = None
        return out


@dataclass(frozen=True)
class ExperimentTable:
    rows: list
    metadata: dict = field(default_factory=dict)

    def row(self, method, d) -> TableRow:
        method = Method.parse(method) if isinstance(method, str) else method
        for r in self.rows:
            if r.method is method and r.d == d:
                return r
        raise KeyError((method, d))

    def to_dict(self) -> dict:
        return {"metadata": self.metadata, "rows": [r.to_dict() for r in self.rows]}


def dimension_grid(n: int, r: int = 15) -> list:
    """``round(n ** ((q + 2) / (r + 6)))`` for q = 1..r, rounded half up, at least 1."""
    if n < 2 or r < 1:
        raise ConfigError(f"dimension_grid needs n >= 2 and r >= 1, got n={n}, r={r}")
    return [max(1, math.floor(n ** ((q + 2) / (r + 6)) + 0.5)) for q in range(1, r + 1)]


def _outcome(report, tau_star) -> MethodOutcome:
    if isinstance(report, EstimateReport):
        covered = abs(report.tau_hat - tau_star) <= Z_95 * report.std_err
        return MethodOutcome(report.tau_hat, report.std_err, bool(covered), False)
    return MethodOutcome(math.nan, math.nan, False, True, f"{type(report).__name__}: {report}")


def evaluate_trial(data: Dataset, spec: ScenarioSpec, methods, tau_star: float, trial_index: int = 0) -> TrialResult:
    """Evaluate all methods on one dataset; estimation failures are recorded, not raised."""
    reports = evaluate_methods(data, methods, true_propensity(spec, data.covariates))
    return TrialResult(trial_index, data.d, {m: _outcome(reports[m], tau_star) for m in methods})


def trial_seed(cfg: ExperimentConfig, d: int, trial_index: int) -> SeedSpec:
    return SeedSpec(cfg.master_seed, trial_index, stream=(d,))


def experiment_tau(cfg: ExperimentConfig):
    """True ATE for the config's scenario with its MC standard error."""
    spec = ScenarioSpec(cfg.scenario, 1)
    seed = SeedSpec(cfg.master_seed, 0, stream=(_TAU_STREAM,))
    return true_tau_with_error(spec, cfg.mc_oracle_samples, seed)


def run_trial(cfg: ExperimentConfig, d: int, trial_index: int, tau_star: float | None = None) -> TrialResult:
    spec = ScenarioSpec(cfg.scenario, d)
    if tau_star is None:
        tau_star = experiment_tau(cfg)[0]
    data = generate_dataset(spec, cfg.n, trial_seed(cfg, d, trial_index))
    return evaluate_trial(data, spec, cfg.methods, tau_star, trial_index)


def aggregate(results, tau_star: float, n: int | None = None, methods=None) -> list:
    """Bias, MSE, coverage and mean CI length per (method, d) over non-failed trials."""
    results = list(results)
    if methods is None:
        seen = {m for r in results for m in r.outcomes}
        methods = [m for m in Method if m in seen]
    rows = []
    for m in methods:
        for d in sorted({r.d for r in results}):
            outs = [r.outcomes[m] for r in results if r.d == d and m in r.outcomes]
            ok = [o for o in outs if not o.failed]
            failures = len(outs) - len(ok)
            if not ok:
                rows.append(TableRow(m, d, n or 0, 0, failures, math.nan, math.nan, math.nan, math.nan))
                continue
            err = np.array([o.tau_hat for o in ok]) - tau_star
            sig = np.array([o.sigma_hat for o in ok])
            covered = sum(o.covered for o in ok)
            rows.append(
                TableRow(
                    method=m,
                    d=d,
                    n=n or 0,
                    trials_used=len(ok),
                    failures=failures,
                    abs_bias=float(abs(err.mean())),
                    mse=float(np.mean(err * err)),
                    coverage=covered / len(ok),
                    mean_ci_length=float(2 * Z_95 * sig.mean()),
                )
            )
    return rows


def run_experiment(cfg: ExperimentConfig) -> ExperimentTable:
    tau_star, tau_se = experiment_tau(cfg)
    dims = cfg.dimensions()
    tasks = [(d, k) for d in dims for k in range(cfg.trials)]

    def work(task):
        return run_trial(cfg, task[0], task[1], tau_star)

    # Trials are the unit of parallelism; BLAS stays single-threaded so that
    # results do not depend on the worker count.
    with threadpool_limits(limits=1):
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
                results = list(ex.map(work, tasks))
        else:
            results = [work(t) for t in tasks]

    rows = []
    for d in dict.fromkeys(dims):
        rows.extend(aggregate([r for r in results if r.d == d], tau_star, cfg.n, cfg.methods))
    rows.sort(key=lambda r: (list(Method).index(r.method), r.d))
    metadata = {
        "scenario": cfg.scenario.value,
        "n": cfg.n,
        "trials": cfg.trials,
        "grid_points": cfg.grid_points,
        "dims": dims,
        "grid_rounding": "nearest (half up)" if cfg.dims is None else "explicit",
        "methods": [m.value for m in cfg.methods],
        "master_seed": cfg.master_seed,
        "tau_star": tau_star,
        "tau_star_se": tau_se,
        "tau_star_source": "closed-form" if tau_is_closed_form(ScenarioSpec(cfg.scenario, 1)) else "monte-carlo",
        "mc_oracle_samples": cfg.mc_oracle_samples,
        "kernel_backend": _kernels.get_backend(),
    }
    table = ExperimentTable(rows, metadata)
    if cfg.out_csv:
        export_table(table, "csv", cfg.out_csv)
    if cfg.out_json:
        export_table(table, "json", cfg.out_json)
    if cfg.out_plot:
        emit_plot_script(table, cfg.out_plot, cfg.out_csv)
    return table


def _fmt(x) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(x)


def export_table(table: ExperimentTable, fmt: str, path) -> None:
    """Write the table as CSV (fixed columns) or JSON (rows plus metadata)."""
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(CSV_COLUMNS)
                for r in table.rows:
                    writer.writerow(
                        [r.method.value, r.d, r.n, r.trials_used, r.failures]
                        + [_fmt(getattr(r, k)) for k in CSV_COLUMNS[5:]]
                    )
        elif fmt == "json":
            path.write_text(json.dumps(table.to_dict(), indent=2) + "\n", encoding="utf-8")
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    except OSError as exc:
        raise IPWError(f"cannot write {path}: {exc}") from exc


_PLOT_TEMPLATE = '''"""Bias, MSE, coverage and CI length against dimension, one line per method."""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CSV_PATH = {csv_path!r}
D_VALUES = {d_values!r}
METHODS = {methods!r}
TITLE = {title!r}
PANELS = [
    ("abs_bias", "absolute bias"),
    ("mse", "MSE"),
    ("coverage", "95% coverage"),
    ("mean_ci_length", "mean CI length"),
]


def load(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def main(csv_path=CSV_PATH, out_path=None):
    rows = load(csv_path)
    fig, axes = plt.subplots(1, 4, figsize=(18, 4))
    for ax, (key, label) in zip(axes, PANELS):
        for method in METHODS:
            pts = sorted(
                (int(r["d"]), float(r[key])) for r in rows if r["method"] == method and r[key] != "nan"
            )
            if pts:
                ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=method)
        if key == "coverage":
            ax.axhline(0.95, color="black", linestyle="--", linewidth=1, label="0.95")
        ax.set_xscale("log")
        ax.set_xticks(D_VALUES)
        ax.set_xticklabels([str(d) for d in D_VALUES], rotation=90, fontsize=7)
        ax.set_xlabel("d")
        ax.set_title(label)
    axes[0].legend()
    fig.suptitle(TITLE)
    fig.tight_layout()
    fig.savefig(out_path or csv_path.rsplit(".", 1)[0] + ".png", dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
'''


def emit_plot_script(table: ExperimentTable, path, csv_path=None) -> None:
    """Write a standalone matplotlib script that plots the exported CSV in four panels."""
    if not table.rows:
        raise ConfigError("cannot emit a plot script for an empty table")
    meta = table.metadata
    d_values = sorted({r.d for r in table.rows})
    methods = [m.value for m in Method if any(r.method is m for r in table.rows)]
    title = f"{meta.get('scenario', '')} n={meta.get('n', '')} K={meta.get('trials', '')}".strip()
    script = _PLOT_TEMPLATE.format(
        csv_path=str(csv_path or "results.csv"), d_values=d_values, methods=methods, title=title
    )
    try:
        Path(path).write_text(script, encoding="utf-8")
    except OSError as exc:
        raise IPWError(f"cannot write {path}: {exc}") from exc
