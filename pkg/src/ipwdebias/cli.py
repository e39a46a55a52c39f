"""Command-line interface: ``simulate``, ``estimate`` and ``oracle``.

Exit codes: 0 on success, 2 for configuration errors, 3 when a single
dataset cannot be estimated.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .data import ScenarioKind, ScenarioSpec, SeedSpec, read_csv
from .exceptions import ESTIMATION_ERRORS, ConfigError, InvalidArgumentError, IPWError
from .harness import ExperimentConfig, run_experiment
from .inference import EstimateReport, Method, evaluate_methods
from .logistic import link
from .oracle import mc_population, scenario_diagnostics

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION = 0, 2, 3

log = logging.getLogger("ipwdebias")


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _seed(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's default from overwriting a top-level -v
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS, help="log progress")
    parser = argparse.ArgumentParser(prog="ipwdebias", description="IPW and debiased IPW estimation of average treatment effects.", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    scenarios = [k.value for k in ScenarioKind]

    sim = sub.add_parser("simulate", parents=[common], help="run the Monte Carlo experiment over a dimension grid")
    sim.add_argument("--scenario", choices=scenarios, required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--trials", type=int, required=True)
    sim.add_argument("--grid", type=int, default=15, help="number of grid points r")
    sim.add_argument("--dims", type=_int_list, default=None, help="explicit comma list of d (overrides --grid)")
    sim.add_argument("--methods", default="oracle,ipw,debias", help="comma list of method names")
    sim.add_argument("--seed", type=_seed, default=0)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--tau-samples", type=int, default=10_000_000, help="MC samples for the true ATE")
    sim.add_argument("--out", required=True, help="CSV output path")
    sim.add_argument("--json", default=None, help="optional JSON output path")
    sim.add_argument("--plot", default=None, help="optional path for a plotting script")

    est = sub.add_parser("estimate", parents=[common], help="estimate the ATE on a y,a,x1..xd CSV file")
    est.add_argument("--data", required=True)
    est.add_argument("--method", required=True, choices=[m.token for m in Method])
    est.add_argument("--beta-star", default=None, help="one-column CSV of the true coefficient (oracle only)")

    orc = sub.add_parser("oracle", parents=[common], help="Monte Carlo population quantities for a scenario")
    orc.add_argument("--scenario", choices=scenarios, required=True)
    orc.add_argument("--d", type=int, required=True)
    orc.add_argument("--samples", type=int, default=1_000_000)
    orc.add_argument("--seed", type=_seed, default=0)
    orc.add_argument("--threads", type=int, default=1)
    return parser


def _read_beta(path, d):
    beta = np.loadtxt(path, delimiter=",", ndmin=1, dtype=np.float64)
    if beta.ndim != 1 or beta.shape[0] != d:
        raise ConfigError(f"{path}: expected a single column of {d} values")
    return beta


def cmd_simulate(args) -> int:
    cfg = ExperimentConfig(
        scenario=args.scenario,
        n=args.n,
        trials=args.trials,
        grid_points=args.grid,
        methods=tuple(Method.parse(m) for m in args.methods.split(",") if m.strip()),
        master_seed=args.seed,
        mc_oracle_samples=args.tau_samples,
        threads=args.threads,
        dims=tuple(args.dims) if args.dims else None,
        out_csv=args.out,
        out_json=args.json,
        out_plot=args.plot,
    )
    table = run_experiment(cfg)
    for r in table.rows:
        log.info("%s d=%d bias=%.4g mse=%.4g cov=%.3f", r.method.value, r.d, r.abs_bias, r.mse, r.coverage)
    return EXIT_OK


def cmd_estimate(args) -> int:
    data = read_csv(args.data)
    method = Method.parse(args.method)
    true_props = None
    if method is Method.ORACLE:
        if not args.beta_star:
            raise ConfigError("--beta-star is required for the oracle method")
        true_props = np.atleast_1d(link(data.covariates @ _read_beta(args.beta_star, data.d)))
    report = evaluate_methods(data, [method], true_props)[method]
    if not isinstance(report, EstimateReport):
        print(f"estimation failed: {report}", file=sys.stderr)
        return EXIT_ESTIMATION
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def cmd_oracle(args) -> int:
    spec = ScenarioSpec(ScenarioKind.parse(args.scenario), args.d)
    seed = SeedSpec(args.seed)
    pq = mc_population(spec, args.samples, seed, threads=args.threads)
    out = {"scenario": spec.kind.value, "d": spec.dimension, "seed": args.seed}
    out.update(pq.to_dict())
    diag = scenario_diagnostics(spec, min(args.samples, 100_000), seed)
    out["diagnostics"] = diag.__dict__
    print(json.dumps(out, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbose = getattr(args, "verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")
    handler = {"simulate": cmd_simulate, "estimate": cmd_estimate, "oracle": cmd_oracle}[args.command]
    try:
        return handler(args)
    except (ConfigError, InvalidArgumentError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ESTIMATION_ERRORS as exc:
        print(f"estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except IPWError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
