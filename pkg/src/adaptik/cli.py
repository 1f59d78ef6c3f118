"""Command-line interface.

Subcommands: generate | fit | dp | experiment | rates | report.
Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from adaptik.discrepancy import (
    DpConfig,
    DpFitError,
    NoiseSchedule,
    SpectralResidualFitter,
    certify_bracket,
    run_dp,
)
from adaptik.dgp import NpivParams, ProxyNcParams, gen_npiv, gen_proxy_nc
from adaptik.estimators import NumericalError, outcome_moment
from adaptik.functional import DrPipelineConfig, adaptive_dr_pipeline
from adaptik.harness import (
    ExperimentSpec,
    RunRecord,
    estimator_handle,
    fit_rate_by_strategy,
    prepare_cell,
    report_text,
    run_experiment,
)
from adaptik.sieve import save_dataset_csv
from adaptik.spectral import GridExhaustedError, exact_observation, load_problem
from adaptik.util import stream_rng

_SCHEDULE_FLAG = {"rdiv": "rdiv_sqrt", "trae": "trae_squared", "fixed": "fixed"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="adaptik", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("generate", help="write a dataset CSV and its params file")
    p.add_argument("--dgp", choices=["proxy_nc", "npiv"], default="proxy_nc")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output prefix")

    p = sub.add_parser("fit", help="single estimator run at a given lambda")
    p.add_argument("--config", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("dp", help="adaptive lambda search with a printed path table")
    p.add_argument("--config", default=None,
                   help="experiment config; without it the bundled spectral fixture runs")
    p.add_argument("--schedule", choices=sorted(_SCHEDULE_FLAG), default=None)
    p.add_argument("--cd", type=float, default=None)
    p.add_argument("--lambda0", type=float, default=2.0)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--max-iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("experiment", help="run a Monte Carlo sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("rates", help="log-log error slopes from a run record")
    p.add_argument("--record", required=True)
    p.add_argument("--metric", default="abs_error",
                   choices=["abs_error", "strong_sq", "weak_sq"])

    p = sub.add_parser("report", help="aggregate table from a run record")
    p.add_argument("--record", required=True)
    return parser


def _load_spec(path: str, seed_override: int | None) -> ExperimentSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if seed_override is not None:
        doc["seed"] = seed_override
    try:
        return ExperimentSpec.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad config {path}: {exc}") from None


def _cmd_generate(args) -> int:
    rng = stream_rng(args.seed)
    if args.dgp == "proxy_nc":
        params = ProxyNcParams.default(args.master_seed)
        data, theta0 = gen_proxy_nc(params, args.n, rng)
        params_doc = {
            "dgp": "proxy_nc",
            "master_seed": args.master_seed,
            "d_s": params.d_s, "d_q": params.d_q, "d_w": params.d_w,
            "transform": params.transform,
            "theta0": theta0,
        }
    else:
        params = NpivParams()
        data, truth = gen_npiv(params, args.n, rng)
        params_doc = {
            "dgp": "npiv",
            "h0_coeffs": list(params.h0_coeffs),
            "decay_p": params.decay_p,
            "smoothing": params.smoothing,
            "noise_sd": params.noise_sd,
            "endogeneity": params.endogeneity,
            "theta0": truth.theta0,
        }
    params_doc["seed"] = args.seed
    params_doc["n"] = args.n
    csv_path = f"{args.out}.csv"
    save_dataset_csv(data, csv_path)
    Path(f"{args.out}.params.json").write_text(json.dumps(params_doc, indent=2) + "\n")
    print(f"wrote {csv_path} and {args.out}.params.json")
    return 0


def _cmd_fit(args) -> int:
    spec = _load_spec(args.config, args.seed)
    if args.lam < 0.0:
        raise UsageError("--lambda must be nonnegative")
    n = spec.sizes[0]
    cell = prepare_cell(spec, n, rep=0)
    if spec.estimator == "dr":
        config = DrPipelineConfig(
            basis_h=cell.basis_x, basis_f=cell.basis_z,
            basis_q=cell.basis_z, basis_s=cell.basis_x,
            outcome_moment=outcome_moment(), target_moment=cell.target,
            dp_primal=spec.dp_config(), dp_dual=spec.dp_config(),
            split_plan=cell.split_plan,
            fixed_lambda_primal=args.lam, fixed_lambda_dual=args.lam,
        )
        result = adaptive_dr_pipeline(cell.data, config)
        record = result.estimate.to_record()
        record.update(lambda_primal=args.lam, lambda_dual=args.lam,
                      iterations=2, abs_error=abs(result.estimate.theta_hat
                                                  - cell.theta0))
    else:
        handle = estimator_handle(spec, cell)
        fit = handle.fit(cell.fit_fold, args.lam)
        theta = float(cell.target.per_record(cell.eval_fold, cell.basis_x,
                                             "x", fit.coeffs).mean())
        record = fit.to_record()
        record.update(iterations=1, n=n, theta_hat=theta,
                      abs_error=abs(theta - cell.theta0))
    print(json.dumps(record, indent=2))
    return 0


def _cmd_dp(args) -> int:
    if args.config is None:
        fixture = resources.files("adaptik").joinpath("fixtures/single_mode.json")
        prob = load_problem(fixture)
        obs = exact_observation(prob, delta=0.25)
        fitter = SpectralResidualFitter(prob, obs)
        schedule = NoiseSchedule(
            _SCHEDULE_FLAG[args.schedule] if args.schedule else "fixed",
            args.cd if args.cd is not None else 0.25,
        )
        config = DpConfig(schedule, args.lambda0, args.rho, args.max_iters)
        outcome = run_dp(fitter, None, config)
    else:
        spec = _load_spec(args.config, args.seed)
        doc = spec.to_dict()
        if args.schedule:
            doc["schedule_kind"] = _SCHEDULE_FLAG[args.schedule]
        if args.cd is not None:
            doc["cd"] = args.cd
        doc.update(lambda0=args.lambda0, rho=args.rho, max_iters=args.max_iters,
                   strategies=["dp"])
        spec = ExperimentSpec.from_dict(doc)
        outcome = _dp_outcome_for_spec(spec)
    print(outcome.table())
    status = "converged" if outcome.converged else "not converged"
    print(f"selected lambda: {outcome.lambda_dp:.6g} ({status}, "
          f"{outcome.iterations} fits, bracket_ok={outcome.bracket_ok}, "
          f"certified={certify_bracket(outcome, outcome.delta)})")
    return 0


def _dp_outcome_for_spec(spec: ExperimentSpec):
    cell = prepare_cell(spec, spec.sizes[0], rep=0)
    return run_dp(estimator_handle(spec, cell), cell.fit_fold, spec.dp_config())


def _cmd_experiment(args) -> int:
    spec = _load_spec(args.config, args.seed)
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    record = run_experiment(spec, jobs=args.jobs)
    out = args.out or spec.out or "run"
    record.to_csv(f"{out}.csv")
    Path(f"{out}.summary.json").write_text(record.summary_json() + "\n")
    print(f"wrote {out}.csv ({len(record.rows)} rows, "
          f"{len(record.failures)} failures) and {out}.summary.json")
    return 0 if not record.failures else 2


def _cmd_rates(args) -> int:
    record = RunRecord.from_csv(args.record)
    if not record.rows:
        raise UsageError(f"record {args.record} has no rows")
    try:
        rates = fit_rate_by_strategy(record, metric=args.metric)
    except ValueError as exc:
        raise NumericalError(str(exc)) from None
    print(f"{'strategy':>12} {'slope':>10} {'stderr':>10} {'points':>7}")
    for strat, rate in rates.items():
        print(f"{strat:>12} {rate.slope:>10.4f} {rate.stderr:>10.4f} "
              f"{rate.n_points:>7}")
    return 0


def _cmd_report(args) -> int:
    record = RunRecord.from_csv(args.record)
    print(report_text(record))
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "dp": _cmd_dp,
    "experiment": _cmd_experiment,
    "rates": _cmd_rates,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, GridExhaustedError, DpFitError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
