"""Command-line entry point: ``ncoest <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .core import Design, Method, ScenarioConfig, load_dataset
from .errors import NcoError
from .estimators import RegressionSpec, estimate
from .harness import run_scenario, run_table, scenario_label, write_estimates, write_rows
from .oracle import calibrated_params, naive_population_contrasts, true_effects


def _json_out(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, allow_nan=True)
    sys.stdout.write("\n")


def _dump_params(path, params) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(params.to_dict(), fh, indent=2)


def cmd_simulate(args) -> int:
    cfg = ScenarioConfig.from_json(args.config)
    if args.seed is not None:
        cfg = ScenarioConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    params = calibrated_params(cfg.a_levels, cfg.p_y1_target, cfg.design)
    _dump_params(args.dump_params, params)
    res = run_scenario(cfg, threads=args.threads, params=params)
    write_rows(res, args.out)
    if args.dump_estimates:
        write_estimates([(scenario_label(cfg), res)], args.dump_estimates)
    return 0


def _cmd_table(preset):
    def run(args) -> int:
        run_table(
            preset,
            reps=args.reps,
            n=args.n,
            out=args.out,
            seed=1 if args.seed is None else args.seed,
            threads=args.threads,
            dump_estimates=args.dump_estimates,
        )
        return 0

    return run


def cmd_estimate(args) -> int:
    data = load_dataset(args.data)
    strata = None
    if args.strata is not None:
        strata = tuple(s for s in args.strata.split(",") if s)
    spec = RegressionSpec(age_degree=args.age_poly) if args.age_poly is not None else None
    rep = estimate(data, Method(args.method), strata_by=strata, spec=spec)
    _json_out(rep.to_dict())
    return 0


def cmd_oracle(args) -> int:
    cfg = ScenarioConfig.from_json(args.config)
    params = calibrated_params(cfg.a_levels, cfg.p_y1_target, cfg.design)
    _dump_params(args.dump_params, params)
    c1, c2 = naive_population_contrasts(params, cfg.design)
    _json_out({"design": cfg.design.value, **true_effects(params, cfg.design).to_dict(), "log_c1": c1, "log_c2": c2})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads for replicates (default 1)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config file)")
    common.add_argument("--dump-estimates", metavar="CSV", help="write replicate-level estimates here")
    common.add_argument("--dump-params", metavar="JSON", help="write the calibrated generative parameters here")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ncoest", parents=[common], description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run one scenario from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    for name, preset, helptext in (
        ("table1", "table1", "observational bias table over the nine-scenario grid"),
        ("rct", "table_s11", "unblinded-trial bias table over the nine-scenario grid"),
    ):
        t = sub.add_parser(name, parents=[common], help=helptext)
        t.add_argument("--reps", type=int, default=5000)
        t.add_argument("--n", type=int, default=10_000)
        t.add_argument("--out", required=True)
        t.set_defaults(func=_cmd_table(preset))

    e = sub.add_parser("estimate", parents=[common], help="fit one method to a CSV dataset")
    e.add_argument("--data", required=True)
    e.add_argument("--method", required=True, choices=[m.value for m in Method])
    e.add_argument("--strata", help="comma-separated stratification columns, e.g. w_site,w_age")
    e.add_argument("--age-poly", type=int, help="degree of the age polynomial in regression methods")
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("oracle", parents=[common], help="exact effects for a scenario config")
    o.add_argument("--config", required=True)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NcoError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
