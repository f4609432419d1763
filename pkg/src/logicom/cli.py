"""Command-line entry point: ``logicom run|analyze|extract|validate``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import analysis
from .agents import AgentConfig, Role
from .engine import DEFAULT_MAX_ROUNDS
from .extractor import extract_pairs, summarize_pairs, verify_labels, write_pairs
from .model import ALL_SCENARIOS, ScenarioKind, validate_dataset
from .runner import (
    ConfigError,
    ExperimentPlan,
    ParseError,
    ResultsStore,
    ValidationError,
    load_claims,
    plan_size,
    read_claims,
    run_matrix,
)

EXIT_OK, EXIT_INVALID, EXIT_CONFIG = 0, 1, 2

logger = logging.getLogger("logicom")


def _scenarios(value: str) -> tuple[ScenarioKind, ...]:
    try:
        return tuple(ScenarioKind(v.strip()) for v in value.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(
            f"scenarios must be a comma list of {', '.join(s.value for s in ALL_SCENARIOS)}"
        ) from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run-config file (YAML or JSON) describing the experiment plan")
    common.add_argument("--out", type=Path, help="output directory (or file, for extract)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="logicom", description="Multi-round debate benchmark for fallacy susceptibility.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    run = sub.add_parser("run", parents=[common], help="run the claims x scenarios x repetitions matrix")
    run.add_argument("--dataset", type=Path, help="claims JSONL (overrides the plan's dataset)")
    run.add_argument("--scenarios", type=_scenarios, default=None,
                     help="comma-separated scenarios (default: NoHelper,FallaciousHelper,LogicalHelper)")
    run.add_argument("--repetitions", type=int, default=None, help="repetitions per claim and scenario (default: 3)")
    run.add_argument("--concurrency", type=int, default=None, help="debates in flight at once (default: 4)")
    run.add_argument("--max-rounds", type=int, default=None,
                     help=f"round cap per debate (default: {DEFAULT_MAX_ROUNDS})")
    run.add_argument("--seed", type=int, default=None, help="seed for simulated scripted backends")
    run.add_argument("--dry-run", action="store_true", help="print the matrix plan without running any debate")

    analyze = sub.add_parser("analyze", parents=[common], help="compute metrics and export CSV reports")
    analyze.add_argument("store", type=Path, help="results directory written by 'run'")

    extract = sub.add_parser("extract", parents=[common], help="build the logical/fallacious argument-pair dataset")
    extract.add_argument("store", type=Path, help="results directory written by 'run'")
    extract.add_argument("--verify", action="store_true", help="confirm labels with the plan's verifier backend")
    extract.add_argument("--seed", type=int, default=None, help="seed for a simulated verifier")

    validate = sub.add_parser("validate", parents=[common], help="validate a claims dataset")
    validate.add_argument("dataset", type=Path, help="claims JSONL file")
    return parser


def _plan(args: argparse.Namespace) -> ExperimentPlan:
    if args.config is not None:
        plan = ExperimentPlan.from_file(args.config)
        if args.seed is not None:
            plan.backends = {k: replace(v, seed=args.seed) for k, v in plan.backends.items()}
            plan.seed = args.seed
    else:
        if args.dataset is None or args.seed is None:
            raise ConfigError("run needs --config, or --dataset with --seed for a simulated run")
        plan = ExperimentPlan.from_dict({"dataset": str(args.dataset.resolve()), "seed": args.seed})
    changes = {
        "dataset": args.dataset,
        "output_dir": args.out,
        "scenarios": args.scenarios,
        "repetitions": args.repetitions,
        "concurrency_limit": args.concurrency,
        "max_rounds": args.max_rounds,
    }
    try:
        return replace(plan, **{k: v for k, v in changes.items() if v is not None})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_run(args: argparse.Namespace) -> int:
    plan = _plan(args)
    claims = load_claims(plan.dataset)
    if args.dry_run:
        n = plan_size(plan, claims)
        print(f"{n} debates: {len(claims)} claims x {len(plan.scenarios)} scenarios x {plan.repetitions} repetitions")
        for claim, scenario, rep in plan.matrix(claims):
            print(f"  {claim.claim_id}\t{scenario.value}\t{rep}")
        return EXIT_OK
    for scenario in plan.scenarios:
        plan.debate_config(scenario)
    store = run_matrix(plan, claims)
    print(f"{len(store.executed)} debates run, {len(store)} results in {plan.output_dir}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    store = ResultsStore(args.store)
    results = store.results()
    report = analysis.build_report(results)
    out = args.out or args.store / "report"
    for path in analysis.export_report(report, results, out):
        print(f"wrote {path}")
    for model, rate in report.rq1.items():
        shown = "n/a" if rate is None else f"{rate:.2%}"
        print(f"opinion-change rate ({model}): {shown}")
    for scenario, stats in report.a1.items():
        print(f"{scenario.value}: mean successes {stats.mean_count:.2f}, success rate {stats.rate:.2%}")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    store = ResultsStore(args.store)
    pairs = extract_pairs(store)
    if args.verify:
        if args.config is not None:
            backends = ExperimentPlan.from_file(args.config).backends
        elif args.seed is not None:
            from .simulate import simulated_backends

            backends = simulated_backends(args.seed)
        else:
            raise ConfigError("--verify needs --config with a 'verifier' backend, or --seed")
        if "verifier" not in backends:
            raise ConfigError("plan has no 'verifier' backend")
        verifier = AgentConfig(Role.VERIFIER, backends["verifier"]).open(salt="verifier")
        pairs = verify_labels(pairs, verifier)
    out = args.out or args.store / "argument_pairs.jsonl"
    write_pairs(pairs, out)
    summary = summarize_pairs(pairs)
    store.add_summary(summary)
    print(f"{summary['pair_count']} pairs written to {out} (confirmation rate {summary['confirmation_rate']:.2%})")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    records = read_claims(args.dataset)
    problems = validate_dataset(records)
    if problems:
        for problem in problems:
            print(f"invalid: {problem}")
        return EXIT_INVALID
    pairs = len({r.pair_id for r in records})
    print(f"{len(records)} claims in {pairs} topic pairs: valid")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "analyze": cmd_analyze, "extract": cmd_extract, "validate": cmd_validate}


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except analysis.EmptyDenominator as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
