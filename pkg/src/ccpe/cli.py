"""Command-line entry point: ``ccpe {gen,predict,run,tune,replay}``.

Exit status is 0 on success, 2 for configuration or parse errors and 3 for
runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .errors import CcpeError, ConfigError, ParseError
from .harness import (
    MODES,
    ExperimentConfig,
    grid_search,
    load_config,
    predict,
    render_jsonl,
    replay,
    run_experiment,
)
from .instances import GENERATORS, Instance, generate_instance

log = logging.getLogger("ccpe")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json_arg(text: str | None) -> dict:
    if not text:
        return {}
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"--params is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("--params must be a JSON object")
    return doc


def _load_instance(path: str) -> Instance:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return Instance.from_dict(doc)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.trials is not None:
        over["trials"] = args.trials
    if args.mode is not None:
        over["mode"] = args.mode
    if getattr(args, "budgets", None):
        over["budgets"] = tuple(args.budgets)
    return replace(cfg, **over) if over else cfg


def cmd_gen(args) -> int:
    inst = generate_instance(args.kind, _json_arg(args.params), args.seed)
    _emit(json.dumps(inst.to_dict(), indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    inst = _load_instance(args.instance)
    report = predict(inst, args.epsilon, args.delta)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.out:
        stem, _ = os.path.splitext(args.out)
        cfg = replace(cfg, out_csv=args.out, out_jsonl=stem + ".jsonl")
    result = run_experiment(cfg, jobs=args.jobs)
    if not cfg.out_csv:
        sys.stdout.write(result.csv)
    log.info("%d trial records, %d rows", len(result.trials), len(result.rows))
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config(args)
    res = grid_search(cfg, args.alpha_o, args.alpha_i, args.algorithm, args.pilot_trials, args.jobs)
    doc = {
        "algorithm": cfg.algorithms[args.algorithm].name,
        "best": {"alpha_o": res.best.alpha_o, "alpha_i": res.best.alpha_i},
        "table": res.table,
    }
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = _config(args)
    _emit(render_jsonl(replay(cfg, args.trial)), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ccpe", description="Best-intervention search in causal bandits.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("kind", choices=sorted(GENERATORS))
    p.add_argument("--params", help="generator keyword arguments as a JSON object")
    p.add_argument("--seed", type=int, help="structure seed")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("predict", help="threshold and sample-complexity report for an instance file")
    p.add_argument("instance")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    def experiment_flags(p):
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--mode", choices=MODES, help="override the mode")
        p.add_argument("--budgets", type=_ints, help="comma-separated budgets for the budget modes")
        p.add_argument("--out", help="output path")

    p = sub.add_parser("run", help="run an experiment; writes CSV and a sibling JSONL")
    experiment_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("tune", help="grid search over alpha_o x alpha_i")
    experiment_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--alpha-o", type=_floats, required=True)
    p.add_argument("--alpha-i", type=_floats, required=True)
    p.add_argument("--algorithm", type=int, default=0, help="index into the config's algorithm list")
    p.add_argument("--pilot-trials", type=int)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("replay", help="regenerate the records of one trial")
    experiment_flags(p)
    p.add_argument("trial", type=int)
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"ccpe: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CcpeError, ArithmeticError, OSError) as exc:
        print(f"ccpe: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
