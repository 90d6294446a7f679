"""Command-line entry point: ``lpctree <subcommand> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import theory
from .data import DataError, Method, TrainConfig
from .dgp import DGP_NAMES, get_dgp, sample, write_sample_csv
from .experiments import (
    METHODS,
    ExperimentSetting,
    data_seed,
    full_grid,
    run_case_study,
    run_suite,
    smoke_grid,
)
from .forest import ForestConfig, fit_forest, predict_proba
from .io import CASE_LOADERS, CsvSchema, load_csv, theory_csv, write_report
from .tree import grow_tree, grow_tree_kd, policy_report, render_tree, tree_to_json

EXIT_USAGE = 1
EXIT_RUNTIME = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message} (run '{self.prog} --help' for the accepted flags)")


def _unit_float(name):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number, got {text!r}") from None
        if not 0 < v < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie strictly between 0 and 1, got {v}")
        return v

    return parse


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _lambda(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"lambda must be a number, got {text!r}") from None
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"lambda must lie in [0, 1], got {v}")
    return v


def _dgp_name(text):
    try:
        return get_dgp(text).name
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed for all randomness (default 0)")
    p.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1, help="worker count; 1 runs serially")
    p.add_argument("--out", default=None, help=out_help)
    p.add_argument("--config", default=None, help="JSON file of defaults; keys are flag names with '_' for '-'")


def _tree_flags(p: argparse.ArgumentParser, method: bool = True) -> None:
    if method:
        p.add_argument("--method", choices=[m.value for m in Method], default="cart")
        p.add_argument("--lambda", dest="lambda_", type=_lambda, default=0.1, help="PFS penalty weight")
        p.add_argument("--weight-fn", choices=("linear", "quadratic", "exponential"), default="linear")
    p.add_argument("--c", type=_unit_float("--c"), default=0.5, help="policy threshold")
    p.add_argument("--depth", type=_positive_int, default=3)
    p.add_argument("--min-leaf-frac", type=_unit_float("--min-leaf-frac"), default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpctree", description="Trees with threshold-aware final splits.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("theory", help="population split curves or the consistency experiment")
    p.add_argument("--model", choices=sorted(theory.MODELS), default="sine")
    p.add_argument("--c", type=_unit_float("--c"), default=0.75)
    p.add_argument("--lambda", dest="lambda_", type=_lambda, default=0.1)
    p.add_argument("--weight-fn", choices=("linear", "quadratic", "exponential"), default="linear")
    p.add_argument("--grid", type=_positive_int, default=1000, help="number of split points s in (0,1)")
    p.add_argument("--consistency", action="store_true", help="run the estimator consistency experiment instead")
    p.add_argument("--replicates", type=_positive_int, default=50)
    _common(p, "CSV path (default: stdout)")

    p = sub.add_parser("simulate", help="one simulation setting")
    p.add_argument("--dgp", type=_dgp_name, default="Ball")
    _tree_flags(p, method=False)
    p.add_argument("--method", action="append", choices=METHODS, default=None, help="repeat to select several")
    p.add_argument("--lambda", dest="lambda_", type=_lambda, default=0.1)
    p.add_argument("--n", type=_positive_int, default=5000)
    p.add_argument("--replicates", type=_positive_int, default=50)
    p.add_argument("--teacher-trees", type=_positive_int, default=100)
    p.add_argument("--holdout", action="store_true", help="score MR on an independent sample of equal size")
    p.add_argument("--sample-csv", default=None, help="also dump replicate 0's sample to this CSV")
    _common(p, "report directory (default: print the summary only)")
    p.set_defaults(depth=4, c=0.8)

    p = sub.add_parser("suite", help="the simulation grid")
    grid = p.add_mutually_exclusive_group()
    grid.add_argument("--full", action="store_true", help="8 DGPs x 3 thresholds x 12 configs, 50 replicates")
    grid.add_argument("--smoke", action="store_true", help="5 replicates, depths 4 and 6 (default)")
    p.add_argument("--dgp", type=_dgp_name, action="append", default=None, help="restrict to DGPs (repeatable)")
    p.add_argument("--method", action="append", choices=METHODS, default=None)
    p.add_argument("--lambda", dest="lambda_", type=_lambda, default=0.1)
    p.add_argument("--n", type=_positive_int, default=5000)
    p.add_argument("--replicates", type=_positive_int, default=None, help="override the grid's replicate count")
    p.add_argument("--teacher-trees", type=_positive_int, default=100)
    p.add_argument("--holdout", action="store_true")
    _common(p, "report directory (default: results)")

    for name, help_text in (("fit", "fit one tree on a CSV"), ("kd-fit", "fit a distilled tree on a CSV")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True, help="CSV with a header row")
        p.add_argument("--response", default="y", help="response column (default y)")
        _tree_flags(p)
        if name == "kd-fit":
            p.add_argument("--teacher-trees", type=_positive_int, default=100)
        _common(p, "write the tree as JSON to this path")

    p = sub.add_parser("case-study", help="CART / MDFS / RF-CART / RF-MDFS on a real dataset")
    p.add_argument("--name", choices=sorted(CASE_LOADERS), required=True)
    p.add_argument("--data", required=True, help="path to the dataset CSV")
    _tree_flags(p, method=False)
    p.add_argument("--teacher-trees", type=_positive_int, default=100)
    p.add_argument("--lenient", action="store_true", help="warn instead of failing on unexpected row counts")
    _common(p, "output directory (default: case_<name>)")
    p.set_defaults(c=0.6)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace, argv: Sequence[str]) -> argparse.Namespace:
    """Re-parse with JSON values as defaults so explicit flags still win."""
    path = Path(args.config)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}; check the --config path") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    sub = _subparser(parser, args.command)
    actions = {}
    for a in sub._actions:
        for opt in a.option_strings:
            if opt.startswith("--"):
                actions[opt[2:].replace("-", "_")] = a
    defaults = {}
    for key, value in data.items():
        if key == "config" or key not in actions:
            raise UsageError(f"config key {key!r} is not a flag of '{args.command}'; use flag names with '_' for '-'")
        action = actions[key]
        if action.type is not None and not isinstance(value, (list, bool)):
            try:
                value = action.type(str(value))
            except argparse.ArgumentTypeError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None:
            vals = value if isinstance(value, list) else [value]
            bad = [v for v in vals if v not in action.choices]
            if bad:
                raise UsageError(f"config key {key!r}: {bad[0]!r} is not one of {', '.join(map(str, action.choices))}")
        defaults[action.dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def parse_args(argv: Sequence[str]) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        args = _apply_config(parser, args, argv)
    return args


# -- commands ----------------------------------------------------------------------


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_theory(args) -> None:
    model = theory.get_model(args.model)
    if args.consistency:
        cfg = theory.ConsistencyConfig(replicates=args.replicates, seed=args.seed)
        rows = theory.consistency_experiment(model, args.c, cfg, jobs=args.jobs)
        lines = ["n,median_abs_error,median_risk"]
        lines += [f"{r.n},{r.median_abs_error!r},{r.median_risk!r}" for r in rows]
        _emit("\n".join(lines) + "\n", args.out)
        return
    s = np.arange(1, args.grid + 1) / (args.grid + 1)
    rows = theory.evaluate_grid(model, args.c, s, args.lambda_, args.weight_fn)
    _emit(theory_csv(rows), args.out)


def _summary(report) -> str:
    lines = []
    for r in report.results:
        s = r.setting
        cells = ", ".join(f"{m} {r.mean(m):.1f} ({r.std(m):.1f})" for m in s.methods)
        lines.append(f"{s.dgp} c={s.c} depth={s.max_depth} rho={s.min_leaf_fraction}: {cells}")
    for (a, b), rate in report.win_rates.items():
        lines.append(f"win rate {a} vs {b}: {100 * rate:.2f}%")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> None:
    methods = tuple(dict.fromkeys(args.method)) if args.method else METHODS
    setting = ExperimentSetting(
        args.dgp, args.c, args.depth, args.min_leaf_frac, n=args.n, replicates=args.replicates,
        methods=methods, base_seed=args.seed, pfs_lambda=args.lambda_,
        teacher_trees=args.teacher_trees, holdout=args.holdout,
    )
    report = run_suite([setting], jobs=args.jobs)
    if args.sample_csv:
        write_sample_csv(sample(get_dgp(args.dgp), args.n, data_seed(args.seed, args.dgp, 0)), args.sample_csv)
    if args.out:
        write_report(report, args.out)
    sys.stdout.write(_summary(report))


def cmd_suite(args) -> None:
    common = dict(
        base_seed=args.seed, n=args.n, pfs_lambda=args.lambda_,
        teacher_trees=args.teacher_trees, holdout=args.holdout,
        dgps=tuple(dict.fromkeys(args.dgp)) if args.dgp else DGP_NAMES,
    )
    if args.method:
        common["methods"] = tuple(m for m in METHODS if m in args.method)
    if args.replicates:
        common["replicates"] = args.replicates
    settings = full_grid(**common) if args.full else smoke_grid(**common)
    report = run_suite(settings, jobs=args.jobs)
    out = args.out or "results"
    write_report(report, out)
    for (a, b), rate in report.win_rates.items():
        print(f"win rate {a} vs {b}: {100 * rate:.2f}%")
    print(f"{len(report.results)} settings written to {out}")


def _read_generic(path: str, response: str):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh), None)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    if header is None:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in header]
    features = tuple(h for h in header if h != response)
    return load_csv(path, CsvSchema(features, response))


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        max_depth=args.depth, min_leaf_fraction=args.min_leaf_frac, threshold=args.c,
        method=args.method, pfs_lambda=args.lambda_, weight_fn=args.weight_fn, seed=args.seed,
    )


def _print_tree(tree, ds, c) -> None:
    print(render_tree(tree, ds.feature_names))
    rep = policy_report(tree, c, ds.feature_names)
    print(f"targeted share: {rep.cost:.3f}")
    for t in rep.targeted_leaves:
        print(f"  {t.value:.3f} ({t.samples}): {t.predicate}")


def cmd_fit(args) -> None:
    ds = _read_generic(args.data, args.response)
    tree = grow_tree(ds, _train_config(args))
    if args.out:
        _emit(tree_to_json(tree, ds.feature_names) + "\n", args.out)
    _print_tree(tree, ds, args.c)


def cmd_kd_fit(args) -> None:
    ds = _read_generic(args.data, args.response)
    forest = fit_forest(ds, ForestConfig(n_trees=args.teacher_trees, seed=args.seed), jobs=args.jobs)
    tree = grow_tree_kd(ds, predict_proba(forest, ds), _train_config(args))
    if args.out:
        _emit(tree_to_json(tree, ds.feature_names) + "\n", args.out)
    _print_tree(tree, ds, args.c)


def cmd_case_study(args) -> None:
    ds = CASE_LOADERS[args.name](args.data, strict=not args.lenient)
    result = run_case_study(
        args.name, ds, args.c, args.depth, args.min_leaf_frac, args.teacher_trees, args.seed
    )
    out = args.out or f"case_{args.name}"
    paths = write_report(result, out)
    for m, rep in result.policies.items():
        print(f"{m}: targeted share {rep.cost:.3f}, {len(rep.targeted_leaves)} targeted leaves")
    print(f"{len(paths)} files written to {out}")


COMMANDS = {
    "theory": cmd_theory,
    "simulate": cmd_simulate,
    "suite": cmd_suite,
    "fit": cmd_fit,
    "kd-fit": cmd_kd_fit,
    "case-study": cmd_case_study,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except (DataError, ValueError, OSError, ArithmeticError, theory.OptimizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
