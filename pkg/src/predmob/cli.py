"""Command-line surface. Exit codes: 0 success, 1 usage error, 2 data
error, 3 experiment-failure threshold exceeded."""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from predmob import harness
from predmob.adjustment import (
    EmptyPlanError,
    build_plan,
    covariate_balance,
)
from predmob.data import CaseWeights, DataError, load_csv, save_csv, save_sidecar
from predmob.forest import (
    ForestConfig,
    PredMobForest,
    fit_forest,
    mean_minimal_depth,
    partial_dependence,
    permutation_importance,
)
from predmob.glm import DegenerateNodeError, SingularDesignError
from predmob.scenarios import builtin_scenarios, generate, get_scenario

USAGE_ERROR, DATA_ERROR, EXPERIMENT_ERROR = 1, 2, 3

CLI_METHODS = {"iptw": "iptw", "match-exact": "match_exact",
               "match-full": "match_full", "none": "none",
               "covariate": "covariate", "doubly-robust": "doubly_robust"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_data(path, outcome="y", treatment="treatment"):
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh))
    markers = [c for c in header if c not in (outcome, treatment, "true_ite")]
    return load_csv(path, outcome=outcome, treatment=treatment, biomarkers=markers)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def cmd_scenarios(args):
    table = builtin_scenarios()
    for sid in sorted(table, key=lambda s: (len(s), s)):
        spec = table[sid]
        print(f"{sid:4s}  p={spec.total_p:<3d} n={spec.n:<5d} {spec.description}")
    return 0


def cmd_simulate(args):
    spec = get_scenario(args.scenario)
    sample = generate(spec, n=args.n, seed=args.seed)
    save_csv(sample.dataset, args.out, extra={"true_ite": sample.true_ite})
    save_sidecar(sample.dataset, args.out + ".json",
                 extra={"scenario": args.scenario, "seed": args.seed,
                        "beta0": sample.beta0})
    print(f"wrote {sample.dataset.n} rows to {args.out}")
    return 0


def cmd_fit(args):
    data = _load_data(args.data, args.outcome, args.treatment)
    plan = build_plan(data, CLI_METHODS[args.adjust])
    config = ForestConfig(n_trees=args.trees, seed=args.seed, mtry=args.mtry)
    forest = fit_forest(data, plan, config)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(forest.to_dict(), fh, sort_keys=True)
        fh.write("\n")
    print(f"fitted {config.n_trees} trees ({args.adjust}) -> {args.out}")
    return 0


def _load_forest(path) -> PredMobForest:
    with open(path, encoding="utf-8") as fh:
        return PredMobForest.from_dict(json.load(fh))


def cmd_importance(args):
    forest = _load_forest(args.forest)
    data = _load_data(args.data, args.outcome, args.treatment)
    perm = permutation_importance(forest, data)
    depth = mean_minimal_depth(forest)
    rows = []
    for j, name in enumerate(data.names):
        rows.append((name, "permutation_importance", float(perm[j])))
        rows.append((name, "mean_minimal_depth", float(depth[j])))
    _write_rows(args.out, ["variable", "metric", "value"], rows)
    print(f"wrote importances to {args.out}")
    return 0


def cmd_pdp(args):
    forest = _load_forest(args.forest)
    data = _load_data(args.data, args.outcome, args.treatment)
    col = data.column(args.var)
    values = np.unique(data.biomarkers[:, col])
    if len(values) > args.grid_points:
        values = np.linspace(values.min(), values.max(), args.grid_points)
    curve = partial_dependence(forest, data, col, values)
    rows = [(args.var, "partial_dependence", float(v), float(ite))
            for v, ite in curve]
    _write_rows(args.out, ["variable", "metric", "value", "mean_ite"], rows)
    print(f"wrote partial dependence to {args.out}")
    return 0


def cmd_weights(args):
    data = _load_data(args.data, args.outcome, args.treatment)
    plan = build_plan(data, CLI_METHODS[args.method])
    _write_rows(args.out, ["weight"], [(float(w),) for w in plan.weights.w])
    print(f"wrote {data.n} weights ({args.method}) to {args.out}")
    return 0


def cmd_balance(args):
    data = _load_data(args.data, args.outcome, args.treatment)
    if args.weights:
        with open(args.weights, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader)
            w = np.array([float(r[0]) for r in reader])
        weights = CaseWeights(w)
    else:
        weights = CaseWeights.unit(data.n)
    table = covariate_balance(data, weights).to_dict()
    out = json.dumps(table, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(out + "\n")
    else:
        print(out)
    return 0


def cmd_experiment(args):
    config = harness.ExperimentConfig.from_json(args.config)
    if args.out_dir:
        config.out_dir = args.out_dir
    if args.kind == "identify":
        harness.run_identification(config)
    else:
        harness.run_accuracy(config)
    print(f"results written to {config.out_dir}")
    return 0


def cmd_report(args):
    harness.write_report(args.dir, args.out)
    print(f"summary written to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="predmob")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenarios", help="built-in generating models")
    ssub = p.add_subparsers(dest="action", required=True)
    ssub.add_parser("list").set_defaults(func=cmd_scenarios)

    p = sub.add_parser("simulate", help="generate one scenario dataset as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    def data_opts(p):
        p.add_argument("--outcome", default="y")
        p.add_argument("--treatment", default="treatment")

    p = sub.add_parser("fit", help="fit a forest on a CSV dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--adjust", choices=sorted(CLI_METHODS), default="none")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    data_opts(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("importance", help="variable importances of a fitted forest")
    p.add_argument("--forest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    data_opts(p)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("pdp", help="partial dependence of the treatment effect")
    p.add_argument("--forest", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--var", required=True)
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--out", required=True)
    data_opts(p)
    p.set_defaults(func=cmd_pdp)

    p = sub.add_parser("weights", help="adjustment weights for a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=sorted(CLI_METHODS), required=True)
    p.add_argument("--out", required=True)
    data_opts(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("balance", help="covariate balance report")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--out", default=None)
    data_opts(p)
    p.set_defaults(func=cmd_balance)

    p = sub.add_parser("experiment", help="run a simulation batch")
    p.add_argument("kind", choices=["identify", "accuracy"])
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="summarize a results directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.ExperimentFailureError as err:
        print(f"predmob: {err}", file=sys.stderr)
        return EXPERIMENT_ERROR
    except (DataError, EmptyPlanError, DegenerateNodeError, SingularDesignError,
            FileNotFoundError, KeyError, ValueError) as err:
        msg = err.args[0] if err.args else err
        print(f"predmob: {msg}", file=sys.stderr)
        return DATA_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
