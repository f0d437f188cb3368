"""Experiment orchestration: identification and accuracy batches across
adjustment strategies, with machine-readable CSV/JSON outputs."""

from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from predmob.adjustment import STRATEGIES, build_plan
from predmob.forest import (
    ForestConfig,
    fit_forest,
    mean_minimal_depth,
    permutation_importance,
    predict_ite,
    predictive_effect,
)
from predmob.scenarios import get_scenario, generate

ACCURACY_SCENARIOS = tuple(str(i) for i in range(1, 9))


class ExperimentFailureError(RuntimeError):
    """More than the tolerated fraction of runs failed."""


@dataclass
class ExperimentConfig:
    scenario: str
    runs: int = 100
    n: int | None = None
    adjustments: tuple[str, ...] = ("none", "covariate", "iptw",
                                    "doubly_robust", "match_full")
    forest: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "results"
    max_failure_frac: float = 0.10

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        get_scenario(self.scenario)
        for adj in self.adjustments:
            if adj not in STRATEGIES:
                raise ValueError(f"unknown adjustment {adj!r}")

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        doc["adjustments"] = tuple(doc.get("adjustments", cls.adjustments))
        return cls(**doc)


def _run_seeds(master: int, run: int) -> tuple[int, int]:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(run,))
    a, b = ss.generate_state(2)
    return int(a), int(b)


def _forest_config(config: ExperimentConfig, seed: int) -> ForestConfig:
    return ForestConfig(seed=seed, **config.forest)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _check_failures(failures, total, config):
    if failures and len(failures) > config.max_failure_frac * total:
        summary = "; ".join(f"run {r} [{a}]: {msg}" for r, a, msg in failures[:10])
        raise ExperimentFailureError(
            f"{len(failures)} of {total} run/adjustment fits failed: {summary}"
        )


def run_identification(config: ExperimentConfig) -> list[tuple]:
    """Per run and adjustment, fit a forest and record both importance
    measures for every variable. Writes identify.csv under out_dir."""
    spec = get_scenario(config.scenario)
    names = spec.names()
    rows = []
    failures = []
    for run in range(config.runs):
        data_seed, forest_seed = _run_seeds(config.seed, run)
        sample = generate(spec, n=config.n, seed=data_seed)
        for adj in config.adjustments:
            try:
                plan = build_plan(sample.dataset, adj)
                forest = fit_forest(sample.dataset, plan,
                                    _forest_config(config, forest_seed))
                perm = permutation_importance(forest, sample.dataset)
                depth = mean_minimal_depth(forest)
            except Exception as err:  # noqa: BLE001 - skip-and-log policy
                failures.append((run, adj, f"{type(err).__name__}: {err}"))
                warnings.warn(f"run {run} [{adj}] failed: {err}", RuntimeWarning)
                continue
            for j, name in enumerate(names):
                rows.append((run, adj, name, float(perm[j]), float(depth[j])))
    _check_failures(failures, config.runs * len(config.adjustments), config)
    os.makedirs(config.out_dir, exist_ok=True)
    _write_csv(
        os.path.join(config.out_dir, "identify.csv"),
        ["run", "adjustment", "variable", "permutation_importance",
         "mean_minimal_depth"],
        rows,
    )
    _write_meta(config, "identify")
    return rows


def run_accuracy(config: ExperimentConfig) -> list[tuple]:
    """Per run and adjustment, compare predicted against true per-row
    treatment effects and estimate per-variable modifying effects. Writes
    accuracy.csv and predictive_effects.csv under out_dir."""
    if config.scenario not in ACCURACY_SCENARIOS:
        raise ValueError(
            f"accuracy experiments expect scenarios {ACCURACY_SCENARIOS}, "
            f"got {config.scenario!r}"
        )
    spec = get_scenario(config.scenario)
    names = spec.names()
    rows = []
    effect_rows = []
    failures = []
    for run in range(config.runs):
        data_seed, forest_seed = _run_seeds(config.seed, run)
        sample = generate(spec, n=config.n, seed=data_seed)
        for adj in config.adjustments:
            try:
                plan = build_plan(sample.dataset, adj)
                forest = fit_forest(sample.dataset, plan,
                                    _forest_config(config, forest_seed))
                ite = predict_ite(forest, sample.dataset.biomarkers)
                err = ite - sample.true_ite
                bias = float(err.mean())
                mse = float((err**2).mean())
                effects = [predictive_effect(forest, sample.dataset, j)
                           for j in range(len(names))]
            except Exception as exc:  # noqa: BLE001 - skip-and-log policy
                failures.append((run, adj, f"{type(exc).__name__}: {exc}"))
                warnings.warn(f"run {run} [{adj}] failed: {exc}", RuntimeWarning)
                continue
            rows.append((run, adj, bias, mse - bias**2, mse))
            for name, est in zip(names, effects):
                effect_rows.append((run, adj, name, est))
    _check_failures(failures, config.runs * len(config.adjustments), config)
    os.makedirs(config.out_dir, exist_ok=True)
    _write_csv(
        os.path.join(config.out_dir, "accuracy.csv"),
        ["run", "adjustment", "bias", "variance", "mse"],
        rows,
    )
    _write_csv(
        os.path.join(config.out_dir, "predictive_effects.csv"),
        ["run", "adjustment", "variable", "estimate"],
        effect_rows,
    )
    _write_meta(config, "accuracy")
    return rows


def _write_meta(config: ExperimentConfig, kind: str):
    meta = {
        "kind": kind,
        "scenario": config.scenario,
        "runs": config.runs,
        "n": config.n,
        "adjustments": list(config.adjustments),
        "forest": config.forest,
        "seed": config.seed,
    }
    with open(os.path.join(config.out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty results file") from None
        return header, list(reader)


def _quartiles(values: list[float]) -> dict:
    arr = np.array(values)
    return {
        "q25": float(np.quantile(arr, 0.25)),
        "median": float(np.median(arr)),
        "q75": float(np.quantile(arr, 0.75)),
        "mean": float(arr.mean()),
    }


def summarize_identification(rows) -> dict:
    """Importance quartiles per adjustment/variable plus a verdict: the
    unique variable whose permutation importance is clearly positive
    (lower quartile above zero), if any."""
    by_adj: dict[str, dict[str, dict[str, list[float]]]] = {}
    order: dict[str, list[str]] = {}
    for run, adj, var, perm, depth in rows:
        slot = by_adj.setdefault(adj, {}).setdefault(var, {"perm": [], "depth": []})
        slot["perm"].append(float(perm))
        slot["depth"].append(float(depth))
        if var not in order.setdefault(adj, []):
            order[adj].append(var)
    out = {}
    for adj, per_var in by_adj.items():
        variables = {}
        positive = []
        for var in order[adj]:
            vals = per_var[var]
            stats = {
                "permutation_importance": _quartiles(vals["perm"]),
                "mean_minimal_depth": _quartiles(vals["depth"]),
            }
            variables[var] = stats
            if stats["permutation_importance"]["q25"] > 0:
                positive.append(var)
        out[adj] = {
            "variables": variables,
            "clearly_positive": positive,
            "verdict": positive[0] if len(positive) == 1 else None,
        }
    return out


def summarize_accuracy(rows, effect_rows) -> dict:
    by_adj: dict[str, dict[str, list[float]]] = {}
    for run, adj, bias, var, mse in rows:
        slot = by_adj.setdefault(adj, {"bias": [], "variance": [], "mse": []})
        slot["bias"].append(float(bias))
        slot["variance"].append(float(var))
        slot["mse"].append(float(mse))
    effects: dict[str, dict[str, list[float]]] = {}
    for run, adj, name, est in effect_rows:
        effects.setdefault(adj, {}).setdefault(name, []).append(float(est))
    out = {}
    for adj, slot in by_adj.items():
        out[adj] = {
            "bias": _quartiles(slot["bias"]),
            "variance": _quartiles(slot["variance"]),
            "mse": _quartiles(slot["mse"]),
            "predictive_effect": {
                name: _quartiles(vals)
                for name, vals in effects.get(adj, {}).items()
            },
        }
    return out


def report(results_dir) -> dict:
    """Aggregate the CSVs in a results directory into one summary document
    with a stable key order (suitable for golden-file diffs)."""
    meta_path = os.path.join(results_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise FileNotFoundError(f"no meta.json in {results_dir!r}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    summary: dict = {"meta": meta}
    if meta["kind"] == "identify":
        header, raw = _read_csv(os.path.join(results_dir, "identify.csv"))
        rows = [(int(r[0]), r[1], r[2], float(r[3]), float(r[4])) for r in raw]
        summary["identification"] = summarize_identification(rows)
    else:
        header, raw = _read_csv(os.path.join(results_dir, "accuracy.csv"))
        rows = [(int(r[0]), r[1], float(r[2]), float(r[3]), float(r[4]))
                for r in raw]
        _, raw_eff = _read_csv(os.path.join(results_dir, "predictive_effects.csv"))
        effect_rows = [(int(r[0]), r[1], r[2], float(r[3])) for r in raw_eff]
        summary["accuracy"] = summarize_accuracy(rows, effect_rows)
    return summary


def write_report(results_dir, out_path) -> dict:
    summary = report(results_dir)
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
