"""Command-line entry point: train / attack / experiment / report.

Experiments are driven by JSON config files validated against a schema up
front; individual keys can be overridden with --set dotted.path=value.
Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema

from . import __version__
from .attacks import attack_spec_from_dict, generate_attack_set
from .classifier import TrainConfig, accuracy, load_model, save_model, train
from .dataset import load_idx_dataset, make_synthetic_dataset
from .filters import FilterParameterError, SmootherSpec
from .harness import (
    AttackSet,
    ConfigurationError,
    attack_iteration_sweep,
    adaptive_upper_bound_accuracy,
    cross_evaluate_subsets,
    defense_strength_sweep,
    emit_report,
    evaluate_records,
    min_defense_iterations,
    min_iteration_histogram,
    per_category_accuracy,
)

EXPERIMENT_KINDS = ("sweep-defense", "sweep-attack", "category-stats",
                    "subset-table", "min-iters")

_SMOOTHER_SCHEMA = {
    "type": "object",
    "properties": {
        "method": {"type": "string"},
        "params": {"type": "object"},
        "strength_param": {"type": "string"},
    },
    "required": ["method"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "seed": {"type": "integer"},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "dataset": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["synthetic", "idx"]},
                "train_size": {"type": "integer", "minimum": 0},
                "test_size": {"type": "integer", "minimum": 1},
                "noise_sigma": {"type": "number", "minimum": 0},
                "train_images": {"type": "string"},
                "train_labels": {"type": "string"},
                "test_images": {"type": "string"},
                "test_labels": {"type": "string"},
                "limit": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
        "model": {
            "type": "object",
            "properties": {
                "path": {"type": "string"},
                "epochs": {"type": "integer", "minimum": 0},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "batch_size": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "attack": {
            "type": "object",
            "properties": {
                "variant": {"enum": ["pgd", "salt_pepper"]},
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "iterations": {"type": "integer", "minimum": 1},
                "step_size": {"type": ["number", "null"]},
                "random_start": {"type": "boolean"},
                "density_levels": {"type": "array", "items": {"type": "number"}},
                "seed": {"type": "integer"},
                "dir": {"type": "string"},
            },
            "required": ["variant"],
            "additionalProperties": False,
        },
        "defense": {
            "anyOf": [
                _SMOOTHER_SCHEMA,
                {"type": "array", "items": _SMOOTHER_SCHEMA, "minItems": 1},
            ]
        },
        "experiment": {
            "type": "object",
            "properties": {
                "kind": {"type": "string"},
                "levels": {"type": "array"},
                "iteration_axis": {"type": "array", "items": {"type": "integer"}},
                "cap": {"type": "integer", "minimum": 1},
                "subset_size": {"type": "integer", "minimum": 1},
            },
            "required": ["kind"],
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class UsageError(Exception):
    pass


def load_config(path: str, overrides: list[str]) -> dict:
    try:
        with open(path) as f:
            config = json.load(f)
    except OSError as e:
        raise UsageError(f"cannot read config: {e}")
    except json.JSONDecodeError as e:
        raise UsageError(f"config {path} is not valid JSON: {e}")
    for item in overrides:
        if "=" not in item:
            raise UsageError(f"--set expects dotted.path=value, got {item!r}")
        dotted, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node = config
        keys = dotted.split(".")
        for key in keys[:-1]:
            node = node.setdefault(key, {})
        node[keys[-1]] = value
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as e:
        raise UsageError(f"config key {e.json_path}: {e.message}")
    # referenced paths must exist before any computation starts
    ds = config.get("dataset", {})
    for key in ("train_images", "train_labels", "test_images", "test_labels"):
        if key in ds and not os.path.exists(ds[key]):
            raise FileNotFoundError(f"dataset.{key}: no such file: {ds[key]}")
    return config


def _require(config: dict, *sections: str) -> None:
    missing = [s for s in sections if s not in config]
    if missing:
        raise UsageError(f"config missing required section(s): {', '.join(missing)}")


def _out_dir(config: dict) -> str:
    out = config.get("output_dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _load_split(config: dict, split: str):
    ds = config["dataset"]
    seed = config.get("seed", 0)
    if ds["kind"] == "synthetic":
        size = ds.get("train_size", 2000) if split == "train" else ds.get("test_size", 500)
        # disjoint seed streams for the two splits
        return make_synthetic_dataset(size, seed + (0 if split == "train" else 10_000),
                                      split, noise_sigma=ds.get("noise_sigma", 0.12))
    for key in (f"{split}_images", f"{split}_labels"):
        if key not in ds:
            raise UsageError(f"dataset.{key} is required for kind 'idx'")
    return load_idx_dataset(ds[f"{split}_images"], ds[f"{split}_labels"], split,
                            ds.get("limit"))


def _model_path(config: dict) -> str:
    path = config.get("model", {}).get("path", "model.ssmd")
    return path if os.path.isabs(path) else os.path.join(_out_dir(config), path)


def _defense_specs(config: dict) -> list[SmootherSpec]:
    _require(config, "defense")
    raw = config["defense"]
    items = raw if isinstance(raw, list) else [raw]
    return [SmootherSpec.from_dict(obj) for obj in items]


def _attack_dir(config: dict) -> str:
    sub = config.get("attack", {}).get("dir", "attack")
    return sub if os.path.isabs(sub) else os.path.join(_out_dir(config), sub)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_train(config: dict) -> int:
    _require(config, "dataset")
    mc = config.get("model", {})
    train_set = _load_split(config, "train")
    test_set = _load_split(config, "test")
    tc = TrainConfig(
        epochs=mc.get("epochs", 10),
        learning_rate=mc.get("learning_rate", 0.2),
        batch_size=mc.get("batch_size", 32),
        seed=config.get("seed", 0),
    )
    model = train(train_set, tc, log=lambda msg: print(msg, file=sys.stderr))
    path = _model_path(config)
    save_model(model, path)
    print(f"model saved to {path}")
    print(f"train accuracy {accuracy(model, train_set):.4f}")
    print(f"test accuracy {accuracy(model, test_set):.4f}")
    return 0


def cmd_attack(config: dict) -> int:
    _require(config, "dataset", "attack")
    model = load_model(_model_path(config))
    test_set = _load_split(config, "test")
    spec = attack_spec_from_dict(config["attack"])
    out = _attack_dir(config)
    manifest = generate_attack_set(model, test_set, spec, out)
    n = len(manifest["samples"])
    hits = sum(s["success"] for s in manifest["samples"])
    rate = hits / n if n else 0.0
    print(f"attack set written to {out}")
    print(f"candidates {manifest['n_candidates']}, success rate {rate:.4f}")
    return 0


def cmd_experiment(config: dict) -> int:
    _require(config, "experiment")
    exp = config["experiment"]
    kind = exp["kind"]
    if kind not in EXPERIMENT_KINDS:
        print(f"unknown experiment {kind!r}; valid kinds: {', '.join(EXPERIMENT_KINDS)}",
              file=sys.stderr)
        return 2
    model = load_model(_model_path(config))
    out = _out_dir(config)
    workers = config.get("workers", 1)
    meta = {"experiment": kind, "seed": config.get("seed", 0),
            "smoothdef_version": __version__}

    if kind == "sweep-defense":
        spec = _defense_specs(config)[0]
        levels = exp.get("levels")
        if not levels:
            raise UsageError("experiment.levels is required for sweep-defense")
        attack_set = AttackSet.load(_attack_dir(config))
        result, _ = defense_strength_sweep(model, attack_set, spec, levels, workers)
        emit_report({"defense_strength_sweep": result}, out, meta)
    elif kind == "sweep-attack":
        _require(config, "dataset", "attack")
        spec = _defense_specs(config)[0]
        axis = exp.get("iteration_axis")
        if not axis:
            raise UsageError("experiment.iteration_axis is required for sweep-attack")
        test_set = _load_split(config, "test")
        pgd = attack_spec_from_dict(config["attack"])
        defended, undefended = attack_iteration_sweep(
            model, test_set, pgd, spec, axis, workers
        )
        emit_report(
            {"attack_iteration_sweep": {"defended": defended, "undefended": undefended}},
            out, meta,
        )
    elif kind == "category-stats":
        spec = _defense_specs(config)[0]
        attack_set = AttackSet.load(_attack_dir(config))
        strength = spec.strength
        records = evaluate_records(model, attack_set, spec, [strength], workers)
        stats = per_category_accuracy(records, strength)
        emit_report({"per_category_accuracy": stats}, out, meta)
    elif kind == "subset-table":
        specs = _defense_specs(config)
        size = exp.get("subset_size", 100)
        attack_set = AttackSet.load(_attack_dir(config))
        per_method = {}
        for spec in specs:
            strength = spec.strength
            records = evaluate_records(model, attack_set, spec, [strength], workers)
            per_method[spec.method.value] = (records, strength)
        table = cross_evaluate_subsets(per_method, size)
        emit_report({"optimal_subset_table": table}, out, meta)
    else:  # min-iters
        spec = _defense_specs(config)[0]
        cap = exp.get("cap", 30)
        attack_set = AttackSet.load(_attack_dir(config))
        records = min_defense_iterations(model, attack_set, spec, cap)
        upper = adaptive_upper_bound_accuracy(records)
        meta["adaptive_upper_bound_accuracy"] = upper
        emit_report({"min_defense_iterations": min_iteration_histogram(records, cap)},
                    out, meta)
        print(f"adaptive upper-bound accuracy {upper:.4f}")
    print(f"report written to {out}")
    return 0


def cmd_report(config: dict, summary_path: str | None) -> int:
    """Re-emit CSV/SVG from a previously written summary.json."""
    path = summary_path or os.path.join(_out_dir(config), "summary.json")
    try:
        with open(path) as f:
            summary = json.load(f)
    except OSError as e:
        print(f"cannot read summary: {e}", file=sys.stderr)
        return 1
    from .harness import CategoryStats, CrossTable, SweepResult

    results: dict = {}
    for name, entry in summary.get("results", {}).items():
        if entry["kind"] == "sweep":
            results[name] = {
                series: SweepResult(entry["axis"], vals, entry["n"],
                                    entry.get("config", {}))
                for series, vals in entry["values"].items()
            }
        elif entry["kind"] == "category_stats":
            results[name] = CategoryStats(entry["classes"], entry["values"],
                                          [1] * len(entry["classes"]))
        elif entry["kind"] == "cross_table":
            results[name] = CrossTable(entry["methods"], entry["matrix"],
                                       entry["subset_sizes"])
        elif entry["kind"] == "histogram":
            results[name] = (entry["bins"], entry["values"])
    out = _out_dir(config)
    emit_report(results, out, summary.get("meta"))
    print(f"report rewritten to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smoothdef",
        description="Test-time smoothing defenses vs white-box adversarial attacks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, **extra):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration; see README "
                       "for keys (seed, output_dir, workers, dataset.*, model.*, "
                       "attack.*, defense.*, experiment.*)")
        p.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                       help="override a config key, e.g. --set attack.epsilon=0.2")
        p.add_argument("--output-dir", help="override output_dir")
        p.add_argument("--seed", type=int, help="override seed")
        return p

    add("train", "train the classifier and save it under the output directory")
    add("attack", "generate and store an adversarial attack set")
    p_exp = add("experiment", "run one experiment: " + ", ".join(EXPERIMENT_KINDS))
    p_exp.add_argument("--experiment", help="override experiment.kind")
    p_rep = add("report", "re-emit CSV/SVG report files from a summary.json")
    p_rep.add_argument("--summary", help="path to summary.json (default: output_dir)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.set)
        if args.output_dir:
            config["output_dir"] = args.output_dir
        if args.seed is not None:
            config["seed"] = args.seed
        if args.command == "experiment" and getattr(args, "experiment", None):
            config.setdefault("experiment", {"kind": ""})["kind"] = args.experiment
        if args.command == "train":
            return cmd_train(config)
        if args.command == "attack":
            return cmd_attack(config)
        if args.command == "experiment":
            return cmd_experiment(config)
        return cmd_report(config, getattr(args, "summary", None))
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (FilterParameterError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
