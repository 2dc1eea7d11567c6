"""Evaluation harness: the four experiment families over (model, attack
set, smoother) combinations.

Experiments: defense-strength sweep, attack-iteration sweep, per-category
variance with confidence-sorted "optimal" subsets, and per-sample minimum
defense iterations with the adaptive upper bound.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import report
from .attacks import PgdSpec, load_attack_set, pgd_init, pgd_run
from .classifier import Model, Prediction, model_fingerprint, predict_batch
from .dataset import Dataset
from .filters import ITERATIVE_METHODS, SmootherSpec, apply_smoother, iterate_one_step
from .image import Image, clamp01


class ConfigurationError(ValueError):
    pass


@dataclass
class AttackSet:
    """In-memory view of a generated attack manifest."""

    spec: dict
    model_fingerprint: str
    n_candidates: int
    samples: list  # manifest sample dicts, sorted by id
    images: list  # adversarial Image per sample

    @classmethod
    def load(cls, manifest_dir) -> "AttackSet":
        manifest, loaded = load_attack_set(manifest_dir)
        pairs = sorted(loaded, key=lambda p: p[0]["id"])
        return cls(
            manifest["spec"],
            manifest["model_fingerprint"],
            manifest.get("n_candidates", len(pairs)),
            [s for s, _ in pairs],
            [img for _, img in pairs],
        )

    def check_model(self, model: Model) -> None:
        fp = model_fingerprint(model)
        if fp != self.model_fingerprint:
            raise ConfigurationError(
                f"attack set was generated for model {self.model_fingerprint[:12]}..., "
                f"got {fp[:12]}..."
            )

    @property
    def true_labels(self) -> list[int]:
        return [s["true_label"] for s in self.samples]


@dataclass
class EvaluationRecord:
    sample_id: int
    true_label: int
    adv_prediction: Prediction
    defended: dict  # strength level -> Prediction; level 0 is the identity
    clean_prediction: Prediction | None = None


@dataclass
class SweepResult:
    axis: list
    accuracy: list
    n: int
    config: dict = field(default_factory=dict)


@dataclass
class CategoryStats:
    """Per-class accuracy, sorted ascending for presentation."""

    classes: list  # class label per entry, in ascending-accuracy order
    accuracy: list
    counts: list


@dataclass
class MinIterationRecord:
    sample_id: int
    min_iterations: int | None  # None marks an undefendable sample


@dataclass
class CrossTable:
    methods: list
    matrix: list  # matrix[i][j]: accuracy of defense j on subset of method i
    subset_sizes: list


# ---------------------------------------------------------------------------
# Parallel helper: order-preserving map with optional worker processes
# ---------------------------------------------------------------------------


def _apply_spec(args):
    spec, img = args
    return apply_smoother(spec, img)


def parallel_smooth(spec: SmootherSpec, images: list, workers: int = 1) -> list:
    if workers <= 1 or len(images) < 2 * workers:
        return [apply_smoother(spec, img) for img in images]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunk = max(1, len(images) // (workers * 4))
        return list(pool.map(_apply_spec, [(spec, im) for im in images], chunksize=chunk))


# ---------------------------------------------------------------------------
# Defense-strength sweep
# ---------------------------------------------------------------------------


def evaluate_records(model: Model, attack_set: AttackSet, spec: SmootherSpec,
                     levels, workers: int = 1) -> list[EvaluationRecord]:
    """Per-sample predictions at the identity level (0) plus each strength level."""
    attack_set.check_model(model)
    spec = spec.validated()
    adv_preds = predict_batch(model, attack_set.images)
    records = [
        EvaluationRecord(s["id"], s["true_label"], p, {0: p})
        for s, p in zip(attack_set.samples, adv_preds)
    ]
    levels = [lv for lv in levels if lv != 0]
    if spec.method in ITERATIVE_METHODS and all(
        isinstance(lv, (int, np.integer)) for lv in levels
    ):
        # shared incremental PDE state across ascending levels
        order = sorted(range(len(levels)), key=lambda i: levels[i])
        states = list(attack_set.images)
        current = 0
        for i in order:
            target = levels[i]
            for _ in range(target - current):
                states = [iterate_one_step(spec, st) for st in states]
            current = target
            preds = predict_batch(model, [clamp01(st) for st in states])
            for rec, p in zip(records, preds):
                rec.defended[target] = p
    else:
        for lv in levels:
            defended = parallel_smooth(spec.with_strength(lv), attack_set.images, workers)
            preds = predict_batch(model, defended)
            for rec, p in zip(records, preds):
                rec.defended[lv] = p
    return records


def records_accuracy(records: list[EvaluationRecord], level) -> float:
    return float(
        np.mean([rec.defended[level].label == rec.true_label for rec in records])
    )


def defense_strength_sweep(model: Model, attack_set: AttackSet, spec: SmootherSpec,
                           levels, workers: int = 1):
    """Accuracy vs defense strength, identity level prepended as 0."""
    records = evaluate_records(model, attack_set, spec, levels, workers)
    axis = [0] + [lv for lv in levels if lv != 0]
    result = SweepResult(
        axis=axis,
        accuracy=[records_accuracy(records, lv) for lv in axis],
        n=len(records),
        config={"defense": spec.to_json(), "attack": attack_set.spec,
                "model_fingerprint": attack_set.model_fingerprint},
    )
    return result, records


# ---------------------------------------------------------------------------
# Attack-iteration sweep
# ---------------------------------------------------------------------------


def attack_iteration_sweep(model: Model, dataset: Dataset, pgd_spec: PgdSpec,
                           defense: SmootherSpec, iteration_axis,
                           workers: int = 1, batch_size: int = 256):
    """Defended and undefended accuracy as PGD iterations grow, one streamed
    pass per batch (n-then-m steps equal n+m steps)."""
    axis = list(iteration_axis)
    if any(b <= a for a, b in zip(axis, axis[1:])) or (axis and axis[0] < 1):
        raise ConfigurationError(f"iteration axis must be increasing and >= 1: {axis}")
    defense = defense.validated()
    preds = predict_batch(model, dataset.images)
    kept = [i for i, p in enumerate(preds) if p.label == dataset.labels[i]]
    n = len(kept)
    und_correct = {k: 0 for k in axis}
    def_correct = {k: 0 for k in axis}
    for start in range(0, n, batch_size):
        ids = kept[start : start + batch_size]
        batch = np.stack([dataset.images[i].data for i in ids])
        labels = np.array([dataset.labels[i] for i in ids])
        state = pgd_init(batch, labels, pgd_spec, ids)
        done = 0
        for k in axis:
            pgd_run(model, state, pgd_spec, k - done)
            done = k
            advs = [Image(a) for a in state.iterate]
            for p, y in zip(predict_batch(model, advs), labels):
                und_correct[k] += int(p.label == y)
            defended = parallel_smooth(defense, advs, workers)
            for p, y in zip(predict_batch(model, defended), labels):
                def_correct[k] += int(p.label == y)
    config = {"defense": defense.to_json(), "attack": pgd_spec.to_dict(),
              "model_fingerprint": model_fingerprint(model)}
    defended_res = SweepResult(axis, [def_correct[k] / n for k in axis], n, config)
    undefended_res = SweepResult(axis, [und_correct[k] / n for k in axis], n, config)
    return defended_res, undefended_res


# ---------------------------------------------------------------------------
# Category variance and "optimal" subsets
# ---------------------------------------------------------------------------


def per_category_accuracy(records: list[EvaluationRecord], strength) -> CategoryStats:
    if not records or strength not in records[0].defended:
        raise ConfigurationError(f"strength {strength!r} missing from records")
    by_class: dict[int, list[bool]] = {}
    for rec in records:
        by_class.setdefault(rec.true_label, []).append(
            rec.defended[strength].label == rec.true_label
        )
    entries = sorted(
        ((float(np.mean(v)), cls, len(v)) for cls, v in by_class.items()),
        key=lambda t: (t[0], t[1]),
    )
    return CategoryStats(
        classes=[cls for _, cls, _ in entries],
        accuracy=[acc for acc, _, _ in entries],
        counts=[cnt for _, _, cnt in entries],
    )


def select_optimal_subset(records: list[EvaluationRecord], strength, size: int):
    """Top-`size` defended-correct samples by defended confidence (descending,
    ties by sample id). Returns (ids, shortfall)."""
    correct = [
        rec for rec in records if rec.defended[strength].label == rec.true_label
    ]
    correct.sort(key=lambda rec: (-rec.defended[strength].confidence, rec.sample_id))
    chosen = correct[:size]
    return [rec.sample_id for rec in chosen], max(0, size - len(chosen))


def cross_evaluate_subsets(records_per_method: dict, size: int) -> CrossTable:
    """records_per_method: method name -> (records, chosen strength).

    Entry (i, j): accuracy of method j's defense on method i's optimal subset.
    The diagonal is 1.0 by construction.
    """
    methods = list(records_per_method)
    universes = {
        m: tuple(rec.sample_id for rec in recs)
        for m, (recs, _) in records_per_method.items()
    }
    if len(set(universes.values())) > 1:
        raise ConfigurationError("sample universes differ across methods")
    matrix, sizes = [], []
    for mi in methods:
        recs_i, strength_i = records_per_method[mi]
        ids, _ = select_optimal_subset(recs_i, strength_i, size)
        idset = set(ids)
        sizes.append(len(ids))
        row = []
        for mj in methods:
            recs_j, strength_j = records_per_method[mj]
            sub = [rec for rec in recs_j if rec.sample_id in idset]
            row.append(records_accuracy(sub, strength_j))
        matrix.append(row)
    return CrossTable(methods, matrix, sizes)


# ---------------------------------------------------------------------------
# Minimum defense iterations and the adaptive upper bound
# ---------------------------------------------------------------------------


def defendability_matrix(model: Model, attack_set: AttackSet, spec: SmootherSpec,
                         cap: int = 30):
    """Correctness of the defended prediction at every iteration count 0..cap.

    Returns (sample ids, boolean array of shape (n, cap + 1)); extends one
    incremental, unclamped PDE state per sample instead of restarting.
    """
    attack_set.check_model(model)
    spec = spec.validated()
    if spec.method not in ITERATIVE_METHODS:
        raise ConfigurationError(
            f"min-iterations requires an iterative method, got {spec.method.value}"
        )
    ids = [s["id"] for s in attack_set.samples]
    labels = attack_set.true_labels
    n = len(ids)
    correct = np.zeros((n, cap + 1), dtype=bool)
    states = list(attack_set.images)
    for it in range(cap + 1):
        if it > 0:
            states = [iterate_one_step(spec, st) for st in states]
        preds = predict_batch(model, [clamp01(st) for st in states])
        correct[:, it] = [p.label == y for p, y in zip(preds, labels)]
    return ids, correct


def min_defense_iterations(model: Model, attack_set: AttackSet, spec: SmootherSpec,
                           cap: int = 30) -> list[MinIterationRecord]:
    ids, correct = defendability_matrix(model, attack_set, spec, cap)
    records = []
    for i, sid in enumerate(ids):
        hits = np.flatnonzero(correct[i])
        records.append(
            MinIterationRecord(sid, int(hits[0]) if hits.size else None)
        )
    return records


def adaptive_upper_bound_accuracy(records: list[MinIterationRecord]) -> float:
    if not records:
        raise ConfigurationError("no min-iteration records")
    return float(np.mean([rec.min_iterations is not None for rec in records]))


def min_iteration_histogram(records: list[MinIterationRecord], cap: int = 30):
    """(labels, counts): one bin per iteration count plus an undefendable bin."""
    counts = [0] * (cap + 1)
    undefendable = 0
    for rec in records:
        if rec.min_iterations is None:
            undefendable += 1
        else:
            counts[rec.min_iterations] += 1
    return [str(i) for i in range(cap + 1)] + ["undefendable"], counts + [undefendable]


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def emit_report(results: dict, out_dir, meta: dict | None = None) -> list[str]:
    """Write CSV + SVG per result and one summary JSON; returns file names.

    results maps a name to a SweepResult, a dict of named SweepResults (drawn
    in one plot), a CategoryStats, a CrossTable, or a (labels, counts)
    histogram pair.
    """
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []
    summary: dict = {"meta": meta or {}, "results": {}}

    def path(name, ext):
        fname = f"{name}.{ext}"
        written.append(fname)
        return os.path.join(out_dir, fname)

    for name in sorted(results):
        res = results[name]
        if isinstance(res, SweepResult):
            res = {name: res}
        if isinstance(res, dict) and all(isinstance(v, SweepResult) for v in res.values()):
            rows = []
            for series, sweep in sorted(res.items()):
                rows += [(series, x, a) for x, a in zip(sweep.axis, sweep.accuracy)]
            report.write_csv(path(name, "csv"), ["series", "strength", "accuracy"], rows)
            report.write_line_svg(
                path(name, "svg"), name, "strength", "accuracy",
                {series: (s.axis, s.accuracy) for series, s in res.items()},
            )
            first = next(iter(res.values()))
            summary["results"][name] = {
                "kind": "sweep",
                "axis": first.axis,
                "values": {series: s.accuracy for series, s in sorted(res.items())},
                "n": first.n,
                "config": first.config,
            }
        elif isinstance(res, CategoryStats):
            report.write_csv(
                path(name, "csv"), ["class", "accuracy", "count"],
                list(zip(res.classes, res.accuracy, res.counts)),
            )
            report.write_bar_svg(path(name, "svg"), name, "class (sorted)", "accuracy",
                                 [str(c) for c in res.classes], res.accuracy)
            summary["results"][name] = {
                "kind": "category_stats",
                "classes": res.classes,
                "values": res.accuracy,
                "n": int(sum(res.counts)),
            }
        elif isinstance(res, CrossTable):
            rows = [
                (res.methods[i], res.methods[j], res.matrix[i][j])
                for i in range(len(res.methods))
                for j in range(len(res.methods))
            ]
            report.write_csv(path(name, "csv"), ["subset_method", "defense_method",
                                                 "accuracy"], rows)
            flat_labels = [f"{a[:4]}|{b[:4]}" for a in res.methods for b in res.methods]
            report.write_bar_svg(path(name, "svg"), name, "subset|defense", "accuracy",
                                 flat_labels, [v for row in res.matrix for v in row])
            summary["results"][name] = {
                "kind": "cross_table",
                "methods": res.methods,
                "matrix": res.matrix,
                "subset_sizes": res.subset_sizes,
            }
        elif (isinstance(res, tuple) and len(res) == 2):
            labels, counts = res
            report.write_csv(path(name, "csv"), ["bin", "count"],
                             list(zip(labels, counts)))
            report.write_bar_svg(path(name, "svg"), name, "minimum iterations", "count",
                                 labels, [float(c) for c in counts])
            summary["results"][name] = {"kind": "histogram", "bins": list(labels),
                                        "values": list(counts)}
        else:
            raise ConfigurationError(f"cannot emit result {name!r} of type {type(res)}")
    report.write_json(os.path.join(out_dir, "summary.json"), summary)
    written.append("summary.json")
    return written
