"""Evaluation of registry tests and aggregation of pass fractions.

A test produces one instance per dataset and, depending on the metric, per
group, class, bin or perturbation variant. Instances that cannot be
evaluated (too few speakers, a bin below its minimum count, missing
predictions) are marked as skipped and left out of the pass fraction.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .core import (
    BinSpec,
    DatasetManifest,
    GroupPartition,
    Label,
    PredictionSet,
    Task,
    canonical_classes,
    partition_by_attribute,
)
from .metrics import (
    UndefinedMetricError,
    binned_class_metrics,
    class_metrics,
    concordance_corr,
    group_disparity,
    in_range_fraction,
    jensen_shannon_distance,
    mean_absolute_error,
    pearson_corr,
    sentiment_shift_scores,
    spearman_rho,
    speaker_stats,
    unchanged_fraction,
)
from .registry import CATEGORIES, TestSpec, expected_range
from .simulation import (
    SUPPORTED_METRICS,
    InsufficientSamplesError,
    RandomModelConfig,
    ThresholdTable,
    balance_groups,
    default_configs,
    simulate_threshold,
)

VALUE_DECIMALS = 12
FAIRNESS_BINS = BinSpec(4)
JSD_BINS = BinSpec(10)


@dataclass(frozen=True)
class Instance:
    """Outcome of one (dataset, key) cell of a test."""

    dataset: str
    key: str
    value: float | None
    threshold: float
    passed: bool
    skipped: bool = False
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "key": self.key,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
            "skipped": self.skipped,
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> Instance:
        return cls(
            dataset=raw["dataset"],
            key=raw["key"],
            value=raw["value"],
            threshold=raw["threshold"],
            passed=raw["passed"],
            skipped=raw["skipped"],
            reason=raw["reason"],
        )


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest test class

    spec_id: str
    test: str
    category: str
    task: Task
    metric: str
    condition: str
    instances: tuple[Instance, ...]

    @property
    def n_passed(self) -> int:
        return sum(1 for i in self.instances if not i.skipped and i.passed)

    @property
    def n_failed(self) -> int:
        return sum(1 for i in self.instances if not i.skipped and not i.passed)

    @property
    def n_skipped(self) -> int:
        return sum(1 for i in self.instances if i.skipped)

    @property
    def pass_fraction(self) -> float | None:
        """passed / (passed + failed); None when every instance was skipped."""
        evaluated = self.n_passed + self.n_failed
        return None if evaluated == 0 else self.n_passed / evaluated

    def to_dict(self) -> dict:
        return {
            "spec_id": self.spec_id,
            "test": self.test,
            "category": self.category,
            "task": self.task.value,
            "metric": self.metric,
            "condition": self.condition,
            "instances": [i.to_dict() for i in self.instances],
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> TestResult:
        return cls(
            spec_id=raw["spec_id"],
            test=raw["test"],
            category=raw["category"],
            task=Task.parse(raw["task"]),
            metric=raw["metric"],
            condition=raw["condition"],
            instances=tuple(Instance.from_dict(i) for i in raw["instances"]),
        )


@dataclass(frozen=True)
class RobustnessPair:
    """Predictions on perturbed audio and, optionally, on a reference.

    Without a reference the clean predictions of the dataset are used.
    """

    perturbed: PredictionSet
    reference: PredictionSet | None = None


@dataclass
class SuiteInputs:
    """Everything a suite run reads.

    Args:
        manifests: dataset role -> manifest.
        predictions: (role, task) -> clean predictions.
        perturbed: (role, task, variant name) -> robustness predictions.
        thresholds: optional simulated fairness thresholds; when given they
            replace the registry thresholds of simulatable metrics.
        classes: class set of categorical tests.
        seed: seed for group balancing and threshold simulation.
        balance_n: overrides the registry's balancing target; 0 disables
            balancing.
        simulation_repeats: repeats for thresholds missing from the table.
        unavailable: (role, task, variant) -> why no perturbed predictions
            exist; used as the skip reason.
    """

    manifests: Mapping[str, DatasetManifest]
    predictions: Mapping[tuple[str, Task], PredictionSet]
    perturbed: Mapping[tuple[str, Task, str], RobustnessPair] = field(default_factory=dict)
    thresholds: ThresholdTable | None = None
    classes: tuple[str, ...] = field(default_factory=canonical_classes)
    seed: int = 0
    balance_n: int | None = None
    simulation_repeats: int = 1000
    unavailable: Mapping[tuple[str, Task, str], str] = field(default_factory=dict)


# --- helpers ----------------------------------------------------------------


def _round(value: float) -> float:
    return round(float(value), VALUE_DECIMALS) + 0.0  # + 0.0 folds -0.0


def _instance(spec: TestSpec, dataset: str, key: str, value: float | None, threshold: float | None = None,
              reason: str | None = None) -> Instance:
    thr = spec.threshold if threshold is None else threshold
    if value is None or not math.isfinite(value):
        return Instance(dataset, key, None, thr, False, False, reason or "metric undefined")
    value = _round(value)
    return Instance(dataset, key, value, thr, spec.passes(value, thr))


def _skip(spec: TestSpec, dataset: str, key: str, reason: str, threshold: float | None = None) -> Instance:
    thr = spec.threshold if threshold is None else threshold
    return Instance(dataset, key, None, thr, False, True, reason)


def _value(label: Label):
    return label.value if label.is_dimensional else label.category


def _aligned(manifest: DatasetManifest, preds: PredictionSet, task: Task, classes: Sequence[str]) -> list[str]:
    """Ids with a gold label for ``task`` and a prediction, in manifest order."""
    gold = manifest.gold(task)
    ids = [sid for sid in manifest.ids if sid in gold and sid in preds]
    if not task.is_dimensional:
        allowed = set(classes)
        ids = [sid for sid in ids if gold[sid].category in allowed]
    return ids


def _class_metrics(gold: Sequence[str], pred: Sequence[str], classes: Sequence[str]):
    extra = sorted(set(pred) - set(classes))
    return class_metrics(gold, pred, list(classes) + extra)


def _safe(fn, *args) -> float | None:
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


# --- correctness ------------------------------------------------------------


def _correctness(spec: TestSpec, role: str, manifest: DatasetManifest, preds: PredictionSet,
                 classes: Sequence[str]) -> list[Instance]:
    task = spec.task
    metric = spec.metric
    if metric == "in_expected_range":
        cats = manifest.gold(Task.CATEGORIES)
        if not cats:
            return [_skip(spec, role, "", "no gold categories")]
        out = []
        for c in sorted({lab.category for lab in cats.values()}):
            rng = expected_range(c, task)
            if rng is None:
                continue
            values = [preds[sid].value for sid, lab in cats.items() if lab.category == c and sid in preds]
            if not values:
                out.append(_skip(spec, role, c, "no predictions for class"))
                continue
            out.append(_instance(spec, role, c, in_range_fraction(values, rng)))
        return out

    ids = _aligned(manifest, preds, task, classes)
    keys_per_class = metric in ("ppc", "rpc", "rel_diff_per_class", "class_proportion_mae") or (
        metric == "spearman" and not task.is_dimensional
    )
    if not ids:
        keys = list(classes) if keys_per_class else [""]
        return [_skip(spec, role, k, "no labelled predictions") for k in keys]
    gold_map = manifest.gold(task)
    gold = [_value(gold_map[sid]) for sid in ids]
    pred = [_value(preds[sid]) for sid in ids]

    if metric in ("ppc", "rpc", "uap", "uar"):
        cm = _class_metrics(gold, pred, classes)
        if metric == "uar":
            return [_instance(spec, role, "", cm.uar)]
        if metric == "uap":
            return [_instance(spec, role, "", cm.uap)]
        table = cm.precision_per_class if metric == "ppc" else cm.recall_per_class
        why = "class never predicted" if metric == "ppc" else "class absent from gold"
        return [_instance(spec, role, c, table[c]) if c in table else _skip(spec, role, c, why) for c in classes]
    if metric == "rel_diff_per_class":
        n = len(ids)
        return [_instance(spec, role, c, (pred.count(c) - gold.count(c)) / n) for c in classes]
    if metric == "jsd":
        return [_instance(spec, role, "", jensen_shannon_distance(gold, pred, JSD_BINS))]
    if metric == "ccc":
        return [_instance(spec, role, "", concordance_corr(gold, pred))]
    if metric == "pcc":
        value = _safe(pearson_corr, gold, pred)
        return [_instance(spec, role, "", value, reason="undefined: zero variance")]
    if metric == "mae":
        return [_instance(spec, role, "", mean_absolute_error(gold, pred))]
    return _speaker_level(spec, role, manifest, preds, ids, classes)


def _speaker_level(spec: TestSpec, role: str, manifest: DatasetManifest, preds: PredictionSet, ids: list[str],
                   classes: Sequence[str]) -> list[Instance]:
    task = spec.task
    pre = spec.prerequisites
    speakers = {sid: manifest.by_id[sid].speaker for sid in ids if manifest.by_id[sid].speaker is not None}
    gold_map = manifest.gold(task)
    kwargs = dict(min_samples=pre.min_samples_per_speaker, min_per_class=pre.min_samples_per_class)
    if task.is_dimensional:
        truth = speaker_stats(speakers, gold_map, task, **kwargs).values
        pred = speaker_stats(speakers, preds.predictions, task, basis=gold_map, **kwargs).values
        spk = sorted(truth)
        if len(spk) < pre.min_speakers:
            reason = f"{len(spk)} qualifying speakers, need {pre.min_speakers}"
            return [_skip(spec, role, "", reason)]
        t = [truth[s] for s in spk]
        p = [pred[s] for s in spk]
        if spec.metric == "speaker_mae":
            return [_instance(spec, role, "", mean_absolute_error(t, p))]
        return [_instance(spec, role, "", _safe(spearman_rho, t, p), reason="undefined: constant ranks")]

    truth = speaker_stats(speakers, gold_map, task, basis=gold_map, classes=classes, **kwargs).values
    pred = speaker_stats(speakers, preds.predictions, task, basis=gold_map, classes=classes, **kwargs).values
    out = []
    for c in classes:
        spk = sorted(s for s in truth if c in truth[s])
        if len(spk) < pre.min_speakers:
            reason = f"{len(spk)} qualifying speakers for class, need {pre.min_speakers}"
            out.append(_skip(spec, role, c, reason))
            continue
        t = [truth[s][c] for s in spk]
        p = [pred[s][c] for s in spk]
        if spec.metric == "class_proportion_mae":
            out.append(_instance(spec, role, c, mean_absolute_error(t, p)))
        else:
            out.append(_instance(spec, role, c, _safe(spearman_rho, t, p), reason="undefined: constant ranks"))
    return out


# --- fairness ---------------------------------------------------------------


def resolve_fairness_threshold(
    metric: str,
    partition: GroupPartition,
    table: ThresholdTable,
    model: str | None = None,
    truth: str | None = None,
    repeats: int = 1000,
    seed: int = 0,
) -> float:
    """Simulated threshold for a partition's group count and smallest group.

    Looks the value up on the table grid and simulates (and stores) it when
    the table has no matching entry.
    """
    if metric not in SUPPORTED_METRICS:
        raise ValueError(f"no simulated threshold for metric {metric!r}")
    sizes = partition.sizes()
    if not sizes or min(sizes.values()) == 0:
        raise ValueError("partition has an empty group")
    n_groups = partition.n_groups
    spg = min(sizes.values())
    default_model, default_truth = default_configs(metric)
    model = model or default_model.kind
    truth = truth if truth is not None else (default_truth.kind if default_truth else "")
    found = table.lookup(metric, n_groups, spg, model, truth)
    if found is not None:
        return found
    value = simulate_threshold(
        metric,
        n_groups,
        spg,
        RandomModelConfig(model),
        RandomModelConfig(truth) if truth else None,
        repeats=repeats,
        seed=seed,
    )
    table.put(metric, n_groups, spg, model, truth, value, repeats, seed)
    return value


def _fairness_keys(spec: TestSpec, classes: Sequence[str]) -> list[str]:
    """Instance keys below the group level, used for skipped placeholders."""
    if spec.metric in ("rel_diff_per_class", "diff_ppc", "diff_rpc"):
        return list(classes)
    if spec.metric in ("rel_diff_per_bin", "diff_precision_per_bin", "diff_recall_per_bin"):
        return [f"bin{b}" for b in range(FAIRNESS_BINS.n_bins)]
    return [""]


def _join(*parts: str) -> str:
    return "/".join(p for p in parts if p != "")


def _fairness(spec: TestSpec, role: str, manifest: DatasetManifest, preds: PredictionSet,
              inputs: SuiteInputs) -> list[Instance]:
    if spec.metric in ("class_proportion_shift", "bin_proportion_shift", "mean_shift"):
        return _sentiment(spec, role, manifest, preds, inputs.classes)
    task = spec.task
    classes = inputs.classes
    sub_keys = _fairness_keys(spec, classes)
    try:
        partition = partition_by_attribute(
            manifest, spec.grouping, min_speaker_samples=spec.prerequisites.min_pitch_speaker_samples
        )
    except ValueError as exc:
        return [_skip(spec, role, k, str(exc)) for k in sub_keys]
    labelled = spec.metric not in ("diff_mean", "rel_diff_per_class", "rel_diff_per_bin")
    gold_map = manifest.gold(task)
    usable = set(preds.predictions)
    if labelled or spec.balance_n:
        usable &= set(gold_map)
    if not task.is_dimensional and labelled:
        allowed = set(classes)
        usable = {sid for sid in usable if gold_map[sid].category in allowed}
    groups = {g: tuple(sid for sid in ids if sid in usable) for g, ids in partition.groups.items()}
    groups = {g: ids for g, ids in groups.items() if ids}
    partition = GroupPartition(partition.attribute, groups, partition.excluded)
    if partition.n_groups < 2:
        return [_skip(spec, role, k, "fewer than two groups with predictions") for k in sub_keys]

    target = inputs.balance_n if inputs.balance_n is not None else spec.balance_n
    if target:
        try:
            partition = balance_groups(manifest, partition, task, target_n=target, seed=inputs.seed)
        except InsufficientSamplesError as exc:
            return [_skip(spec, role, _join(g, k), str(exc)) for g in partition.groups for k in sub_keys]

    threshold = spec.threshold
    if inputs.thresholds is not None and spec.metric in SUPPORTED_METRICS:
        threshold = resolve_fairness_threshold(
            spec.metric, partition, inputs.thresholds, repeats=inputs.simulation_repeats, seed=inputs.seed
        )

    pool_ids = [sid for ids in partition.groups.values() for sid in ids]

    def labels_of(ids, source):
        return [_value(source[sid]) for sid in ids]

    pool_pred = labels_of(pool_ids, preds.predictions)
    pool_gold = labels_of(pool_ids, gold_map) if labelled else None
    out: list[Instance] = []
    metric = spec.metric
    for g, ids in partition.groups.items():
        g_pred = labels_of(ids, preds.predictions)
        if metric in ("diff_mean", "rel_diff_per_class", "rel_diff_per_bin"):
            report = group_disparity(
                g_pred, pool_pred, metric, spec=FAIRNESS_BINS, n_min=spec.n_bin,
                classes=classes if metric == "rel_diff_per_class" else None,
            )
            if metric == "diff_mean":
                out.append(_instance(spec, role, g, report.values["mean"], threshold))
                continue
            for k in (range(FAIRNESS_BINS.n_bins) if metric == "rel_diff_per_bin" else classes):
                key = _join(g, f"bin{k}" if metric == "rel_diff_per_bin" else k)
                if k in report.skipped:
                    out.append(_skip(spec, role, key, f"pool count in bin below {spec.n_bin}", threshold))
                else:
                    out.append(_instance(spec, role, key, report.values[k], threshold))
            continue
        g_gold = labels_of(ids, gold_map)
        if metric == "diff_ccc":
            value = concordance_corr(g_gold, g_pred) - concordance_corr(pool_gold, pool_pred)
            out.append(_instance(spec, role, g, value, threshold))
        elif metric in ("diff_uar", "diff_ppc", "diff_rpc"):
            cm_g = _class_metrics(g_gold, g_pred, classes)
            cm_p = _class_metrics(pool_gold, pool_pred, classes)
            if metric == "diff_uar":
                out.append(_instance(spec, role, g, cm_g.uar - cm_p.uar, threshold))
                continue
            attr = "precision_per_class" if metric == "diff_ppc" else "recall_per_class"
            tg, tp = getattr(cm_g, attr), getattr(cm_p, attr)
            for c in classes:
                if c in tg and c in tp:
                    out.append(_instance(spec, role, _join(g, c), tg[c] - tp[c], threshold))
                else:
                    out.append(_skip(spec, role, _join(g, c), "undefined for group or pool", threshold))
        else:
            n_min = spec.n_bin or 0
            bg = binned_class_metrics(g_gold, g_pred, FAIRNESS_BINS, n_min)
            bp = binned_class_metrics(pool_gold, pool_pred, FAIRNESS_BINS, n_min)
            attr = "precision_per_bin" if metric == "diff_precision_per_bin" else "recall_per_bin"
            tg, tp = getattr(bg, attr), getattr(bp, attr)
            for b in range(FAIRNESS_BINS.n_bins):
                key = _join(g, f"bin{b}")
                if b in bg.skipped_bins or b in bp.skipped_bins:
                    out.append(_skip(spec, role, key, f"gold count in bin below {n_min}", threshold))
                elif tg.get(b) is None or tp.get(b) is None:
                    out.append(_skip(spec, role, key, "no predictions in bin", threshold))
                else:
                    out.append(_instance(spec, role, key, tg[b] - tp[b], threshold))
    return out


def _sentiment(spec: TestSpec, role: str, manifest: DatasetManifest, preds: PredictionSet,
               classes: Sequence[str]) -> list[Instance]:
    by_lang: dict[str, list] = {}
    by_cell: dict[tuple[str, str], list] = {}
    for s in manifest.samples:
        if s.id not in preds:
            continue
        lang = s.attrs.get(spec.grouping)
        if lang is None:
            continue
        label = preds[s.id]
        by_lang.setdefault(str(lang), []).append(label)
        sent = s.attrs.get("sentiment")
        if sent is not None:
            by_cell.setdefault((str(lang), str(sent)), []).append(label)
    try:
        scores, skipped = sentiment_shift_scores(
            by_cell, by_lang, spec.task, FAIRNESS_BINS, n_min=spec.n_bin or 0,
            classes=None if spec.task.is_dimensional else classes,
        )
    except ValueError as exc:
        return [_skip(spec, role, "", str(exc))]
    out = []
    cells = sorted({(lang, sent) for (lang, sent, _) in scores} | set(by_cell))
    for lang, sent in cells:
        if spec.metric == "mean_shift":
            out.append(_instance(spec, role, _join(lang, sent), scores[(lang, sent, "mean")]))
        elif spec.metric == "class_proportion_shift":
            for c in classes:
                out.append(_instance(spec, role, _join(lang, sent, c), scores[(lang, sent, c)]))
        else:
            for b in range(FAIRNESS_BINS.n_bins):
                key = _join(lang, sent, f"bin{b}")
                if b in skipped:
                    out.append(_skip(spec, role, key, f"pooled count in bin below {spec.n_bin}"))
                else:
                    out.append(_instance(spec, role, key, scores[(lang, sent, b)]))
    return out


# --- robustness -------------------------------------------------------------


def _robustness(spec: TestSpec, role: str, manifest: DatasetManifest, clean: PredictionSet | None,
                inputs: SuiteInputs) -> list[Instance]:
    out = []
    gold_map = manifest.gold(spec.task)
    for variant in spec.perturbations:
        pair = inputs.perturbed.get((role, spec.task, variant))
        reference = None if pair is None else (pair.reference or clean)
        if pair is None or reference is None:
            why = inputs.unavailable.get((role, spec.task, variant), "no perturbed predictions")
            out.append(_skip(spec, role, variant, why))
            continue
        if spec.metric == "unchanged":
            value = _safe(unchanged_fraction, reference, pair.perturbed, spec.task)
            if value is None:
                out.append(_skip(spec, role, variant, "no common ids between reference and perturbed"))
            else:
                out.append(_instance(spec, role, variant, value))
            continue
        ids = [sid for sid in manifest.ids if sid in gold_map and sid in reference and sid in pair.perturbed]
        if not spec.task.is_dimensional:
            allowed = set(inputs.classes)
            ids = [sid for sid in ids if gold_map[sid].category in allowed]
        if not ids:
            out.append(_skip(spec, role, variant, "no labelled predictions"))
            continue
        gold = [_value(gold_map[sid]) for sid in ids]
        before = [_value(reference[sid]) for sid in ids]
        after = [_value(pair.perturbed[sid]) for sid in ids]
        if spec.metric == "change_ccc":
            value = concordance_corr(gold, after) - concordance_corr(gold, before)
        else:
            value = (_class_metrics(gold, after, inputs.classes).uar
                     - _class_metrics(gold, before, inputs.classes).uar)
        out.append(_instance(spec, role, variant, value))
    return out


# --- entry points -----------------------------------------------------------


def evaluate_test(spec: TestSpec, inputs: SuiteInputs) -> TestResult:
    """Evaluate one spec on every bound dataset role it names.

    Roles without a manifest contribute no instances; bound roles with
    missing inputs contribute skipped instances.
    """
    instances: list[Instance] = []
    for role in spec.datasets:
        manifest = inputs.manifests.get(role)
        if manifest is None:
            continue
        preds = inputs.predictions.get((role, spec.task))
        if spec.category == "robustness":
            instances.extend(_robustness(spec, role, manifest, preds, inputs))
        elif preds is None:
            instances.append(_skip(spec, role, "", "no predictions"))
        elif spec.category == "correctness":
            instances.extend(_correctness(spec, role, manifest, preds, inputs.classes))
        else:
            instances.extend(_fairness(spec, role, manifest, preds, inputs))
    return TestResult(spec.id, spec.test, spec.category, spec.task, spec.metric, spec.condition, tuple(instances))


def _sort_key(result: TestResult) -> tuple:
    return (CATEGORIES.index(result.category), result.spec_id)


def run_suite(inputs: SuiteInputs, specs: Sequence[TestSpec], workers: int = 1) -> list[TestResult]:
    """Evaluate every spec with at least one bound dataset.

    Results are ordered by (category, test id) and instances by dataset.
    With ``workers > 1`` specs are evaluated on a thread pool; a shared
    threshold table is then only read, so simulate missing entries first.
    """
    applicable = [s for s in specs if any(role in inputs.manifests for role in s.datasets)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: evaluate_test(s, inputs), applicable))
    else:
        results = [evaluate_test(s, inputs) for s in applicable]
    ordered = []
    for r in sorted(results, key=_sort_key):
        rank = {role: i for i, role in enumerate(sorted(set(i.dataset for i in r.instances)))}
        instances = tuple(sorted(r.instances, key=lambda i: rank[i.dataset]))
        ordered.append(TestResult(r.spec_id, r.test, r.category, r.task, r.metric, r.condition, instances))
    return ordered


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if values else None


def aggregate(results: Sequence[TestResult]) -> dict[str, Any]:
    """Pass fractions per test, per task and category, per task, overall.

    A category or task score is the unweighted mean over its tests' pass
    fractions; tests whose instances were all skipped do not count. The
    overall score is the mean of the task averages.
    """
    per_test = {r.spec_id: r.pass_fraction for r in sorted(results, key=lambda r: r.spec_id)}
    by_task: dict[str, dict[str, list[float]]] = {}
    for r in results:
        frac = r.pass_fraction
        if frac is None:
            continue
        by_task.setdefault(r.task.value, {}).setdefault(r.category, []).append(frac)
    tasks: dict[str, dict[str, float | None]] = {}
    for task in sorted({r.task.value for r in results}):
        cats = by_task.get(task, {})
        entry = {c: _mean(sorted(cats.get(c, []))) for c in CATEGORIES}
        entry["all"] = _mean(sorted(v for vals in cats.values() for v in vals))
        tasks[task] = entry
    task_means = [e["all"] for e in tasks.values() if e["all"] is not None]
    return {"tests": per_test, "tasks": tasks, "overall": _mean(sorted(task_means))}
