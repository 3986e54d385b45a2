"""Numeric metric kernels.

All moments are population (biased) moments. Functions take plain
sequences or arrays and return floats or small result records.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from sertest.core import BinSpec, Label, PredictionSet, Task

UNCHANGED_TOLERANCE = 0.05


class UndefinedMetricError(ValueError):
    """The metric has no value for the given input (e.g. zero variance)."""


def _pair(truth, pred, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if len(t) < min_len:
        raise ValueError(f"need at least {min_len} values, got {len(t)}")
    return t, p


def concordance_corr(truth, pred) -> float:
    """Concordance correlation coefficient.

    Both-constant inputs return 1.0 when equal and 0.0 otherwise.
    """
    t, p = _pair(truth, pred, 2)
    mt, mp = t.mean(), p.mean()
    vt, vp = t.var(), p.var()
    cov = np.mean((t - mt) * (p - mp))
    denom = vt + vp + (mt - mp) ** 2
    if denom == 0:
        return 1.0
    return float(2 * cov / denom)


def pearson_corr(truth, pred) -> float:
    t, p = _pair(truth, pred, 2)
    dt = t - t.mean()
    dp = p - p.mean()
    vt = np.mean(dt * dt)
    vp = np.mean(dp * dp)
    if vt == 0 or vp == 0:
        raise UndefinedMetricError("Pearson correlation undefined for zero variance")
    r = np.mean(dt * dp) / np.sqrt(vt * vp)
    return float(np.clip(r, -1.0, 1.0))


def mean_absolute_error(truth, pred) -> float:
    t, p = _pair(truth, pred, 1)
    return float(np.mean(np.abs(t - p)))


def spearman_rho(a, b) -> float:
    """Pearson correlation of fractional ranks (ties get the average rank)."""
    x, y = _pair(a, b, 2)
    return pearson_corr(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class ClassMetrics:
    recall_per_class: dict[Hashable, float]
    precision_per_class: dict[Hashable, float]
    uar: float
    uap: float


def class_metrics(truth: Sequence, pred: Sequence, classes: Sequence) -> ClassMetrics:
    """Per-class recall/precision and their unweighted averages.

    Recall is only defined for classes present in ``truth`` and precision
    only for classes that were predicted; undefined entries are left out of
    the dictionaries and of the averages.
    """
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} vs {len(pred)}")
    if len(truth) == 0:
        raise ValueError("need at least one sample")
    allowed = set(classes)
    for label in list(truth) + list(pred):
        if label not in allowed:
            raise ValueError(f"unknown label {label!r}")
    t = np.asarray(truth, dtype=object)
    p = np.asarray(pred, dtype=object)
    recall: dict = {}
    precision: dict = {}
    for c in classes:
        in_truth = t == c
        in_pred = p == c
        hits = int(np.sum(in_truth & in_pred))
        if in_truth.any():
            recall[c] = hits / int(in_truth.sum())
        if in_pred.any():
            precision[c] = hits / int(in_pred.sum())
    uar = float(np.mean(list(recall.values())))
    uap = float(np.mean(list(precision.values()))) if precision else 0.0
    return ClassMetrics(recall, precision, uar, uap)


def bin_values(values, spec: BinSpec) -> np.ndarray:
    """Histogram counts over the bins of ``spec``; 1.0 falls in the top bin."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.zeros(spec.n_bins, dtype=int)
    return np.bincount(spec.index(values), minlength=spec.n_bins)


def _entropy_term(p: np.ndarray, m: np.ndarray) -> float:
    mask = p > 0
    return float(np.sum(p[mask] * np.log2(p[mask] / m[mask])))


def jensen_shannon_distance(truth, pred, spec: BinSpec = BinSpec(10)) -> float:
    """Square root of the base-2 Jensen-Shannon divergence of binned values."""
    t = np.asarray(truth, dtype=float)
    p = np.asarray(pred, dtype=float)
    if t.size == 0 or p.size == 0:
        raise ValueError("Jensen-Shannon distance needs non-empty inputs")
    ht = bin_values(t, spec) / t.size
    hp = bin_values(p, spec) / p.size
    m = 0.5 * (ht + hp)
    jsd = 0.5 * _entropy_term(ht, m) + 0.5 * _entropy_term(hp, m)
    return float(np.sqrt(max(jsd, 0.0)))


@dataclass(frozen=True)
class DisparityReport:
    mode: str
    values: dict[Hashable, float]
    skipped: frozenset = field(default_factory=frozenset)


DISPARITY_MODES = ("diff_mean", "rel_diff_per_class", "rel_diff_per_bin")


def _proportions(labels: Sequence, keys: Sequence) -> dict:
    counts = Counter(labels)
    n = len(labels)
    return {k: counts.get(k, 0) / n for k in keys}


def group_disparity(
    group_preds: Sequence,
    reference_preds: Sequence,
    mode: str,
    spec: BinSpec | None = None,
    n_min: int | None = None,
    classes: Sequence | None = None,
) -> DisparityReport:
    """Difference of a group's prediction distribution to a reference pool.

    ``group_preds`` and ``reference_preds`` hold floats (or ``Label``) for
    ``diff_mean`` and ``rel_diff_per_bin``, class names for
    ``rel_diff_per_class``. Per-bin mode skips bins whose reference count is
    below ``n_min``.
    """
    g = [x.to_json() if isinstance(x, Label) else x for x in group_preds]
    r = [x.to_json() if isinstance(x, Label) else x for x in reference_preds]
    if not g or not r:
        raise ValueError("group_disparity needs non-empty group and reference")
    if mode == "diff_mean":
        return DisparityReport(mode, {"mean": float(np.mean(g) - np.mean(r))})
    if mode == "rel_diff_per_class":
        keys = list(classes) if classes is not None else sorted(set(g) | set(r))
        pg, pr = _proportions(g, keys), _proportions(r, keys)
        return DisparityReport(mode, {k: pg[k] - pr[k] for k in keys})
    if mode == "rel_diff_per_bin":
        if spec is None:
            raise ValueError("rel_diff_per_bin needs a BinSpec")
        cg = bin_values(g, spec)
        cr = bin_values(r, spec)
        values = {}
        skipped = set()
        for b in range(spec.n_bins):
            if n_min is not None and cr[b] < n_min:
                skipped.add(b)
                continue
            values[b] = float(cg[b] / len(g) - cr[b] / len(r))
        return DisparityReport(mode, values, frozenset(skipped))
    raise ValueError(f"unknown disparity mode {mode!r}")


@dataclass(frozen=True)
class BinnedClassMetrics:
    recall_per_bin: dict[int, float | None]
    precision_per_bin: dict[int, float | None]
    skipped_bins: frozenset[int]


def binned_class_metrics(truth, pred, spec: BinSpec = BinSpec(4), n_min: int = 0) -> BinnedClassMetrics:
    """Per-bin recall and precision, treating bin indices as classes.

    Bins whose truth count is below ``n_min`` are skipped. Precision of a
    kept bin that received no prediction is ``None``.
    """
    t, p = _pair(truth, pred, 1)
    tb = spec.index(t)
    pb = spec.index(p)
    recall: dict[int, float | None] = {}
    precision: dict[int, float | None] = {}
    skipped = set()
    for b in range(spec.n_bins):
        n_true = int(np.sum(tb == b))
        if n_true < n_min or n_true == 0:
            skipped.add(b)
            continue
        hits = int(np.sum((tb == b) & (pb == b)))
        n_pred = int(np.sum(pb == b))
        recall[b] = hits / n_true
        precision[b] = hits / n_pred if n_pred else None
    return BinnedClassMetrics(recall, precision, frozenset(skipped))


def unchanged_fraction(clean: PredictionSet, perturbed: PredictionSet, task: Task | None = None) -> float:
    """Share of predictions that survive a perturbation.

    Classes must be identical; dimensional values must differ by strictly
    less than 0.05. Only ids present in both sets are compared.
    """
    task = task or clean.task
    common = [sid for sid in clean.predictions if sid in perturbed.predictions]
    if not common:
        raise UndefinedMetricError("no common ids between clean and perturbed predictions")
    if task.is_dimensional:
        a = np.array([clean[s].value for s in common])
        b = np.array([perturbed[s].value for s in common])
        return float(np.mean(np.abs(a - b) < UNCHANGED_TOLERANCE))
    same = [clean[s].category == perturbed[s].category for s in common]
    return float(np.mean(same))


def in_range_fraction(preds, value_range: tuple[float, float]) -> float:
    x = np.asarray(preds, dtype=float)
    if x.size == 0:
        raise UndefinedMetricError("no predictions to check")
    lo, hi = value_range
    return float(np.mean((x >= lo) & (x <= hi)))


@dataclass(frozen=True)
class SpeakerStats:
    values: dict[str, float | dict[str, float]]
    excluded: tuple[str, ...]


def speaker_stats(
    speakers: Mapping[str, str],
    labels: Mapping[str, Label],
    task: Task,
    min_samples: int = 10,
    min_per_class: int = 8,
    basis: Mapping[str, Label] | None = None,
    classes: Sequence[str] | None = None,
) -> SpeakerStats:
    """Average prediction (or class proportions) per speaker.

    ``speakers`` maps sample id to speaker. For dimensions a speaker
    qualifies with at least ``min_samples`` labelled samples and gets the
    mean value. For categories the proportion of each class is reported
    only for classes the speaker has at least ``min_per_class`` samples of
    in ``basis`` (usually the gold labels; defaults to ``labels``).
    """
    basis = labels if basis is None else basis
    per_speaker: dict[str, list[str]] = {}
    for sid, spk in speakers.items():
        if sid in labels and sid in basis:
            per_speaker.setdefault(spk, []).append(sid)
    values: dict = {}
    excluded = []
    for spk in sorted(per_speaker):
        ids = per_speaker[spk]
        if task.is_dimensional:
            if len(ids) < min_samples:
                excluded.append(spk)
                continue
            values[spk] = float(np.mean([labels[s].value for s in ids]))
            continue
        basis_counts = Counter(basis[s].category for s in ids)
        keys = classes if classes is not None else sorted(basis_counts)
        qualifying = [c for c in keys if basis_counts.get(c, 0) >= min_per_class]
        if not qualifying:
            excluded.append(spk)
            continue
        counts = Counter(labels[s].category for s in ids)
        values[spk] = {c: counts.get(c, 0) / len(ids) for c in qualifying}
    return SpeakerStats(values, tuple(excluded))


def class_proportion_mae(truth_props: Mapping[str, Mapping[str, float]], pred_props: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    """Per class, MAE across speakers between true and predicted proportions.

    Only (speaker, class) pairs present in both mappings are used.
    """
    diffs: dict[str, list[float]] = {}
    for spk, tp in truth_props.items():
        pp = pred_props.get(spk)
        if pp is None:
            continue
        for c, v in tp.items():
            if c in pp:
                diffs.setdefault(c, []).append(abs(v - pp[c]))
    return {c: float(np.mean(d)) for c, d in sorted(diffs.items())}


def _shift_values(preds: Sequence, task: Task, spec: BinSpec, keys: Sequence) -> dict:
    """Distribution summary used by the shift scores: proportions or mean."""
    if task.is_dimensional:
        values = [x.value if isinstance(x, Label) else float(x) for x in preds]
        counts = bin_values(values, spec)
        out = {b: counts[b] / len(values) for b in range(spec.n_bins)}
        out["mean"] = float(np.mean(values))
        return out
    labels = [x.category if isinstance(x, Label) else x for x in preds]
    return _proportions(labels, keys)


def sentiment_shift_scores(
    preds_by_language_and_sentiment: Mapping[tuple[str, str], Sequence],
    preds_by_language: Mapping[str, Sequence],
    task: Task,
    spec: BinSpec = BinSpec(4),
    n_min: int = 0,
    classes: Sequence[str] | None = None,
) -> tuple[dict[tuple[str, str, Hashable], float], frozenset]:
    """Language-relative shift scores for sentiment-filtered predictions.

    The shift of a (language, sentiment) cell is the change of a class or bin
    proportion (or of the mean) relative to all samples of that language.
    The score subtracts the average shift of that sentiment across
    languages. Returns the scores and the set of skipped bins; a bin is
    skipped when the pooled count over all languages is below ``n_min``.
    """
    languages = sorted(preds_by_language)
    if len(languages) < 2:
        raise ValueError("sentiment shift scores need at least two languages")
    if task.is_dimensional:
        keys: list = list(range(spec.n_bins))
        pooled = [x.value if isinstance(x, Label) else float(x) for lang in languages for x in preds_by_language[lang]]
        counts = bin_values(pooled, spec)
        skipped = frozenset(b for b in keys if counts[b] < n_min)
        keys = [b for b in keys if b not in skipped] + ["mean"]
    else:
        if classes is None:
            classes = sorted({x.category if isinstance(x, Label) else x for lang in languages for x in preds_by_language[lang]})
        keys = list(classes)
        skipped = frozenset()
    base = {lang: _shift_values(preds_by_language[lang], task, spec, keys) for lang in languages}
    sentiments = sorted({s for (_, s) in preds_by_language_and_sentiment})
    scores: dict = {}
    for sent in sentiments:
        shifts = {}
        for lang in languages:
            cell = preds_by_language_and_sentiment.get((lang, sent))
            if not cell:
                raise ValueError(f"empty cell for language {lang!r}, sentiment {sent!r}")
            vals = _shift_values(cell, task, spec, keys)
            shifts[lang] = {k: vals[k] - base[lang][k] for k in keys}
        for k in keys:
            avg = float(np.mean([shifts[lang][k] for lang in languages]))
            for lang in languages:
                scores[(lang, sent, k)] = float(shifts[lang][k] - avg)
    return scores, skipped
