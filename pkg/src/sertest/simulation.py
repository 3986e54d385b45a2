"""Fairness thresholds from random-model simulations, and group balancing.

A model that draws its outputs at random has no bias towards any group,
yet with finite samples its per-group metrics still scatter around the
pooled value. The largest such deviation over many repeats is used as the
passing threshold for a fairness test with the same number of groups and
samples per group.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from sertest.core import DatasetManifest, GroupPartition, Task

logger = logging.getLogger(__name__)

KINDS = ("gaussian_truncated", "categorical_uniform", "categorical_sparse")


@dataclass(frozen=True)
class RandomModelConfig:
    kind: str = "gaussian_truncated"
    mean: float = 0.5
    std: float = 1 / 6
    n_classes: int = 4
    probabilities: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown random model kind {self.kind!r}")
        if self.std <= 0:
            raise ValueError("std must be > 0")
        if self.kind == "categorical_sparse" and self.probabilities is None:
            object.__setattr__(self, "probabilities", (0.05, 0.05, 0.3, 0.6))
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=float)
            if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                raise ValueError("class probabilities must be non-negative and sum to 1")
            object.__setattr__(self, "n_classes", len(p))

    @property
    def is_categorical(self) -> bool:
        return self.kind != "gaussian_truncated"

    @property
    def class_probabilities(self) -> np.ndarray:
        if self.probabilities is not None:
            return np.asarray(self.probabilities, dtype=float)
        return np.full(self.n_classes, 1.0 / self.n_classes)

    @classmethod
    def named(cls, kind: str) -> RandomModelConfig:
        return cls(kind=kind)


GAUSSIAN = RandomModelConfig("gaussian_truncated")
UNIFORM = RandomModelConfig("categorical_uniform")
SPARSE = RandomModelConfig("categorical_sparse")


def _rng(seed: int | Sequence[int] | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_random_predictions(config: RandomModelConfig, n: int, seed) -> np.ndarray:
    """Draw ``n`` outputs of a random model.

    Gaussian models reject draws outside [0, 1] and redraw; categorical
    models return class indices ``0..n_classes-1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    if config.is_categorical:
        return rng.choice(config.n_classes, size=n, p=config.class_probabilities)
    out = np.empty(n)
    filled = 0
    while filled < n:
        draw = rng.normal(config.mean, config.std, size=max(2 * (n - filled), 16))
        draw = draw[(draw >= 0.0) & (draw <= 1.0)]
        take = min(len(draw), n - filled)
        out[filled:filled + take] = draw[:take]
        filled += take
    return out


def n_min_bin(n: int) -> int:
    """Expected count in the lowest of four bins for N(0.5, 1/6) outputs.

    ``round(P(X <= 0.25) * n)`` with the untruncated normal CDF.
    """
    if n <= 0:
        return 0
    return int(math.floor(norm.cdf((0.25 - 0.5) / (1 / 6)) * n + 0.5))


# --- per-repeat statistics ------------------------------------------------

UNLABELLED_METRICS = ("diff_mean", "rel_diff_per_class", "rel_diff_per_bin")
LABELLED_METRICS = (
    "diff_ccc",
    "diff_uar",
    "diff_ppc",
    "diff_rpc",
    "diff_precision_per_bin",
    "diff_recall_per_bin",
)
SUPPORTED_METRICS = UNLABELLED_METRICS + LABELLED_METRICS
N_FAIRNESS_BINS = 4


def metric_needs_truth(metric: str) -> bool:
    return metric in LABELLED_METRICS


def metric_is_categorical(metric: str) -> bool:
    return metric in ("rel_diff_per_class", "diff_uar", "diff_ppc", "diff_rpc")


def _ccc_rows(t: np.ndarray, p: np.ndarray) -> np.ndarray:
    mt, mp = t.mean(axis=-1), p.mean(axis=-1)
    vt, vp = t.var(axis=-1), p.var(axis=-1)
    cov = ((t - mt[..., None]) * (p - mp[..., None])).mean(axis=-1)
    return 2 * cov / (vt + vp + (mt - mp) ** 2)


def _confusion(t: np.ndarray, p: np.ndarray, k: int) -> np.ndarray:
    """Confusion counts per group, shape (groups, truth class, predicted class)."""
    g = t.shape[0]
    idx = (np.arange(g)[:, None] * k * k + t * k + p).ravel()
    return np.bincount(idx, minlength=g * k * k).reshape(g, k, k)


def _recall_precision(conf: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    diag = np.diagonal(conf, axis1=-2, axis2=-1).astype(float)
    n_true = conf.sum(axis=-1)
    n_pred = conf.sum(axis=-2)
    with np.errstate(invalid="ignore", divide="ignore"):
        recall = np.where(n_true > 0, diag / n_true, np.nan)
        precision = np.where(n_pred > 0, diag / n_pred, np.nan)
    return recall, precision, n_true, n_pred


def _max_abs(diff: np.ndarray) -> float:
    diff = np.abs(diff)
    if np.all(np.isnan(diff)):
        return 0.0
    return float(np.nanmax(diff))


def _repeat_statistic(
    metric: str,
    n_groups: int,
    n: int,
    model: RandomModelConfig,
    truth: RandomModelConfig | None,
    rng: np.random.Generator,
) -> float:
    total = n_groups * n
    pred = sample_random_predictions(model, total, rng).reshape(n_groups, n)
    t = None
    if metric_needs_truth(metric):
        t = sample_random_predictions(truth, total, rng).reshape(n_groups, n)
    n_min = n_min_bin(n)

    if metric == "diff_mean":
        return _max_abs(pred.mean(axis=1) - pred.mean())
    if metric in ("rel_diff_per_class", "rel_diff_per_bin"):
        if metric == "rel_diff_per_bin":
            k = N_FAIRNESS_BINS
            pred = np.clip(np.floor(pred * k).astype(int), 0, k - 1)
        else:
            k = model.n_classes
        counts = np.stack([np.bincount(row, minlength=k) for row in pred])
        pool = counts.sum(axis=0)
        diff = counts / n - pool / total
        if metric == "rel_diff_per_bin":
            diff[:, pool < n_min] = np.nan
        return _max_abs(diff)
    if metric == "diff_ccc":
        return _max_abs(_ccc_rows(t, pred) - _ccc_rows(t.ravel(), pred.ravel()))

    if metric in ("diff_precision_per_bin", "diff_recall_per_bin"):
        k = N_FAIRNESS_BINS
        t = np.clip(np.floor(t * k).astype(int), 0, k - 1)
        pred = np.clip(np.floor(pred * k).astype(int), 0, k - 1)
    else:
        k = truth.n_classes
    conf = _confusion(t, pred, k)
    rec, prec, n_true, _ = _recall_precision(conf)
    prec_all = _recall_precision(conf.sum(axis=0))
    rec_pool, prec_pool, n_true_pool = prec_all[0], prec_all[1], prec_all[2]
    if metric == "diff_uar":
        return _max_abs(np.nanmean(rec, axis=1) - np.nanmean(rec_pool))
    if metric == "diff_rpc":
        return _max_abs(rec - rec_pool)
    if metric == "diff_ppc":
        return _max_abs(prec - prec_pool)
    # per-bin variants skip bins with too few true samples in group or pool
    keep = (n_true >= max(n_min, 1)) & (n_true_pool >= max(n_min, 1))[None, :]
    diff = (rec - rec_pool) if metric == "diff_recall_per_bin" else (prec - prec_pool)
    return _max_abs(np.where(keep, diff, np.nan))


def default_configs(metric: str) -> tuple[RandomModelConfig, RandomModelConfig | None]:
    """Random model (and truth) configuration matching a metric's label type."""
    if metric_is_categorical(metric):
        return UNIFORM, (UNIFORM if metric_needs_truth(metric) else None)
    return GAUSSIAN, (GAUSSIAN if metric_needs_truth(metric) else None)


def simulate_threshold(
    metric: str,
    n_groups: int,
    samples_per_group: int,
    model: RandomModelConfig | None = None,
    truth: RandomModelConfig | None = None,
    repeats: int = 1000,
    seed: int = 0,
) -> float:
    """Largest group deviation of a random model over ``repeats`` draws.

    Each repeat draws a pool of ``n_groups * samples_per_group`` outputs
    (and truths for metrics that need them), splits it into equal groups,
    and takes the maximum over groups (and classes or bins) of
    ``|metric(group) - metric(pool)|``. The result is the maximum over
    repeats. Repeat ``i`` uses its own generator seeded with
    ``(seed, i)``.
    """
    if metric not in SUPPORTED_METRICS:
        raise ValueError(f"unsupported metric {metric!r} (supported: {', '.join(SUPPORTED_METRICS)})")
    if n_groups < 1 or samples_per_group < 1 or repeats < 1:
        raise ValueError("n_groups, samples_per_group and repeats must be >= 1")
    default_model, default_truth = default_configs(metric)
    model = model or default_model
    if metric_needs_truth(metric):
        truth = truth or default_truth
    worst = 0.0
    for i in range(repeats):
        rng = np.random.default_rng([seed, i])
        worst = max(worst, _repeat_statistic(metric, n_groups, samples_per_group, model, truth, rng))
    return worst


# --- threshold tables -------------------------------------------------------

TABLE_FIELDS = ("metric", "n_groups", "samples_per_group", "model", "truth", "threshold", "repeats", "seed")


@dataclass
class ThresholdTable:
    """Simulated thresholds keyed by (metric, groups, samples, model, truth)."""

    entries: dict[tuple[str, int, int, str, str], tuple[float, int, int]] = field(default_factory=dict)

    def put(self, metric, n_groups, samples_per_group, model, truth, threshold, repeats, seed):
        key = (metric, int(n_groups), int(samples_per_group), model, truth or "")
        self.entries[key] = (float(threshold), int(repeats), int(seed))

    def get(self, metric, n_groups, samples_per_group, model, truth=""):
        entry = self.entries.get((metric, n_groups, samples_per_group, model, truth or ""))
        return None if entry is None else entry[0]

    def lookup(self, metric: str, n_groups: int, samples_per_group: int, model: str, truth: str = "") -> float | None:
        """Threshold on the table grid nearest to the actual test size.

        Group counts round up (more groups give larger deviations) and
        samples per group round down; both choices are conservative.
        """
        truth = truth or ""
        candidates = [k for k in self.entries if k[0] == metric and k[3] == model and k[4] == truth]
        groups = sorted({k[1] for k in candidates if k[1] >= n_groups})
        if not groups:
            return None
        g = groups[0]
        sizes = sorted({k[2] for k in candidates if k[1] == g and k[2] <= samples_per_group})
        if not sizes:
            return None
        return self.entries[(metric, g, sizes[-1], model, truth)][0]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TABLE_FIELDS)
        for key in sorted(self.entries):
            threshold, repeats, seed = self.entries[key]
            writer.writerow([*key, f"{threshold:.6f}", repeats, seed])
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def from_csv(cls, text: str) -> ThresholdTable:
        table = cls()
        reader = csv.DictReader(io.StringIO(text))
        missing = set(TABLE_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"threshold table lacks columns: {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                table.put(
                    row["metric"],
                    int(row["n_groups"]),
                    int(row["samples_per_group"]),
                    row["model"],
                    row["truth"],
                    float(row["threshold"]),
                    int(row["repeats"]),
                    int(row["seed"]),
                )
            except ValueError as err:
                raise ValueError(f"threshold table row {lineno}: {err}") from None
        return table

    @classmethod
    def load(cls, path: str | Path) -> ThresholdTable:
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


def shipped_table() -> ThresholdTable:
    """The precomputed grid bundled with the package (1000 repeats, seed 0)."""
    from importlib import resources

    return ThresholdTable.from_csv(resources.files("sertest").joinpath("data/thresholds.csv").read_text())


def _grid_job(args):
    metric, g, n, model, truth, repeats, seed = args
    return args, simulate_threshold(metric, g, n, model, truth, repeats, seed)


def simulate_grid(
    metrics: Iterable[str],
    groups: Iterable[int],
    samples: Iterable[int],
    repeats: int = 1000,
    seed: int = 0,
    truths: Sequence[str] | None = None,
    workers: int = 1,
    table: ThresholdTable | None = None,
) -> ThresholdTable:
    """Fill a ThresholdTable for every metric x group count x group size.

    ``truths`` selects the ground-truth distributions for categorical
    metrics that need one (default: uniform and sparse).
    """
    table = table if table is not None else ThresholdTable()
    jobs = []
    for metric in metrics:
        model, truth = default_configs(metric)
        truth_options = [truth]
        if metric_needs_truth(metric) and metric_is_categorical(metric):
            truth_options = [RandomModelConfig(k) for k in (truths or ("categorical_uniform", "categorical_sparse"))]
        for tcfg in truth_options:
            for g in groups:
                for n in samples:
                    jobs.append((metric, g, n, model, tcfg, repeats, seed))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_grid_job, jobs))
    else:
        results = [_grid_job(job) for job in jobs]
    for (metric, g, n, model, tcfg, reps, s), value in results:
        table.put(metric, g, n, model.kind, tcfg.kind if tcfg else "", value, reps, s)
    return table


# --- group balancing --------------------------------------------------------


class InsufficientSamplesError(ValueError):
    """A group is smaller than the balancing target."""


def balance_groups(
    manifest: DatasetManifest,
    partition: GroupPartition,
    task: Task,
    target_n: int = 1000,
    seed: int = 0,
) -> GroupPartition:
    """Reduce every group to ``target_n`` samples with similar gold labels.

    The smallest group is subsampled uniformly. Every other group is then
    matched to it sample by sample, in random order and without
    replacement: by the nearest gold value for dimensions, by an unused
    sample of the same class for categories (falling back to any unused
    sample when a class runs out).
    """
    gold = manifest.gold(task)
    members = {g: [sid for sid in ids if sid in gold] for g, ids in partition.groups.items()}
    if not members:
        raise ValueError("partition has no groups")
    smallest = min(members, key=lambda g: (len(members[g]), g))
    if len(members[smallest]) < target_n:
        raise InsufficientSamplesError(
            f"group {smallest!r} has {len(members[smallest])} labelled samples, need {target_n}"
        )
    rng = np.random.default_rng(seed)
    ref_ids = list(rng.choice(members[smallest], size=target_n, replace=False))
    balanced = {smallest: tuple(ref_ids)}
    order = rng.permutation(target_n)
    for name in sorted(members):
        if name == smallest:
            continue
        cands = members[name]
        if task.is_dimensional:
            values = np.array([gold[s].value for s in cands])
            used = np.zeros(len(cands), dtype=bool)
            picked = []
            for i in order:
                dist = np.abs(values - gold[ref_ids[i]].value)
                dist[used] = np.inf
                j = int(np.argmin(dist))
                used[j] = True
                picked.append(cands[j])
        else:
            pools: dict[str, list[str]] = {}
            for sid in rng.permutation(cands):
                pools.setdefault(gold[sid].category, []).append(sid)
            picked = []
            leftovers: list[str] = []
            for i in order:
                pool = pools.get(gold[ref_ids[i]].category)
                if pool:
                    picked.append(pool.pop())
                else:
                    leftovers.append(ref_ids[i])
            if leftovers:
                rest = [sid for pool in pools.values() for sid in pool]
                extra = rng.choice(len(rest), size=len(leftovers), replace=False)
                picked.extend(rest[j] for j in sorted(extra))
        balanced[name] = tuple(picked)
    return GroupPartition(
        attribute=partition.attribute,
        groups={g: balanced[g] for g in partition.groups},
        excluded=partition.excluded,
    )
