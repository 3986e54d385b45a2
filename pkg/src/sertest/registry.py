"""Test registry: which metric is checked on which datasets, and how.

The default registry lives in ``data/registry.csv``. Each row names a test,
its category, the task family (``categories`` and/or ``dimensions``), a
metric id, a comparison and a threshold. ``dimensions`` rows expand into one
:class:`TestSpec` per dimension. Dataset names are roles that are bound to
user manifests at run time.

Robustness rows refer to perturbation variants by name; the variants are
defined in ``data/perturbations.json``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .core import DIMENSIONS, Task, pitch_group_assign  # noqa: F401  (re-exported)
from .perturb import PerturbationError, PerturbationSpec

CATEGORIES = ("correctness", "fairness", "robustness")
COMPARISONS = ("greater", "less", "abs_less", "abs_greater")
REGISTRY_FIELDS = (
    "test",
    "category",
    "tasks",
    "metric",
    "label",
    "comparison",
    "threshold",
    "n_bin",
    "datasets",
    "grouping",
    "perturbations",
    "balance_n",
)

CORRECTNESS_METRICS = (
    "ppc",
    "rpc",
    "uap",
    "uar",
    "in_expected_range",
    "rel_diff_per_class",
    "jsd",
    "ccc",
    "mae",
    "pcc",
    "class_proportion_mae",
    "speaker_mae",
    "spearman",
)
FAIRNESS_METRICS = (
    "diff_mean",
    "rel_diff_per_class",
    "rel_diff_per_bin",
    "diff_ccc",
    "diff_uar",
    "diff_ppc",
    "diff_rpc",
    "diff_precision_per_bin",
    "diff_recall_per_bin",
    "class_proportion_shift",
    "bin_proportion_shift",
    "mean_shift",
)
ROBUSTNESS_METRICS = ("change_ccc", "change_uar", "unchanged")
METRICS = {
    "correctness": CORRECTNESS_METRICS,
    "fairness": FAIRNESS_METRICS,
    "robustness": ROBUSTNESS_METRICS,
}
CATEGORICAL_ONLY = {"ppc", "rpc", "uap", "uar", "class_proportion_mae", "diff_uar", "diff_ppc", "diff_rpc",
                    "change_uar", "class_proportion_shift"}
DIMENSIONAL_ONLY = {"in_expected_range", "jsd", "ccc", "mae", "pcc", "speaker_mae", "diff_mean",
                    "rel_diff_per_bin", "diff_ccc", "diff_precision_per_bin", "diff_recall_per_bin",
                    "change_ccc", "bin_proportion_shift", "mean_shift"}
# error-like metrics must be compared with an upper bound
LOWER_IS_BETTER = {"mae", "jsd", "class_proportion_mae", "speaker_mae"}


class RegistryError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


@dataclass(frozen=True)
class Prerequisites:
    """Data requirements checked before a test instance is evaluated."""

    min_speakers: int = 6
    min_samples_per_speaker: int = 10
    min_samples_per_class: int = 8
    min_pitch_speaker_samples: int = 25


@dataclass(frozen=True)
class TestSpec:
    """One registry entry for a single task.

    ``n_bin`` is the minimum reference count below which an output bin is
    skipped. ``perturbations`` names variants from the perturbation table.
    """

    __test__ = False  # not a pytest test class

    id: str
    test: str
    category: str
    task: Task
    metric: str
    label: str
    comparison: str
    threshold: float
    datasets: tuple[str, ...]
    n_bin: int | None = None
    grouping: str | None = None
    perturbations: tuple[str, ...] = ()
    balance_n: int | None = None
    prerequisites: Prerequisites = field(default_factory=Prerequisites)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.comparison not in COMPARISONS:
            raise ValueError(f"unknown comparison {self.comparison!r} (valid: {', '.join(COMPARISONS)})")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.metric not in METRICS[self.category]:
            raise ValueError(f"metric {self.metric!r} is not a {self.category} metric")
        if self.metric in CATEGORICAL_ONLY and self.task.is_dimensional:
            raise ValueError(f"metric {self.metric!r} applies to categories only")
        if self.metric in DIMENSIONAL_ONLY and not self.task.is_dimensional:
            raise ValueError(f"metric {self.metric!r} applies to dimensions only")
        if self.metric in LOWER_IS_BETTER and self.comparison != "less":
            raise ValueError(f"metric {self.metric!r} needs comparison 'less'")
        if self.category == "fairness" and self.comparison != "abs_less":
            raise ValueError("fairness disparities are compared with 'abs_less'")
        if self.category == "fairness" and not self.grouping:
            raise ValueError("fairness tests need a grouping attribute")
        if self.category == "robustness" and not self.perturbations:
            raise ValueError("robustness tests need at least one perturbation")
        if not self.datasets:
            raise ValueError("at least one dataset role is required")

    @property
    def condition(self) -> str:
        """Human-readable pass condition, e.g. ``CCC > 0.5``."""
        thr = _format_number(self.threshold)
        if self.comparison == "greater":
            return f"{self.label} > {thr}"
        if self.comparison == "less":
            return f"{self.label} < {thr}"
        if self.comparison == "abs_less":
            return f"|{self.label}| < {thr}"
        return f"|{self.label}| > {thr}"

    def passes(self, value: float, threshold: float | None = None) -> bool:
        thr = self.threshold if threshold is None else threshold
        return compare(value, self.comparison, thr)


def compare(value: float, comparison: str, threshold: float) -> bool:
    if comparison == "greater":
        return value > threshold
    if comparison == "less":
        return value < threshold
    if comparison == "abs_less":
        return abs(value) < threshold
    if comparison == "abs_greater":
        return abs(value) > threshold
    raise ValueError(f"unknown comparison {comparison!r}")


def _format_number(x: float) -> str:
    return f"{x:g}"


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def _split(cell: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in cell.split(";") if part.strip())


def _optional_int(cell: str, name: str, row: int) -> int | None:
    if not cell.strip():
        return None
    try:
        value = int(cell)
    except ValueError:
        raise RegistryError(f"{name} must be an integer, got {cell!r}", row) from None
    if value < 0:
        raise RegistryError(f"{name} must be >= 0", row)
    return value


def _tasks(cell: str, row: int) -> list[Task]:
    tasks: list[Task] = []
    for part in _split(cell):
        if part == "dimensions":
            tasks.extend(DIMENSIONS)
        else:
            try:
                tasks.append(Task.parse(part))
            except ValueError as exc:
                raise RegistryError(str(exc), row) from None
    if not tasks:
        raise RegistryError("no task given", row)
    return tasks


def default_registry_text() -> str:
    return resources.files("sertest").joinpath("data/registry.csv").read_text()


def parse_registry(text: str) -> list[TestSpec]:
    """Parse registry CSV text; rows are numbered from 1 after the header."""
    reader = csv.DictReader(io.StringIO(text))
    missing = [f for f in REGISTRY_FIELDS if f not in (reader.fieldnames or ())]
    if missing:
        raise RegistryError(f"missing columns: {', '.join(missing)}", 0)
    specs: list[TestSpec] = []
    seen: set[str] = set()
    for row_no, row in enumerate(reader, start=1):
        if None in row or any(v is None for v in row.values()):
            raise RegistryError("wrong number of fields", row_no)
        try:
            threshold = float(row["threshold"])
        except ValueError:
            raise RegistryError(f"threshold must be a number, got {row['threshold']!r}", row_no) from None
        for task in _tasks(row["tasks"], row_no):
            spec_id = f"{_slug(row['test'])}/{row['metric'].strip()}/{task.value}"
            if spec_id in seen:
                raise RegistryError(f"duplicate test {spec_id!r}", row_no)
            seen.add(spec_id)
            try:
                spec = TestSpec(
                    id=spec_id,
                    test=row["test"].strip(),
                    category=row["category"].strip(),
                    task=task,
                    metric=row["metric"].strip(),
                    label=row["label"].strip(),
                    comparison=row["comparison"].strip(),
                    threshold=threshold,
                    datasets=_split(row["datasets"]),
                    n_bin=_optional_int(row["n_bin"], "n_bin", row_no),
                    grouping=row["grouping"].strip() or None,
                    perturbations=_split(row["perturbations"]),
                    balance_n=_optional_int(row["balance_n"], "balance_n", row_no),
                )
            except ValueError as exc:
                if isinstance(exc, RegistryError):
                    raise
                raise RegistryError(str(exc), row_no) from None
            specs.append(spec)
    return specs


def load_registry(path: str | Path | None = None) -> list[TestSpec]:
    """Load a registry file, or the shipped default when ``path`` is None."""
    text = default_registry_text() if path is None else Path(path).read_text(encoding="utf-8")
    return parse_registry(text)


def lookup(specs: Sequence[TestSpec], test: str, task: Task | str, label: str) -> TestSpec:
    """Find a spec by test name, task (or ``dimensions``) and metric label."""
    wanted = "dimensions" if task == "dimensions" else Task.parse(task)
    for spec in specs:
        task_ok = spec.task.is_dimensional if wanted == "dimensions" else spec.task is wanted
        if spec.test == test and task_ok and spec.label == label:
            return spec
    raise KeyError(f"no test {test!r} / {task} / {label!r}")


# --- consistency ranges -----------------------------------------------------

RANGES = {"low": (0.0, 0.45), "neutral": (0.3, 0.6), "high": (0.55, 1.0)}

# category -> (valence, arousal, dominance) range names; None means no constraint
_CORRESPONDENCE = {
    "anger": ("low", "high", "high"),
    "boredom": ("neutral", "low", None),
    "disgust": ("low", None, None),
    "fear": ("low", "high", "low"),
    "frustration": ("low", None, None),
    "happiness": ("high", None, "neutral"),
    "neutral": ("neutral", "neutral", "neutral"),
    "sadness": ("low", "low", "low"),
    "surprise": (None, "high", "neutral"),
}
_DIM_COLUMN = {Task.VALENCE: 0, Task.AROUSAL: 1, Task.DOMINANCE: 2}


def expected_range(category: str, dimension: Task | str) -> tuple[float, float] | None:
    """Range a dimensional prediction should fall in for a gold class."""
    dimension = Task.parse(dimension)
    if not dimension.is_dimensional:
        raise ValueError("expected_range needs a dimension")
    row = _CORRESPONDENCE.get(category)
    if row is None:
        return None
    name = row[_DIM_COLUMN[dimension]]
    return None if name is None else RANGES[name]


# --- perturbation variants --------------------------------------------------


@dataclass(frozen=True)
class Variant:
    """A named robustness condition.

    Either a synthetic ``perturbation`` (optionally compared against a
    ``reference`` perturbation instead of the clean audio) or a
    ``recorded`` dataset role holding re-recorded versions of the audio.
    """

    name: str
    perturbation: PerturbationSpec | None = None
    reference: PerturbationSpec | None = None
    recorded: str | None = None

    def with_seed(self, seed: int) -> Variant:
        def reseed(p):
            return None if p is None else PerturbationSpec(p.kind, p.params, seed)

        return Variant(self.name, reseed(self.perturbation), reseed(self.reference), self.recorded)


def default_variants_text() -> str:
    return resources.files("sertest").joinpath("data/perturbations.json").read_text()


def parse_variants(text: str) -> dict[str, Variant]:
    raw = json.loads(text)
    variants: dict[str, Variant] = {}
    for name, entry in raw.items():
        try:
            if "recorded" in entry:
                variants[name] = Variant(name, recorded=str(entry["recorded"]))
                continue
            ref = entry.get("reference")
            variants[name] = Variant(
                name,
                perturbation=PerturbationSpec(entry["kind"], entry.get("params", {})),
                reference=None if ref is None else PerturbationSpec(ref["kind"], ref.get("params", {})),
            )
        except (KeyError, TypeError, PerturbationError) as exc:
            raise RegistryError(f"perturbation variant {name!r}: {exc}") from None
    return variants


def load_variants(path: str | Path | None = None) -> dict[str, Variant]:
    text = default_variants_text() if path is None else Path(path).read_text(encoding="utf-8")
    return parse_variants(text)


def check_variants(specs: Sequence[TestSpec], variants: Mapping[str, Variant]) -> None:
    for spec in specs:
        unknown = [v for v in spec.perturbations if v not in variants]
        if unknown:
            raise RegistryError(f"{spec.id}: unknown perturbation variants {unknown}")


def registry_hash(registry_text: str | None = None, variants_text: str | None = None) -> str:
    """sha256 over the registry and variant table, identifying a test setup."""
    h = hashlib.sha256()
    h.update((registry_text if registry_text is not None else default_registry_text()).encode())
    h.update(b"\0")
    h.update((variants_text if variants_text is not None else default_variants_text()).encode())
    return h.hexdigest()
