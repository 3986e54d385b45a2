"""Domain types and ingestion of manifests and prediction files.

Manifests and prediction files are line-delimited JSON. A manifest line
looks like::

    {"id": "s1", "audio_path": "audio/s1.wav", "speaker": "spk1",
     "gold": {"valence": 0.2, "categories": "anger"},
     "attrs": {"sex": "female", "mean_f0_hz": 181.5}}

An optional first line ``{"manifest": {"name": ..., "sample_rate_hz": ...}}``
sets the dataset name and nominal sample rate. A prediction line is
``{"id": "s1", "value": 0.4}`` for a dimension or
``{"id": "s1", "class": "anger"}`` for categories.
"""

from __future__ import annotations

import enum
import functools
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)


class ManifestError(ValueError):
    """Raised when a manifest or prediction file cannot be ingested."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class Task(str, enum.Enum):
    AROUSAL = "arousal"
    DOMINANCE = "dominance"
    VALENCE = "valence"
    CATEGORIES = "categories"

    @property
    def is_dimensional(self) -> bool:
        return self is not Task.CATEGORIES

    @classmethod
    def parse(cls, name: str | Task) -> Task:
        if isinstance(name, Task):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(t.value for t in cls)
            raise ValueError(f"unknown task {name!r} (valid: {valid})") from None

    def __str__(self) -> str:
        return self.value


DIMENSIONS = (Task.AROUSAL, Task.DOMINANCE, Task.VALENCE)


@functools.lru_cache(maxsize=None)
def _class_table() -> dict:
    text = resources.files("sertest").joinpath("data/classes.json").read_text()
    return json.loads(text)


def canonical_classes() -> tuple[str, ...]:
    """The standard class set shared by all categorical tests."""
    return tuple(_class_table()["canonical"])


def canonicalize_class(name: str) -> tuple[str, bool]:
    """Map a raw class name onto the standard vocabulary.

    Returns the (possibly unchanged) name and whether it is a known class.
    Unknown names are returned verbatim.
    """
    table = _class_table()
    key = name.strip().lower()
    key = table["aliases"].get(key, key)
    return key, key in table["known"]


@dataclass(frozen=True)
class Label:
    """Either a dimensional value in [0, 1] or a class name."""

    value: float | None = None
    category: str | None = None

    def __post_init__(self):
        if (self.value is None) == (self.category is None):
            raise ValueError("a label holds exactly one of value or category")
        if self.value is not None:
            v = float(self.value)
            if not math.isfinite(v) or v < 0.0 or v > 1.0:
                raise ValueError(f"value out of range [0, 1]: {self.value!r}")
            object.__setattr__(self, "value", v)
        elif not isinstance(self.category, str) or not self.category:
            raise ValueError(f"invalid class name: {self.category!r}")

    @property
    def is_dimensional(self) -> bool:
        return self.value is not None

    def to_json(self) -> float | str:
        return self.value if self.value is not None else self.category

    @classmethod
    def from_json(cls, raw: float | int | str) -> Label:
        if isinstance(raw, bool):
            raise ValueError(f"invalid label: {raw!r}")
        if isinstance(raw, (int, float)):
            return cls(value=float(raw))
        if isinstance(raw, str):
            return cls(category=raw)
        raise ValueError(f"invalid label: {raw!r}")


def _check_label_for_task(label: Label, task: Task) -> None:
    if task.is_dimensional and not label.is_dimensional:
        raise ValueError(f"task mismatch: class {label.category!r} given for {task.value}")
    if not task.is_dimensional and label.is_dimensional:
        raise ValueError(f"task mismatch: value {label.value!r} given for categories")


@dataclass(frozen=True)
class Sample:
    id: str
    audio_path: str | None = None
    speaker: str | None = None
    gold: Mapping[Task, Label] = field(default_factory=dict)
    attrs: Mapping[str, str | float] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError("sample id must be a non-empty string")
        for task, label in self.gold.items():
            _check_label_for_task(label, task)
        f0 = self.attrs.get("mean_f0_hz")
        if f0 is not None and not float(f0) > 0:
            raise ValueError(f"mean_f0_hz must be > 0, got {f0!r}")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    samples: tuple[Sample, ...]
    sample_rate_hz: int | None = None
    root: Path | None = field(default=None, compare=False)
    flagged_classes: frozenset[str] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        if not self.samples:
            raise ValueError(f"manifest {self.name!r} is empty")
        seen: set[str] = set()
        for s in self.samples:
            if s.id in seen:
                raise ValueError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    @functools.cached_property
    def by_id(self) -> dict[str, Sample]:
        return {s.id: s for s in self.samples}

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def gold(self, task: Task) -> dict[str, Label]:
        """Gold labels for ``task``, skipping samples without one."""
        return {s.id: s.gold[task] for s in self.samples if task in s.gold}

    def audio_file(self, sample: Sample | str) -> Path:
        if isinstance(sample, str):
            sample = self.by_id[sample]
        if sample.audio_path is None:
            raise ManifestError(f"sample {sample.id!r} has no audio_path", self.name)
        path = Path(sample.audio_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path


@dataclass(frozen=True)
class PredictionSet:
    """Model outputs for one task, keyed by sample id."""

    model_id: str
    task: Task
    predictions: Mapping[str, Label]

    def __post_init__(self):
        for label in self.predictions.values():
            _check_label_for_task(label, self.task)

    def __len__(self) -> int:
        return len(self.predictions)

    def __getitem__(self, sample_id: str) -> Label:
        return self.predictions[sample_id]

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self.predictions


@dataclass(frozen=True)
class BinSpec:
    """Evenly spaced bins over [0, 1]; the top bin is closed at 1."""

    n_bins: int = 4

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be >= 2")

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_bins + 1)

    def index(self, values: Sequence[float] | np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        idx = np.floor(values * self.n_bins).astype(int)
        return np.clip(idx, 0, self.n_bins - 1)


@dataclass(frozen=True)
class GroupPartition:
    attribute: str
    groups: Mapping[str, tuple[str, ...]]
    excluded: tuple[str, ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        for members in self.groups.values():
            overlap = seen.intersection(members)
            if overlap:
                raise ValueError(f"groups are not disjoint: {sorted(overlap)[:3]}")
            seen.update(members)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def sizes(self) -> dict[str, int]:
        return {name: len(ids) for name, ids in self.groups.items()}


# --- manifest ingestion -----------------------------------------------------


def _parse_lines(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise ManifestError(f"malformed line ({err.msg})", path, lineno) from None
            if not isinstance(record, dict):
                raise ManifestError("each line must be a JSON object", path, lineno)
            yield lineno, record


def _parse_gold(raw: Mapping, path: Path, lineno: int, flagged: set[str]) -> dict[Task, Label]:
    gold: dict[Task, Label] = {}
    for key, value in raw.items():
        try:
            task = Task.parse(key)
        except ValueError as err:
            raise ManifestError(str(err), path, lineno) from None
        if value is None:
            continue
        if task is Task.CATEGORIES:
            if not isinstance(value, str):
                raise ManifestError(f"categories gold must be a class name, got {value!r}", path, lineno)
            name, known = canonicalize_class(value)
            if not known:
                flagged.add(name)
            gold[task] = Label(category=name)
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ManifestError(f"{task.value} gold must be a number, got {value!r}", path, lineno)
            try:
                gold[task] = Label(value=value)
            except ValueError as err:
                raise ManifestError(f"{task.value}: {err}", path, lineno) from None
    return gold


def load_manifest(path: str | Path, classes: Sequence[str] | None = None) -> DatasetManifest:
    """Read and validate a line-delimited manifest.

    Class names are canonicalized (``joy`` becomes ``happiness``). When
    ``classes`` is given, any gold class outside it is an error; otherwise
    unknown classes are kept verbatim and listed in ``flagged_classes``.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError("manifest not found", path)
    name = path.stem
    rate = None
    samples: list[Sample] = []
    seen: dict[str, int] = {}
    flagged: set[str] = set()
    for lineno, record in _parse_lines(path):
        if "manifest" in record and "id" not in record:
            header = record["manifest"]
            name = header.get("name", name)
            rate = header.get("sample_rate_hz")
            continue
        sid = record.get("id")
        if not isinstance(sid, str) or not sid:
            raise ManifestError("missing or invalid 'id'", path, lineno)
        if sid in seen:
            raise ManifestError(f"duplicate id {sid!r} (first on line {seen[sid]})", path, lineno)
        seen[sid] = lineno
        gold = _parse_gold(record.get("gold") or {}, path, lineno, flagged)
        if classes is not None:
            cat = gold.get(Task.CATEGORIES)
            if cat is not None and cat.category not in classes:
                raise ManifestError(f"unknown class {cat.category!r}", path, lineno)
        attrs = dict(record.get("attrs") or {})
        try:
            samples.append(
                Sample(
                    id=sid,
                    audio_path=record.get("audio_path"),
                    speaker=None if record.get("speaker") is None else str(record["speaker"]),
                    gold=gold,
                    attrs=attrs,
                )
            )
        except ValueError as err:
            raise ManifestError(str(err), path, lineno) from None
    if not samples:
        raise ManifestError("manifest contains no samples", path)
    if flagged:
        logger.warning("%s: classes outside the known vocabulary: %s", path, sorted(flagged))
    return DatasetManifest(
        name=name,
        samples=tuple(samples),
        sample_rate_hz=rate,
        root=path.parent,
        flagged_classes=frozenset(flagged),
    )


def manifest_records(manifest: DatasetManifest) -> list[dict]:
    records: list[dict] = []
    header = {"name": manifest.name}
    if manifest.sample_rate_hz is not None:
        header["sample_rate_hz"] = manifest.sample_rate_hz
    records.append({"manifest": header})
    for s in manifest.samples:
        rec: dict = {"id": s.id}
        if s.audio_path is not None:
            rec["audio_path"] = s.audio_path
        if s.speaker is not None:
            rec["speaker"] = s.speaker
        if s.gold:
            rec["gold"] = {t.value: label.to_json() for t, label in s.gold.items()}
        if s.attrs:
            rec["attrs"] = dict(s.attrs)
        records.append(rec)
    return records


def dump_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        for rec in manifest_records(manifest):
            fp.write(json.dumps(rec, sort_keys=True) + "\n")


# --- prediction ingestion ---------------------------------------------------


def parse_prediction_record(record: Mapping, task: Task) -> tuple[str, Label]:
    """Turn one ``{"id", "value"|"class"}`` record into (id, Label)."""
    sid = record.get("id")
    if not isinstance(sid, str) or not sid:
        raise ValueError("missing or invalid 'id'")
    has_value = "value" in record
    has_class = "class" in record
    if has_value == has_class:
        raise ValueError("record needs exactly one of 'value' or 'class'")
    if task.is_dimensional:
        if has_class:
            raise ValueError(f"task mismatch: class given for {task.value}")
        raw = record["value"]
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ValueError(f"value must be a number, got {raw!r}")
        return sid, Label(value=float(raw))
    if has_value:
        raise ValueError("task mismatch: value given for categories")
    name, _ = canonicalize_class(str(record["class"]))
    return sid, Label(category=name)


def load_predictions(path: str | Path, task: Task | str, model_id: str | None = None) -> PredictionSet:
    path = Path(path)
    task = Task.parse(task)
    if not path.exists():
        raise ManifestError("prediction file not found", path)
    preds: dict[str, Label] = {}
    for lineno, record in _parse_lines(path):
        try:
            sid, label = parse_prediction_record(record, task)
        except ValueError as err:
            raise ManifestError(str(err), path, lineno) from None
        if sid in preds:
            raise ManifestError(f"duplicate id {sid!r}", path, lineno)
        preds[sid] = label
    if not preds:
        warnings.warn(f"{path}: prediction file is empty", stacklevel=2)
    return PredictionSet(model_id=model_id or path.stem, task=task, predictions=preds)


def dump_predictions(predictions: PredictionSet, path: str | Path) -> None:
    key = "value" if predictions.task.is_dimensional else "class"
    with open(path, "w", encoding="utf-8") as fp:
        for sid in sorted(predictions.predictions):
            fp.write(json.dumps({"id": sid, key: predictions[sid].to_json()}) + "\n")


# --- grouping ---------------------------------------------------------------

PITCH_F0_RANGE_HZ = (50.0, 350.0)


def pitch_group_assign(mean_f0_hz: float) -> str | None:
    """Pitch group of a speaker given the average F0 in Hz.

    Values outside 50-350 Hz are treated as estimation outliers and get no
    group (``None``).
    """
    lo, hi = PITCH_F0_RANGE_HZ
    if not lo <= mean_f0_hz <= hi:
        return None
    if mean_f0_hz <= 145.0:
        return "low"
    if mean_f0_hz <= 190.0:
        return "medium"
    return "high"


def _partition_by_pitch(manifest: DatasetManifest, min_speaker_samples: int) -> GroupPartition:
    lo, hi = PITCH_F0_RANGE_HZ
    valid: dict[str | None, list[Sample]] = {}
    excluded: list[str] = []
    for s in manifest.samples:
        f0 = s.attrs.get("mean_f0_hz")
        if f0 is None or not lo <= float(f0) <= hi:
            excluded.append(s.id)
            continue
        valid.setdefault(s.speaker, []).append(s)
    if not valid and len(excluded) == len(manifest):
        raise ValueError("attribute 'mean_f0_hz' is absent or out of range for all samples")
    groups: dict[str, list[str]] = {}
    for speaker, members in valid.items():
        if speaker is None:
            # no speaker annotation: assign per sample
            for s in members:
                groups.setdefault(pitch_group_assign(float(s.attrs["mean_f0_hz"])), []).append(s.id)
            continue
        if len(members) < min_speaker_samples:
            excluded.extend(s.id for s in members)
            continue
        avg = float(np.mean([float(s.attrs["mean_f0_hz"]) for s in members]))
        groups.setdefault(pitch_group_assign(avg), []).extend(s.id for s in members)
    order = [g for g in ("low", "medium", "high") if g in groups]
    return GroupPartition(
        attribute="pitch",
        groups={g: tuple(groups[g]) for g in order},
        excluded=tuple(excluded),
    )


def partition_by_attribute(
    manifest: DatasetManifest,
    attribute: str,
    min_speaker_samples: int = 25,
) -> GroupPartition:
    """Split a manifest into disjoint groups by an attribute value.

    ``pitch`` (or ``mean_f0_hz``) groups speakers into low/medium/high by
    their average F0; speakers with fewer than ``min_speaker_samples``
    usable samples are excluded. ``speaker`` groups by speaker id. Any
    other attribute is read from ``Sample.attrs``.
    """
    if attribute in ("pitch", "mean_f0_hz"):
        return _partition_by_pitch(manifest, min_speaker_samples)
    groups: dict[str, list[str]] = {}
    excluded: list[str] = []
    for s in manifest.samples:
        value = s.speaker if attribute == "speaker" else s.attrs.get(attribute)
        if value is None:
            excluded.append(s.id)
        else:
            groups.setdefault(str(value), []).append(s.id)
    if not groups:
        raise ValueError(f"attribute {attribute!r} is absent from all samples of {manifest.name!r}")
    return GroupPartition(
        attribute=attribute,
        groups={g: tuple(groups[g]) for g in sorted(groups)},
        excluded=tuple(excluded),
    )
