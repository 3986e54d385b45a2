"""Black-box access to the model under test.

Subprocess protocol
-------------------
The model command is started once per batch. It receives the audio file
paths on standard input, one absolute path per line (UTF-8, ``\\n``
terminated), and must write one JSON object per line to standard output::

    {"id": "<path as received>", "value": 0.42}       # dimensional task
    {"id": "<path as received>", "class": "anger"}    # categories

and exit with status 0. Lines that are empty are ignored; any other line
that is not such a record is an error, as are a nonzero exit status, a
timeout and missing ids. The command string may contain ``{task}``, which
is replaced by the task name. Standard error is captured and included in
error messages.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shlex
import subprocess
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .core import DatasetManifest, Label, ManifestError, PredictionSet, Task, dump_predictions, load_predictions, \
    parse_prediction_record
from .perturb import PerturbationError, PerturbationSpec, apply_perturbation, read_wav, write_wav

logger = logging.getLogger(__name__)

COMPLETE_MARKER = ".complete"


class AdapterError(RuntimeError):
    pass


def _as_mapping(audio: Mapping[str, str | Path] | Sequence[str | Path]) -> dict[str, str]:
    """Sample id -> absolute path; a plain list uses each path as its own id."""
    if isinstance(audio, Mapping):
        return {sid: str(Path(path).resolve()) for sid, path in audio.items()}
    return {str(p): str(Path(p).resolve()) for p in audio}


@dataclass
class SubprocessAdapter:
    """Runs a shell-free command template that answers one task.

    Args:
        command: program and arguments, split with shell rules; ``{task}``
            is substituted.
        task: the task the command answers.
        model_id: name recorded in prediction sets and cache keys.
        batch_size: paths per invocation; 0 sends everything at once.
        timeout: seconds per invocation, or None.
        workers: maximum number of concurrent invocations.
    """

    command: str
    task: Task
    model_id: str = "model"
    batch_size: int = 0
    timeout: float | None = None
    workers: int = 1
    kind: str = field(default="subprocess", init=False)

    def __post_init__(self):
        self.task = Task.parse(self.task)
        if not shlex.split(self.command):
            raise AdapterError("empty model command")

    def _argv(self) -> list[str]:
        return [part.replace("{task}", self.task.value) for part in shlex.split(self.command)]

    def _run_batch(self, paths: list[str]) -> dict[str, Label]:
        payload = "".join(p + "\n" for p in paths)
        try:
            proc = subprocess.run(
                self._argv(), input=payload, capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired:
            raise AdapterError(f"model command timed out after {self.timeout} s") from None
        except OSError as exc:
            raise AdapterError(f"cannot start model command: {exc}") from None
        if proc.returncode != 0:
            raise AdapterError(
                f"model command exited with status {proc.returncode}; stderr: {proc.stderr.strip()[-2000:]}"
            )
        out: dict[str, Label] = {}
        for lineno, line in enumerate(proc.stdout.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("not a JSON object")
                sid, label = parse_prediction_record(record, self.task)
            except (ValueError, ManifestError) as exc:
                raise AdapterError(f"malformed model output line {lineno}: {line[:200]!r} ({exc})") from None
            out[sid] = label
        missing = [p for p in paths if p not in out]
        if missing:
            shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
            raise AdapterError(f"model output is missing {len(missing)} of {len(paths)} ids: {shown}")
        return out

    def predict(self, audio: Mapping[str, str | Path] | Sequence[str | Path]) -> PredictionSet:
        mapping = _as_mapping(audio)
        by_path: dict[str, list[str]] = {}
        for sid, path in mapping.items():
            by_path.setdefault(path, []).append(sid)
        paths = list(by_path)
        size = self.batch_size or max(len(paths), 1)
        batches = [paths[i: i + size] for i in range(0, len(paths), size)]
        if self.workers > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(self._run_batch, batches))
        else:
            parts = [self._run_batch(b) for b in batches]
        labels: dict[str, Label] = {}
        for part in parts:
            for path, label in part.items():
                for sid in by_path.get(path, ()):
                    labels[sid] = label
        return PredictionSet(self.model_id, self.task, {sid: labels[sid] for sid in mapping})


@dataclass
class PredictionFileAdapter:
    """Serves precomputed predictions; audio is looked up by sample id."""

    predictions: PredictionSet
    kind: str = field(default="prediction_files", init=False)

    @property
    def task(self) -> Task:
        return self.predictions.task

    @property
    def model_id(self) -> str:
        return self.predictions.model_id

    @classmethod
    def from_file(cls, path: str | Path, task: Task | str, model_id: str | None = None) -> PredictionFileAdapter:
        return cls(load_predictions(path, task, model_id))

    def predict(self, audio: Mapping[str, str | Path] | Sequence[str | Path]) -> PredictionSet:
        ids = list(_as_mapping(audio))
        missing = [sid for sid in ids if sid not in self.predictions]
        if missing:
            raise AdapterError(f"prediction file has no entry for {len(missing)} ids: {', '.join(missing[:5])}")
        return PredictionSet(self.model_id, self.task, {sid: self.predictions[sid] for sid in ids})


def predict(adapter, audio_paths, task: Task | str) -> PredictionSet:
    """Predictions of ``adapter`` for ``audio_paths`` (a list or id -> path map)."""
    task = Task.parse(task)
    if adapter.task is not task:
        raise AdapterError(f"adapter answers {adapter.task.value}, not {task.value}")
    return adapter.predict(audio_paths)


# --- caching ----------------------------------------------------------------


def _safe_name(text: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", text).strip("._") or "x"
    return f"{cleaned[:80]}-{zlib.crc32(text.encode()):08x}"


class PredictionCache:
    """Predictions on disk keyed by (model, dataset, fingerprint, task).

    Reads may happen concurrently; writes go through a lock and an atomic
    rename, so readers never see partial files.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()

    def path(self, model_id: str, dataset: str, fingerprint: str, task: Task) -> Path:
        return self.root / _safe_name(model_id) / _safe_name(dataset) / fingerprint / f"{task.value}.jsonl"

    def get(self, model_id: str, dataset: str, fingerprint: str, task: Task) -> PredictionSet | None:
        path = self.path(model_id, dataset, fingerprint, task)
        if not path.exists():
            return None
        return load_predictions(path, task, model_id)

    def put(self, predictions: PredictionSet, dataset: str, fingerprint: str) -> Path:
        path = self.path(predictions.model_id, dataset, fingerprint, predictions.task)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".tmp{os.getpid()}")
            dump_predictions(predictions, tmp)
            os.replace(tmp, path)
        return path


# --- perturbed predictions --------------------------------------------------


def materialize(
    manifest: DatasetManifest,
    perturbation: PerturbationSpec,
    workdir: str | Path,
    resources: Mapping[str, Sequence] | None = None,
    use_cache: bool = True,
    dataset: str | None = None,
) -> dict[str, Path]:
    """Write perturbed copies of every sample's audio below ``workdir``.

    Files go to ``workdir/audio/<dataset>/<fingerprint>/``; a marker file
    records a finished rendering, which is reused unless ``use_cache`` is
    False. Samples the perturbation cannot be applied to (e.g. a crop longer
    than the file) are left out and logged.
    """
    out_dir = Path(workdir) / "audio" / _safe_name(dataset or manifest.name) / perturbation.fingerprint()
    marker = out_dir / COMPLETE_MARKER
    if use_cache and marker.exists():
        done = json.loads(marker.read_text())
        return {sid: out_dir / name for sid, name in done["files"].items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for sample in manifest.samples:
        name = _safe_name(sample.id) + ".wav"
        try:
            audio = read_wav(manifest.audio_file(sample))
            perturbed = apply_perturbation(audio, perturbation, key=sample.id, resources=resources)
        except PerturbationError as exc:
            logger.warning("%s: %s not perturbed: %s", manifest.name, sample.id, exc)
            continue
        write_wav(out_dir / name, perturbed)
        files[sample.id] = name
    marker.write_text(json.dumps({"spec": perturbation.to_dict(), "files": files}, sort_keys=True))
    return {sid: out_dir / name for sid, name in files.items()}


def predict_perturbed(
    adapter,
    manifest: DatasetManifest,
    perturbation: PerturbationSpec,
    workdir: str | Path,
    resources: Mapping[str, Sequence] | None = None,
    cache: PredictionCache | None = None,
    use_cache: bool = True,
    dataset: str | None = None,
) -> PredictionSet:
    """Predictions of ``adapter`` on perturbed copies of a dataset.

    Identical spec and seed reuse both the rendered audio and the cached
    predictions unless ``use_cache`` is False. ``dataset`` names the data in
    cache keys and defaults to the manifest name.
    """
    cache = cache or PredictionCache(Path(workdir) / "predictions")
    dataset = dataset or manifest.name
    fingerprint = perturbation.fingerprint()
    if use_cache:
        hit = cache.get(adapter.model_id, dataset, fingerprint, adapter.task)
        if hit is not None:
            return hit
    files = materialize(manifest, perturbation, workdir, resources, use_cache, dataset)
    if not files:
        raise PerturbationError(f"no sample of {dataset!r} could be perturbed with {perturbation.kind}")
    preds = adapter.predict(files)
    cache.put(preds, dataset, fingerprint)
    return preds


def load_resource_pool(manifest: DatasetManifest) -> list:
    """Audio of every sample in a resource manifest (noise, speech, IRs)."""
    return [read_wav(manifest.audio_file(s)) for s in manifest.samples]


class ResourcePools(Mapping):
    """Lazily loaded resource pools, keyed by name."""

    def __init__(self, manifests: Mapping[str, DatasetManifest]):
        self._manifests = dict(manifests)
        self._loaded: dict[str, list] = {}
        self._lock = threading.Lock()

    def __getitem__(self, name: str) -> list:
        with self._lock:
            if name not in self._loaded:
                self._loaded[name] = load_resource_pool(self._manifests[name])
            return self._loaded[name]

    def __iter__(self):
        return iter(self._manifests)

    def __len__(self) -> int:
        return len(self._manifests)
