"""Run reports: a structured JSON document and a Markdown summary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .core import Task
from .registry import CATEGORIES
from .suite import TestResult, aggregate

REPORT_FORMATS = ("structured", "human")
_TASK_ORDER = [t.value for t in (Task.AROUSAL, Task.DOMINANCE, Task.VALENCE, Task.CATEGORIES)]


class ReportIntegrityError(ValueError):
    """Stored aggregates disagree with the instances they summarize."""


@dataclass(frozen=True)
class RunReport:
    model_id: str
    tasks: tuple[str, ...]
    results: tuple[TestResult, ...]
    aggregates: Mapping[str, Any]
    environment: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "tasks": list(self.tasks),
            "results": [r.to_dict() for r in self.results],
            "aggregates": self.aggregates,
            "environment": dict(self.environment),
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> RunReport:
        return cls(
            model_id=raw["model_id"],
            tasks=tuple(raw["tasks"]),
            results=tuple(TestResult.from_dict(r) for r in raw["results"]),
            aggregates=raw["aggregates"],
            environment=raw.get("environment", {}),
        )


def build_report(model_id: str, tasks: Sequence[str], results: Sequence[TestResult],
                 environment: Mapping[str, Any]) -> RunReport:
    tasks = tuple(sorted({str(t) for t in tasks}, key=_TASK_ORDER.index))
    return RunReport(model_id, tasks, tuple(results), aggregate(results), dict(environment))


def check_integrity(report: RunReport) -> None:
    expected = aggregate(report.results)
    if json.loads(json.dumps(expected)) != json.loads(json.dumps(report.aggregates)):
        raise ReportIntegrityError("report aggregates do not match its test instances")
    for r in report.results:
        if r.task.value not in report.tasks:
            raise ReportIntegrityError(f"result {r.spec_id} belongs to task {r.task.value} outside the report")


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def _cell(text: str) -> str:
    return text.replace("|", "\\|")


def _short(h: str | None) -> str:
    return "none" if not h else h[:12]


def _human(report: RunReport) -> str:
    env = report.environment
    lines = [
        f"# Test report: {report.model_id}",
        "",
        f"Seed {env.get('seed')}, registry {_short(env.get('registry_hash'))}, "
        f"threshold table {_short(env.get('threshold_table_hash'))}.",
        "",
        "## Summary",
        "",
        "| Task | Correctness | Fairness | Robustness | All tests |",
        "|---|---|---|---|---|",
    ]
    tasks_agg = report.aggregates["tasks"]
    for task in report.tasks:
        entry = tasks_agg.get(task, {})
        cells = [_pct(entry.get(c)) for c in CATEGORIES] + [_pct(entry.get("all"))]
        lines.append(f"| {task} | " + " | ".join(cells) + " |")
    lines += ["", f"Overall: {_pct(report.aggregates['overall'])}", ""]
    for task in report.tasks:
        lines += [
            f"## {task}",
            "",
            "| Category | Test | Condition | Passed | Failed | Skipped | Pass fraction |",
            "|---|---|---|---|---|---|---|",
        ]
        for r in report.results:
            if r.task.value != task:
                continue
            lines.append(
                f"| {r.category} | {_cell(r.test)} | {_cell(r.condition)} | {r.n_passed} | {r.n_failed} | {r.n_skipped} "
                f"| {_pct(r.pass_fraction)} |"
            )
        lines.append("")
    return "\n".join(lines)


def render_report(report: RunReport, fmt: str = "structured") -> bytes:
    """Serialize a report after checking that its aggregates are consistent.

    ``structured`` is JSON with sorted keys; ``human`` is a Markdown summary
    with one row per test.
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format {fmt!r} (valid: {', '.join(REPORT_FORMATS)})")
    check_integrity(report)
    if fmt == "structured":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=1, allow_nan=False)
    else:
        text = _human(report)
    return (text + "\n").encode("utf-8")


def parse_report(data: bytes | str) -> RunReport:
    raw = json.loads(data)
    return RunReport.from_dict(raw)
