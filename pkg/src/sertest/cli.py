"""Command-line interface: ``sertest run|simulate-thresholds|perturb|compare|demo``.

Exit codes: 0 when the command completed (failed model tests are results,
not errors), 2 for operational errors, 3 when ``--gate`` is not met and 4
when ``compare`` finds reports that are not comparable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from .adapters import AdapterError, PredictionCache, ResourcePools, SubprocessAdapter, materialize, predict_perturbed
from .core import DatasetManifest, ManifestError, PredictionSet, Task, canonical_classes, load_manifest, \
    load_predictions
from .perturb import KINDS, PerturbationError, PerturbationSpec, apply_perturbation, read_wav, write_wav
from .registry import RegistryError, TestSpec, check_variants, load_registry, load_variants, registry_hash
from .report import build_report, parse_report, render_report
from .simulation import SUPPORTED_METRICS, ThresholdTable, shipped_table, simulate_grid
from .suite import RobustnessPair, SuiteInputs, run_suite

logger = logging.getLogger("sertest")

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_GATE = 3
EXIT_INCOMPARABLE = 4
TASK_ORDER = (Task.AROUSAL, Task.DOMINANCE, Task.VALENCE, Task.CATEGORIES)


class UsageError(Exception):
    pass


def _pairs(items: Sequence[str] | None, what: str) -> list[tuple[str, str]]:
    out = []
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key or not value:
            raise UsageError(f"{what} must look like KEY=VALUE, got {item!r}")
        out.append((key.strip(), value.strip()))
    return out


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _tasks(text: str | None) -> list[Task] | None:
    if text is None:
        return None
    try:
        tasks = {Task.parse(t) for t in text.split(",") if t.strip()}
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return [t for t in TASK_ORDER if t in tasks]


# --- run --------------------------------------------------------------------


def _dataset_key(manifest: DatasetManifest, path: str) -> str:
    """Cache name of a manifest: its name plus a checksum of its location."""
    return f"{manifest.name}-{zlib.crc32(str(Path(path).resolve()).encode()):08x}"


def _audio_map(manifest: DatasetManifest) -> dict[str, Path]:
    return {s.id: manifest.audio_file(s) for s in manifest.samples}


def _roles_for(specs: Sequence[TestSpec], task: Task) -> set[str]:
    return {role for s in specs if s.task is task for role in s.datasets}


def cmd_run(args) -> int:
    registry_text = None if args.registry is None else Path(args.registry).read_text(encoding="utf-8")
    variants_text = None if args.perturbations is None else Path(args.perturbations).read_text(encoding="utf-8")
    specs = load_registry(args.registry)
    variants = load_variants(args.perturbations)
    check_variants(specs, variants)

    manifest_paths = dict(_pairs(args.manifests, "--manifests"))
    manifests = {role: load_manifest(path) for role, path in manifest_paths.items()}
    keys = {role: _dataset_key(manifests[role], path) for role, path in manifest_paths.items()}
    resources = ResourcePools({name: load_manifest(path) for name, path in _pairs(args.resources, "--resources")})
    classes = tuple(args.classes.split(",")) if args.classes else canonical_classes()

    predictions: dict[tuple[str, Task], PredictionSet] = {}
    for key, path in _pairs(args.predictions, "--predictions"):
        role, sep, task = key.partition(":")
        if not sep:
            raise UsageError(f"--predictions key must be ROLE:TASK, got {key!r}")
        predictions[(role, Task.parse(task))] = load_predictions(path, task, args.model_id)
    adapters = {
        Task.parse(task): SubprocessAdapter(cmd, Task.parse(task), args.model_id, args.batch_size, args.timeout,
                                            args.workers)
        for task, cmd in _pairs(args.command, "--command")
    }
    tasks = _tasks(args.tasks)
    if tasks is None:
        present = {t for _, t in predictions} | set(adapters)
        tasks = [t for t in TASK_ORDER if t in present]
    if not tasks:
        raise UsageError("no task to evaluate: give --predictions, --command or --tasks")
    specs = [s for s in specs if s.task in tasks]

    workdir = Path(args.workdir)
    cache = PredictionCache(workdir / "predictions")
    use_cache = not args.no_cache

    def clean_predictions(role: str, task: Task) -> PredictionSet | None:
        if (role, task) in predictions:
            return predictions[(role, task)]
        adapter = adapters.get(task)
        if adapter is None or role not in manifests:
            return None
        hit = cache.get(adapter.model_id, keys[role], "clean", task) if use_cache else None
        if hit is None:
            logger.info("predicting %s / %s", role, task.value)
            hit = adapter.predict(_audio_map(manifests[role]))
            cache.put(hit, keys[role], "clean")
        predictions[(role, task)] = hit
        return hit

    for task in tasks:
        for role in sorted(_roles_for(specs, task)):
            if role in manifests:
                clean_predictions(role, task)

    perturbed: dict[tuple[str, Task, str], RobustnessPair] = {}
    unavailable: dict[tuple[str, Task, str], str] = {}
    for key, path in _pairs(args.perturbed_predictions, "--perturbed-predictions"):
        role, task, variant = (key.split(":") + ["", ""])[:3]
        if not variant:
            raise UsageError(f"--perturbed-predictions key must be ROLE:TASK:VARIANT, got {key!r}")
        perturbed[(role, Task.parse(task), variant)] = RobustnessPair(load_predictions(path, task, args.model_id))

    jobs = []
    for spec in specs:
        if spec.category != "robustness":
            continue
        for role in spec.datasets:
            if role not in manifests:
                continue
            for name in spec.perturbations:
                slot = (role, spec.task, name)
                if slot in perturbed or slot in unavailable:
                    continue
                variant = variants[name].with_seed(args.seed)
                if variant.recorded:
                    if variant.recorded not in manifests:
                        unavailable[slot] = f"recording role {variant.recorded!r} not bound"
                        continue
                    recorded = clean_predictions(variant.recorded, spec.task)
                    if recorded is None:
                        unavailable[slot] = f"no predictions for {variant.recorded!r}"
                    else:
                        perturbed[slot] = RobustnessPair(recorded)
                    continue
                if spec.task not in adapters:
                    unavailable[slot] = "no model command to score perturbed audio"
                    continue
                needed = [p.resource for p in (variant.perturbation, variant.reference) if p and p.resource]
                missing = [r for r in needed if r not in resources]
                if missing:
                    unavailable[slot] = f"resource pool {missing[0]!r} not bound"
                    continue
                jobs.append((slot, variant))

    # render every perturbed copy once, then score them concurrently
    rendered: set[tuple[str, str]] = set()
    runnable = []
    for slot, variant in jobs:
        role = slot[0]
        try:
            for p in (variant.perturbation, variant.reference):
                if p is not None and (keys[role], p.fingerprint()) not in rendered:
                    logger.info("rendering %s for %s", variant.name, role)
                    if not materialize(manifests[role], p, workdir, resources, use_cache, keys[role]):
                        raise PerturbationError(f"no sample of {role!r} could be perturbed with {p.kind}")
                    rendered.add((keys[role], p.fingerprint()))
        except PerturbationError as exc:
            unavailable[slot] = str(exc)
            continue
        runnable.append((slot, variant))

    def score(job) -> RobustnessPair:
        (role, task, _), variant = job
        adapter = adapters[task]

        def run(p: PerturbationSpec) -> PredictionSet:
            if use_cache:
                return predict_perturbed(adapter, manifests[role], p, workdir, resources, cache, dataset=keys[role])
            # audio was just re-rendered above; only the model call remains
            preds = adapter.predict(materialize(manifests[role], p, workdir, resources, True, keys[role]))
            cache.put(preds, keys[role], p.fingerprint())
            return preds

        return RobustnessPair(run(variant.perturbation), run(variant.reference) if variant.reference else None)

    with ThreadPoolExecutor(max_workers=max(args.workers, 1)) as pool:
        for (slot, _), pair in zip(runnable, pool.map(score, runnable)):
            perturbed[slot] = pair

    table = None
    if args.thresholds == "shipped":
        table = shipped_table()
    elif args.thresholds:
        table = ThresholdTable.load(args.thresholds)
    inputs = SuiteInputs(
        manifests=manifests,
        predictions=predictions,
        perturbed=perturbed,
        thresholds=table,
        classes=classes,
        seed=args.seed,
        balance_n=args.balance_n,
        simulation_repeats=args.repeats,
        unavailable=unavailable,
    )
    n_before = 0 if table is None else len(table.entries)
    results = run_suite(inputs, specs)
    environment = {
        "seed": args.seed,
        "registry_hash": registry_hash(registry_text, variants_text),
        "threshold_table_hash": None if table is None else table.digest(),
        "classes": list(classes),
        "balance_n": args.balance_n,
    }
    report = build_report(args.model_id, [t.value for t in tasks], results, environment)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(render_report(report, "structured"))
    (out / "report.md").write_bytes(render_report(report, "human"))
    if table is not None and len(table.entries) > n_before:
        table.save(out / "thresholds.csv")
        logger.warning("simulated %d missing thresholds; extended table written to %s",
                       len(table.entries) - n_before, out / "thresholds.csv")
    overall = report.aggregates["overall"]
    shown = "n/a" if overall is None else f"{100 * overall:.1f}%"
    print(f"overall pass fraction {shown}; report written to {out}")
    if args.gate is not None and (overall is None or overall < args.gate):
        print(f"gate {args.gate} not met", file=sys.stderr)
        return EXIT_GATE
    return EXIT_OK


# --- simulate-thresholds ----------------------------------------------------


def _grid_csv(table: ThresholdTable) -> str:
    """One row per (metric, model, truth, groups); one column per group size."""
    sizes = sorted({k[2] for k in table.entries})
    rows = sorted({(k[0], k[3], k[4], k[1]) for k in table.entries})
    lines = [",".join(["metric", "model", "truth", "n_groups"] + [str(n) for n in sizes])]
    for metric, model, truth, g in rows:
        cells = []
        for n in sizes:
            value = table.get(metric, g, n, model, truth)
            cells.append("" if value is None else f"{value:.6f}")
        lines.append(",".join([metric, model, truth, str(g)] + cells))
    return "\n".join(lines) + "\n"


def cmd_simulate_thresholds(args) -> int:
    metrics = [m for item in args.metric for m in item.split(",") if m]
    unknown = [m for m in metrics if m not in SUPPORTED_METRICS]
    if unknown:
        raise UsageError(f"unknown metric {unknown[0]!r} (valid: {', '.join(SUPPORTED_METRICS)})")
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    if args.repeats == 1:
        logger.warning("a single repeat gives an unstable maximum; use several hundred repeats")
    groups = _int_list(args.groups)
    samples = _int_list(args.samples)
    if not groups or not samples or min(groups + samples) < 1:
        raise UsageError("--groups and --samples need positive integers")
    truths = args.truth.split(",") if args.truth else None
    table = simulate_grid(metrics, groups, samples, args.repeats, args.seed, truths=truths, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.save(out)
    grid = Path(args.grid) if args.grid else out.with_name(out.stem + "_grid.csv")
    grid.write_text(_grid_csv(table), encoding="utf-8")
    print(f"wrote {out} and {grid}")
    return EXIT_OK


# --- perturb ----------------------------------------------------------------


def cmd_perturb(args) -> int:
    if args.kind not in KINDS:
        raise UsageError(f"unknown perturbation {args.kind!r} (valid: {', '.join(KINDS)})")
    try:
        params = json.loads(args.params) if args.params else {}
    except json.JSONDecodeError as exc:
        raise UsageError(f"--params is not valid JSON: {exc}") from None
    spec = PerturbationSpec(args.kind, params, args.seed)
    resources = ResourcePools({name: load_manifest(path) for name, path in _pairs(args.resources, "--resources")})
    src = Path(args.input)
    if not src.exists():
        raise UsageError(f"input not found: {src}")
    if src.is_dir():
        files = sorted(p for p in src.rglob("*.wav"))
        targets = [Path(args.output) / p.relative_to(src) for p in files]
    else:
        files = [src]
        targets = [Path(args.output)]
    for f, target in zip(files, targets):
        key = str(f.relative_to(src)) if src.is_dir() else f.name
        audio = apply_perturbation(read_wav(f), spec, key=key, resources=resources)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_wav(target, audio)
    print(f"perturbed {len(files)} files ({spec.kind}, fingerprint {spec.fingerprint()})")
    return EXIT_OK


# --- compare ----------------------------------------------------------------


def cmd_compare(args) -> int:
    a = parse_report(Path(args.a).read_bytes())
    b = parse_report(Path(args.b).read_bytes())
    for field in ("registry_hash", "threshold_table_hash", "seed"):
        if a.environment.get(field) != b.environment.get(field):
            print(f"reports are not comparable: {field} differs", file=sys.stderr)
            return EXIT_INCOMPARABLE
    print(f"{'test':<60} {a.model_id:>12} {b.model_id:>12}")
    fa, fb = a.aggregates["tests"], b.aggregates["tests"]
    for test in sorted(set(fa) | set(fb)):
        va, vb = fa.get(test), fb.get(test)
        print(f"{test:<60} {'n/a' if va is None else f'{va:.3f}':>12} {'n/a' if vb is None else f'{vb:.3f}':>12}")
    oa, ob = a.aggregates["overall"], b.aggregates["overall"]
    print(f"{'overall':<60} {'n/a' if oa is None else f'{oa:.3f}':>12} {'n/a' if ob is None else f'{ob:.3f}':>12}")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .demo import make_mini_dataset, make_resource_pools

    print(make_mini_dataset(args.out_dir, args.seed))
    for path in make_resource_pools(args.out_dir, args.seed).values():
        print(path)
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sertest", description="Behavioural test suite for emotion models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command_name", required=True)

    run = sub.add_parser("run", help="evaluate a model and write reports")
    run.add_argument("--manifests", nargs="+", metavar="ROLE=PATH", required=True)
    run.add_argument("--predictions", nargs="+", metavar="ROLE:TASK=PATH")
    run.add_argument("--perturbed-predictions", nargs="+", metavar="ROLE:TASK:VARIANT=PATH")
    run.add_argument("--command", nargs="+", metavar="TASK=CMD", help="model command per task")
    run.add_argument("--resources", nargs="+", metavar="NAME=PATH", help="noise, speech and IR pools")
    run.add_argument("--registry", help="registry CSV (default: shipped registry)")
    run.add_argument("--perturbations", help="perturbation variant JSON (default: shipped table)")
    run.add_argument("--thresholds", help="simulated threshold table for fairness tests, or 'shipped' for the "
                     "bundled grid; without it the registry thresholds apply")
    run.add_argument("--tasks", help="comma-separated tasks to evaluate")
    run.add_argument("--classes", help="comma-separated class set (default: anger,happiness,neutral,sadness)")
    run.add_argument("--workdir", default="sertest-work")
    run.add_argument("--out", default="sertest-report")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--gate", type=float, help="exit nonzero when the overall pass fraction is below this")
    run.add_argument("--model-id", default="model")
    run.add_argument("--balance-n", type=int, help="override the group balancing target")
    run.add_argument("--repeats", type=int, default=1000, help="repeats for thresholds missing from the table")
    run.add_argument("--batch-size", type=int, default=0)
    run.add_argument("--timeout", type=float)
    run.add_argument("--workers", type=int, default=1, help="concurrent model invocations")
    run.add_argument("--no-cache", action="store_true", help="re-render audio and re-run the model")
    run.set_defaults(func=cmd_run)

    sim = sub.add_parser("simulate-thresholds", help="Monte Carlo thresholds for fairness metrics")
    sim.add_argument("--metric", nargs="+", required=True, help=f"one or more of {', '.join(SUPPORTED_METRICS)}")
    sim.add_argument("--groups", required=True, help="comma-separated group counts")
    sim.add_argument("--samples", required=True, help="comma-separated samples per group")
    sim.add_argument("--repeats", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--truth", help="truth models for categorical metrics (default: uniform and sparse)")
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out", required=True, help="threshold table CSV")
    sim.add_argument("--grid", help="grid CSV (default: <out>_grid.csv)")
    sim.set_defaults(func=cmd_simulate_thresholds)

    pert = sub.add_parser("perturb", help="apply one perturbation to a file or directory of WAV files")
    pert.add_argument("--kind", required=True)
    pert.add_argument("--params", help="JSON object of parameters")
    pert.add_argument("--seed", type=int, default=0)
    pert.add_argument("--in", dest="input", required=True)
    pert.add_argument("--out", dest="output", required=True)
    pert.add_argument("--resources", nargs="+", metavar="NAME=PATH")
    pert.set_defaults(func=cmd_perturb)

    comp = sub.add_parser("compare", help="compare two structured reports")
    comp.add_argument("a")
    comp.add_argument("b")
    comp.set_defaults(func=cmd_compare)

    demo = sub.add_parser("demo", help="write the synthetic mini dataset and resource pools")
    demo.add_argument("out_dir")
    demo.add_argument("--seed", type=int, default=0)
    demo.set_defaults(func=cmd_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ManifestError, RegistryError, PerturbationError, AdapterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
