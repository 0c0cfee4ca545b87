"""Experiment harness: single-task runs, manifest-driven suites and reports.

Target ground truth only ever enters :func:`run_task` *after* the fit has
returned, so it cannot influence training.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classify import BaseClassifier, accuracy, nn_classify
from .config import SolverConfig
from .data import DaDataset, load_labels, load_matrix
from .errors import ConfigError, DataError, DollDaError
from .pipeline import fit
from .synthetic import make_synthetic

log = logging.getLogger(__name__)

# desk-scale recipe used by the synthetic ablation
SYNTHETIC_ABLATION_CONFIG = dict(k=5, alpha=1.0, beta=0.1)


@dataclass
class TaskReport:
    task_name: str
    variant: str
    accuracy: float | None
    per_iteration_accuracy: list = field(default_factory=list)
    wall_time_seconds: float = 0.0
    config_echo: dict = field(default_factory=dict)
    seed: int = 0
    dataset_hash: str = ""
    iterations_run: int = 0
    predicted_labels: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def run_task(dataset: DaDataset, config: SolverConfig, truth_labels_target=None,
             task_name: str = "task", classifier: BaseClassifier = nn_classify) -> TaskReport:
    """Fit one task and score it; errors become a failed report instead of raising."""
    report = TaskReport(task_name, config.variant, None, config_echo=config.to_dict(),
                        seed=config.seed, dataset_hash=dataset.digest())
    start = time.perf_counter()
    try:
        result = fit(dataset, config, classifier=classifier)
    except DollDaError as exc:
        report.status, report.error = "failed", f"{type(exc).__name__}: {exc}"
        report.wall_time_seconds = time.perf_counter() - start
        log.warning("task %s failed: %s", task_name, report.error)
        return report
    report.wall_time_seconds = time.perf_counter() - start
    report.iterations_run = result.iterations_run
    report.predicted_labels = [int(v) for v in result.target_labels]
    if truth_labels_target is not None:
        truth = np.asarray(truth_labels_target)
        if truth.size != dataset.n_target:
            report.status = "failed"
            report.error = f"DataError: {truth.size} truth labels for {dataset.n_target} target samples"
            return report
        report.per_iteration_accuracy = [accuracy(ls, truth) for ls in result.label_trace]
        report.accuracy = accuracy(result.target_labels, truth)
    return report


# -- manifests ---------------------------------------------------------------

def _expand(entries: list) -> list:
    tasks = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(f"manifest entry {i} must be an object with a 'name'")
        variants = entry.get("variants")
        if variants is None:
            tasks.append(entry)
            continue
        for v in variants:
            task = {key: val for key, val in entry.items() if key != "variants"}
            task["config"] = {**entry.get("config", {}), "variant": v}
            task["name"] = f"{entry['name']}:{v}"
            tasks.append(task)
    return tasks


def load_manifest(path) -> list:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"manifest not found: {path}") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    if isinstance(doc, dict):
        doc = doc.get("tasks", [])
    if not isinstance(doc, list):
        raise ConfigError(f"manifest {path} must be a JSON array of tasks")
    base = path.parent
    tasks = _expand(doc)
    for task in tasks:
        for key in ("source_features", "source_labels", "target_features", "target_truth_labels"):
            if task.get(key) is not None:
                task[key] = str((base / task[key]).resolve())
    return tasks


def _load_task_data(task: dict):
    if "synthetic" in task:
        return make_synthetic(**task["synthetic"])
    for key in ("source_features", "source_labels", "target_features"):
        if task.get(key) is None:
            raise DataError(f"task {task['name']!r} is missing {key!r}")
    xs = load_matrix(task["source_features"])
    ys = load_labels(task["source_labels"])
    xt = load_matrix(task["target_features"])
    truth = None
    if task.get("target_truth_labels") is not None:
        truth = load_labels(task["target_truth_labels"])
    return DaDataset.from_domains(xs, ys, xt), truth


def _execute(task: dict, overrides: dict) -> TaskReport:
    config_dict = {**task.get("config", {}), **overrides}
    variant = config_dict.get("variant", SolverConfig.variant)
    try:
        config = SolverConfig.from_dict(config_dict)
        dataset, truth = _load_task_data(task)
    except (DollDaError, TypeError) as exc:
        return TaskReport(task["name"], variant, None, config_echo=config_dict,
                          seed=config_dict.get("seed", 0), status="failed",
                          error=f"{type(exc).__name__}: {exc}")
    return run_task(dataset, config, truth, task_name=task["name"])


def summarize(reports: list) -> dict:
    by_variant: dict[str, list] = {}
    for r in reports:
        if r.status == "ok" and r.accuracy is not None:
            by_variant.setdefault(r.variant, []).append(r.accuracy)
    return {
        "tasks": len(reports),
        "failed": sum(r.status != "ok" for r in reports),
        "mean_accuracy_by_variant": {v: float(np.mean(a)) for v, a in by_variant.items()},
    }


def write_reports(reports: list, summary: dict, out_dir, emit_convergence: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"summary": summary, "tasks": [r.to_dict() for r in reports]}
    (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "variant", "accuracy", "status"])
        for r in reports:
            w.writerow([r.task_name, r.variant, "" if r.accuracy is None else repr(r.accuracy), r.status])
        for variant, mean in summary["mean_accuracy_by_variant"].items():
            w.writerow(["mean", variant, repr(mean), "ok"])
    if emit_convergence:
        conv = out / "convergence"
        conv.mkdir(exist_ok=True)
        for i, r in enumerate(reports):
            safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in r.task_name)
            with open(conv / f"{i:03d}_{safe}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", "accuracy"])
                for it, acc in enumerate(r.per_iteration_accuracy, start=1):
                    w.writerow([it, repr(acc)])


def run_suite(manifest_path, out_dir=None, jobs: int = 1, emit_convergence: bool = False,
              overrides: dict | None = None) -> tuple[list, dict]:
    """Run every manifest task; reports come back in manifest order."""
    tasks = load_manifest(manifest_path)
    overrides = overrides or {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_execute, tasks, [overrides] * len(tasks)))
    else:
        reports = [_execute(t, overrides) for t in tasks]
    summary = summarize(reports)
    if out_dir is not None:
        write_reports(reports, summary, out_dir, emit_convergence)
    return reports, summary
