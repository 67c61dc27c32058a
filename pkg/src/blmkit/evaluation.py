"""Scoring, aggregation over runs, and single-vs-multi comparison reports.

The headline score is micro-averaged over instances: every instance yields
exactly one choice among its 8 candidates, so micro precision, micro recall
and accuracy coincide; that value is reported as F1.  Alongside it each
report carries the distribution of the chosen candidates' answer labels,
which is the raw material of the error analysis (the proportion at
``Correct`` is the F1 itself).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import AnswerLabel, BlmInstance, LexType, Task
from .embeddings import EmbeddingStore
from .model import predict


@dataclass
class EvalFragment:
    """One run's scores on one test set."""

    f1: float
    label_distribution: dict[str, float]
    n_instances: int


@dataclass
class EvalReport:
    regime: str
    task: Task
    train_type: LexType
    test_type: LexType
    f1_mean: float
    f1_std: float
    n_runs: int
    label_distribution: dict[str, float]

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.task.value, self.train_type.value, self.test_type.value)


def summarize_choices(instances: list[BlmInstance], chosen: list[int]) -> EvalFragment:
    """Score a list of per-instance candidate choices."""
    if not instances:
        raise ValueError("cannot evaluate an empty test set")
    if len(chosen) != len(instances):
        raise ValueError(f"{len(chosen)} choices for {len(instances)} instances")
    counts: dict[str, int] = {}
    hits = 0
    for inst, idx in zip(instances, chosen):
        label = inst.answers[idx][1]
        counts[label.value] = counts.get(label.value, 0) + 1
        hits += idx == inst.correct_index
    n = len(instances)
    distribution = {label: c / n for label, c in sorted(counts.items())}
    return EvalFragment(f1=hits / n, label_distribution=distribution, n_instances=n)


def evaluate(model, instances: list[BlmInstance], store: EmbeddingStore,
             threads: int = 1) -> EvalFragment:
    """Run the model's deterministic prediction over a test set."""
    if not instances:
        raise ValueError("cannot evaluate an empty test set")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chosen = list(pool.map(lambda inst: predict(model, inst, store)[0], instances))
    else:
        chosen = [predict(model, inst, store)[0] for inst in instances]
    return summarize_choices(instances, chosen)


def aggregate(fragments: list[EvalFragment], *, regime: str, task: Task,
              train_type: LexType, test_type: LexType) -> EvalReport:
    """Mean and population std of F1 over runs; label distributions averaged."""
    if not fragments:
        raise ValueError("aggregate needs at least one fragment")
    f1s = np.array([f.f1 for f in fragments])
    labels = sorted({label for f in fragments for label in f.label_distribution})
    distribution = {
        label: float(np.mean([f.label_distribution.get(label, 0.0) for f in fragments]))
        for label in labels
    }
    return EvalReport(regime=regime, task=task, train_type=train_type,
                      test_type=test_type, f1_mean=float(f1s.mean()),
                      f1_std=float(f1s.std()), n_runs=len(fragments),
                      label_distribution=distribution)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "regime": report.regime,
        "task": report.task.value,
        "train_type": report.train_type.value,
        "test_type": report.test_type.value,
        "f1_mean": report.f1_mean,
        "f1_std": report.f1_std,
        "n_runs": report.n_runs,
        "label_distribution": report.label_distribution,
    }


def report_from_dict(d: dict) -> EvalReport:
    return EvalReport(regime=d["regime"], task=Task(d["task"]),
                      train_type=LexType(d["train_type"]), test_type=LexType(d["test_type"]),
                      f1_mean=d["f1_mean"], f1_std=d["f1_std"], n_runs=d["n_runs"],
                      label_distribution=dict(d["label_distribution"]))


def save_report(report: EvalReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def load_report(path: str | Path) -> EvalReport:
    return report_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class ComparisonRow:
    task: Task
    train_type: LexType
    test_type: LexType
    single_f1: float
    multi_f1: float
    delta: float
    label_deltas: dict[str, float]


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": [{
            "task": r.task.value, "train_type": r.train_type.value,
            "test_type": r.test_type.value, "single_f1": r.single_f1,
            "multi_f1": r.multi_f1, "delta": r.delta,
            "label_deltas": r.label_deltas,
        } for r in self.rows]}


def compare(single: list[EvalReport], multi: list[EvalReport]) -> ComparisonReport:
    """Pair reports by (task, train type, test type) and diff multi - single."""
    single_by_key = {r.key: r for r in single}
    multi_by_key = {r.key: r for r in multi}
    if set(single_by_key) != set(multi_by_key):
        odd = set(single_by_key) ^ set(multi_by_key)
        raise ValueError(f"unmatched report keys: {sorted(odd)}")
    rows = []
    for key in sorted(single_by_key):
        s, m = single_by_key[key], multi_by_key[key]
        labels = sorted(set(s.label_distribution) | set(m.label_distribution))
        rows.append(ComparisonRow(
            task=s.task, train_type=s.train_type, test_type=s.test_type,
            single_f1=s.f1_mean, multi_f1=m.f1_mean, delta=m.f1_mean - s.f1_mean,
            label_deltas={
                label: m.label_distribution.get(label, 0.0) - s.label_distribution.get(label, 0.0)
                for label in labels
            },
        ))
    return ComparisonReport(rows=rows)


def render_comparison_text(report: ComparisonReport) -> str:
    header = f"{'task':<12}{'train':<7}{'test':<7}{'single':>8}{'multi':>8}{'delta':>8}"
    lines = [header, "-" * len(header)]
    for r in report.rows:
        lines.append(f"{r.task.value:<12}{r.train_type.value:<7}{r.test_type.value:<7}"
                     f"{r.single_f1:>8.3f}{r.multi_f1:>8.3f}{r.delta:>+8.3f}")
    return "\n".join(lines)
