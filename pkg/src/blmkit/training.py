"""Training loops for single-task, multi-task and baseline regimes.

Determinism is the backbone of the module: every source of randomness is a
named stream derived from the run seed (parameter init, subset sampling,
batch formation, per-epoch batch order) except the latent-noise stream,
which advances sequentially through training and is therefore carried in
checkpoints so a resumed run replays the exact trajectory of an
uninterrupted one.

Batches are task-homogeneous (a batch must route through a single task
head); what alternates between tasks during an epoch is the shuffled order
of the pooled batch list.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import BlmInstance, LexType, Task
from .embeddings import EmbeddingStore
from .model import (
    CnnBaseline,
    FfnnBaseline,
    NEGATIVES_POLICIES,
    TwoLevelModel,
    baseline_instance_loss,
    instance_loss,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from .nn import AdamState, adam_step

REGIMES = ("single", "multi", "baseline")
BASELINES = ("ffnn", "cnn")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of tags (never Python's hash())."""
    digest = hashlib.sha256(":".join(map(str, parts)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class TrainConfig:
    regime: str
    tasks: tuple[Task, ...]
    baseline: str | None = None
    lr: float = 0.001
    batch_size: int = 100
    epochs: int = 120
    train_counts: tuple[tuple[Task, int], ...] | None = None
    seed: int = 0
    kl_weight: float = 1.0
    negatives_policy: str = "context+answer"

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if not self.tasks:
            raise ValueError("config needs at least one task")
        if self.regime in ("single", "baseline") and len(self.tasks) != 1:
            raise ValueError(f"{self.regime} regime takes exactly one task")
        if self.regime == "baseline" and self.baseline not in BASELINES:
            raise ValueError(f"baseline regime needs baseline in {BASELINES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negatives_policy not in NEGATIVES_POLICIES:
            raise ValueError(f"unknown negatives policy {self.negatives_policy!r}")

    def counts(self) -> dict[Task, int]:
        return dict(self.train_counts or ())


def benchmark_scale_count(regime: str, task: Task, lex_type: LexType) -> int:
    """Conventional per-task training-set sizes for each regime at full benchmark scale."""
    if regime == "multi":
        return 1000
    if task is Task.AGREEMENT:
        return 2052 if lex_type is LexType.TYPE_I else 3000
    return 2160


@dataclass
class EpochStats:
    sentence_loss: float
    task_loss: float
    total_loss: float


@dataclass
class RunRecord:
    seed: int
    epochs: list[EpochStats] = field(default_factory=list)
    dev_accuracy: list[dict[str, float]] = field(default_factory=list)
    checkpoint_path: str | None = None
    wall_clock: float = 0.0

    def to_lines(self) -> list[str]:
        lines = [json.dumps({"kind": "run", "seed": self.seed,
                             "checkpoint": self.checkpoint_path,
                             "wall_clock": round(self.wall_clock, 3)})]
        for i, ep in enumerate(self.epochs):
            row = {"kind": "epoch", "epoch": i, "sentence_loss": ep.sentence_loss,
                   "task_loss": ep.task_loss, "total_loss": ep.total_loss}
            if i < len(self.dev_accuracy) and self.dev_accuracy[i]:
                row["dev_accuracy"] = self.dev_accuracy[i]
            lines.append(json.dumps(row))
        return lines

    def write(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n", encoding="utf-8")


def sample_training_set(instances: list[BlmInstance], count: int,
                        seed: int) -> list[BlmInstance]:
    """Uniform sample without replacement, keeping the original order."""
    if count > len(instances):
        raise ValueError(f"cannot sample {count} from {len(instances)} instances")
    rng = np.random.default_rng(derive_seed(seed, "subset"))
    idx = np.sort(rng.choice(len(instances), size=count, replace=False))
    return [instances[i] for i in idx]


def _build_model(config: TrainConfig, dim: int, rng: np.random.Generator):
    if config.regime == "baseline":
        cls = FfnnBaseline if config.baseline == "ffnn" else CnnBaseline
        return cls.create(dim, rng)
    return TwoLevelModel.create(dim, config.tasks, rng)


def _form_batches(config: TrainConfig,
                  train_sets: dict[Task, list[BlmInstance]]) -> list[tuple[Task, list[BlmInstance]]]:
    batches: list[tuple[Task, list[BlmInstance]]] = []
    for task in sorted(config.tasks, key=lambda t: t.value):
        insts = train_sets[task]
        rng = np.random.default_rng(derive_seed(config.seed, "batches", task.value))
        order = rng.permutation(len(insts))
        shuffled = [insts[i] for i in order]
        for start in range(0, len(shuffled), config.batch_size):
            batches.append((task, shuffled[start:start + config.batch_size]))
    return batches


def updates_per_epoch(config: TrainConfig, counts: dict[Task, int]) -> int:
    """Parameter updates per epoch: task-homogeneous batches, final partial
    batch kept."""
    return sum(-(-counts[t] // config.batch_size) for t in config.tasks)


def _accumulate(total: dict[str, np.ndarray], part: dict[str, np.ndarray]) -> None:
    for name, g in part.items():
        if name in total:
            total[name] += g
        else:
            total[name] = g.copy()


def _dataset_ids(instances) -> list[str]:
    return [rec.id for inst in instances for rec in inst.all_sentences]


def train(config: TrainConfig, datasets: dict[Task, list[BlmInstance]],
          store: EmbeddingStore, *, checkpoint_path: str | Path | None = None,
          resume_from: str | Path | None = None,
          dev_datasets: dict[Task, list[BlmInstance]] | None = None,
          stop_after_epoch: int | None = None,
          on_batch=None):
    """Run (or resume) one training; returns (model, RunRecord).

    ``stop_after_epoch`` ends the run early with a checkpoint so it can be
    picked up with ``resume_from``; the resumed trajectory is identical to
    an uninterrupted run with the same config and seed.  ``on_batch`` is an
    observability hook called with (epoch, task, batch_size, batch_loss)
    after every update.
    """
    started = time.perf_counter()
    counts = config.counts()
    train_sets: dict[Task, list[BlmInstance]] = {}
    for task in config.tasks:
        insts = datasets.get(task) or []
        if not insts:
            raise ValueError(f"empty dataset for configured task {task.value}")
        if task in counts:
            insts = sample_training_set(insts, counts[task],
                                        derive_seed(config.seed, "sample", task.value))
        train_sets[task] = insts
        store.require_ids(_dataset_ids(insts))

    record = RunRecord(seed=config.seed)
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        if ckpt.meta.get("seed") != config.seed:
            raise ValueError("resume checkpoint was written for a different seed")
        model, adam, start_epoch = ckpt.model, ckpt.adam, ckpt.epoch
        eps_rng = np.random.default_rng()
        eps_rng.bit_generator.state = ckpt.rng_state
    else:
        init_rng = np.random.default_rng(derive_seed(config.seed, "init"))
        model = _build_model(config, store.dim, init_rng)
        adam = AdamState.for_params(model.params, lr=config.lr)
        eps_rng = np.random.default_rng(derive_seed(config.seed, "eps"))
        start_epoch = 0

    batches = _form_batches(config, train_sets)
    last_epoch = min(config.epochs, stop_after_epoch) if stop_after_epoch else config.epochs

    for epoch in range(start_epoch, last_epoch):
        order_rng = np.random.default_rng(derive_seed(config.seed, "order", epoch))
        sent_sum = task_sum = 0.0
        n_inst = 0
        for bi in order_rng.permutation(len(batches)):
            task, insts = batches[bi]
            grads: dict[str, np.ndarray] = {}
            batch_sent = batch_task = 0.0
            for inst in insts:
                if config.regime == "baseline":
                    result = baseline_instance_loss(model, inst, store)
                else:
                    result = instance_loss(model, inst, store, eps_rng,
                                           kl_weight=config.kl_weight,
                                           negatives_policy=config.negatives_policy)
                batch_sent += result.sentence_term
                batch_task += result.task_term
                _accumulate(grads, result.grads)
            if not np.isfinite(batch_sent + batch_task):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch {bi} (task {task.value})")
            scale = 1.0 / len(insts)
            for g in grads.values():
                g *= scale
            adam_step(model.params, grads, adam)
            sent_sum += batch_sent
            task_sum += batch_task
            n_inst += len(insts)
            if on_batch is not None:
                on_batch(epoch, task, len(insts), (batch_sent + batch_task) / len(insts))
        record.epochs.append(EpochStats(sentence_loss=sent_sum / n_inst,
                                        task_loss=task_sum / n_inst,
                                        total_loss=(sent_sum + task_sum) / n_inst))
        if dev_datasets:
            accs = {}
            for task, dev in dev_datasets.items():
                if dev:
                    hits = sum(predict(model, inst, store)[0] == inst.correct_index
                               for inst in dev)
                    accs[task.value] = hits / len(dev)
            record.dev_accuracy.append(accs)
        else:
            record.dev_accuracy.append({})

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model, adam=adam,
                        rng_state=eps_rng.bit_generator.state, epoch=last_epoch,
                        meta={"seed": config.seed, "regime": config.regime,
                              "tasks": [t.value for t in config.tasks],
                              "baseline": config.baseline,
                              "kl_weight": config.kl_weight,
                              "negatives_policy": config.negatives_policy})
        record.checkpoint_path = str(checkpoint_path)
    record.wall_clock = time.perf_counter() - started
    return model, record


def run_n(config: TrainConfig, datasets: dict[Task, list[BlmInstance]],
          store: EmbeddingStore, n: int = 3, base_seed: int | None = None,
          out_dir: str | Path | None = None, **kwargs):
    """n independent trainings with seeds base_seed + i (three runs by
    convention); returns a list of (model, RunRecord)."""
    if n < 1:
        raise ValueError("run_n needs n >= 1")
    base = config.seed if base_seed is None else base_seed
    results = []
    for i in range(n):
        cfg = dataclasses.replace(config, seed=base + i)
        ckpt = None
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            ckpt = out / f"ckpt-seed{cfg.seed}.blmc"
        results.append(train(cfg, datasets, store, checkpoint_path=ckpt, **kwargs))
    return results


# --- config files -----------------------------------------------------------

@dataclass
class TrainJob:
    """A parsed training config file: the TrainConfig plus file wiring."""

    config: TrainConfig
    data_paths: dict[Task, str]
    dev_paths: dict[Task, str]
    store_path: str
    out_dir: str
    runs: int = 1


def parse_train_job(path: str | Path) -> TrainJob:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        sec = parser["train"]
        tasks = tuple(Task.from_string(t) for t in sec["tasks"].replace(",", " ").split())
        counts = None
        if parser.has_section("counts"):
            counts = tuple((Task.from_string(k), int(v))
                           for k, v in parser.items("counts"))
        config = TrainConfig(
            regime=sec["regime"].strip(),
            tasks=tasks,
            baseline=sec.get("baseline", "").strip() or None,
            lr=sec.getfloat("lr", 0.001),
            batch_size=sec.getint("batch_size", 100),
            epochs=sec.getint("epochs", 120),
            train_counts=counts,
            seed=sec.getint("seed", 0),
            kl_weight=sec.getfloat("kl_weight", 1.0),
            negatives_policy=sec.get("negatives", "context+answer").strip(),
        )
        data_paths, dev_paths = {}, {}
        for key, value in parser.items("data"):
            if key.startswith("dev."):
                dev_paths[Task.from_string(key[4:])] = value
            else:
                data_paths[Task.from_string(key)] = value
        io = parser["io"] if parser.has_section("io") else {}
        return TrainJob(config=config, data_paths=data_paths, dev_paths=dev_paths,
                        store_path=io.get("store", ""), out_dir=io.get("out", "."),
                        runs=parser.getint("train", "runs", fallback=1))
    except (KeyError, configparser.Error) as exc:
        raise ValueError(f"{path}: invalid train config: {exc}") from exc
