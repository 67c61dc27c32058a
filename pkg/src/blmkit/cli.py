"""Command-line entry point wiring generation, encoding, training and
evaluation together.

Every command prints its resolved configuration (seeds included) before
doing any work, never mutates its input files, and fails with a one-line
``error: <category>: <detail>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import evaluation, generator, training
from .data import LexType, Task
from .embeddings import (
    EmbeddingStore,
    MissingEmbeddingError,
    StoreFormatError,
    encode_dataset,
    store_read,
    store_write,
)
from .generator import DatasetFormatError, SplitError, SplitSpec
from .lexicon import InadequateLexiconError, LexiconError, load_lexicon
from .model import load_checkpoint


class CliError(Exception):
    def __init__(self, category: str, detail: str):
        self.category = category
        self.detail = detail
        super().__init__(f"{category}: {detail}")


def _print_config(command: str, values: dict) -> None:
    print(f"config: {json.dumps(dict(values, command=command), sort_keys=True)}")


def _threads() -> int:
    raw = os.environ.get("BLM_THREADS", "")
    if not raw:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise CliError("usage", f"BLM_THREADS must be an integer, got {raw!r}")


def _load_dataset(path: str):
    if not Path(path).exists():
        raise CliError("missing-file", f"dataset not found: {path}")
    return generator.load(path)


def _load_store(path: str) -> EmbeddingStore:
    if not Path(path).exists():
        raise CliError("store-not-found", f"store not found: {path}")
    return store_read(path)


# --- subcommands -----------------------------------------------------------

def cmd_generate(args) -> int:
    task = Task.from_string(args.task)
    lex_type = LexType.from_string(args.lex_type)
    _print_config("generate", {"task": task.value, "lex_type": lex_type.value,
                               "count": args.count, "seed": args.seed,
                               "lexicon": args.lexicon, "out": args.out,
                               "inventory": args.inventory})
    if not Path(args.lexicon).exists():
        raise CliError("missing-file", f"lexicon not found: {args.lexicon}")
    lexicon = load_lexicon(args.lexicon)
    instances = generator.generate(task, lex_type, lexicon, args.count, args.seed)
    generator.save(instances, args.out)
    inventory = generator.sentence_inventory(instances)
    if args.inventory:
        generator.write_inventory(inventory, args.inventory)
    print(f"wrote {len(instances)} instances ({len(inventory)} distinct sentences) to {args.out}")
    return 0


def cmd_split(args) -> int:
    ratios = tuple(float(r) for r in args.ratios.split(":"))
    if len(ratios) != 3:
        raise CliError("usage", f"--ratios needs three ':'-separated numbers, got {args.ratios!r}")
    _print_config("split", {"data": args.data, "ratios": args.ratios, "seed": args.seed,
                            "train": args.train, "dev": args.dev, "test": args.test})
    instances = _load_dataset(args.data)
    train, dev, test = generator.split(instances, SplitSpec(ratios=ratios), args.seed)
    for part, path in ((train, args.train), (dev, args.dev), (test, args.test)):
        generator.save(part, path)
    print(f"split {len(instances)} instances -> train {len(train)}, dev {len(dev)}, test {len(test)}")
    return 0


def _cmd_encode(args, encoder: str) -> int:
    values = {"data": args.data, "dim": args.dim, "seed": args.seed, "out": args.out}
    if encoder == "oracle":
        values["noise"] = args.noise
    _print_config(f"encode-{encoder}", values)
    instances = []
    for path in args.data:
        instances.extend(_load_dataset(path))
    store = encode_dataset(instances, args.dim, args.seed, encoder=encoder,
                           noise=getattr(args, "noise", 0.0))
    store_write(store, args.out)
    print(f"encoded {len(store)} sentences at dim {store.dim} -> {args.out}")
    return 0


def cmd_train(args) -> int:
    if not Path(args.config).exists():
        raise CliError("missing-file", f"config not found: {args.config}")
    job = training.parse_train_job(args.config)
    out_dir = Path(args.out or job.out_dir)
    _print_config("train", {"config": args.config, "regime": job.config.regime,
                            "tasks": [t.value for t in job.config.tasks],
                            "seed": job.config.seed, "epochs": job.config.epochs,
                            "batch_size": job.config.batch_size, "lr": job.config.lr,
                            "runs": job.runs, "store": job.store_path,
                            "out": str(out_dir)})
    store = _load_store(job.store_path)
    datasets = {task: _load_dataset(path) for task, path in job.data_paths.items()}
    dev = {task: _load_dataset(path) for task, path in job.dev_paths.items()} or None
    results = training.run_n(job.config, datasets, store, n=job.runs,
                             out_dir=out_dir, dev_datasets=dev)
    for _, record in results:
        log_path = out_dir / f"run-seed{record.seed}.jsonl"
        record.write(log_path)
        final = record.epochs[-1]
        print(f"seed {record.seed}: total loss {final.total_loss:.4f} "
              f"after {len(record.epochs)} epochs -> {record.checkpoint_path}")
    return 0


def cmd_eval(args) -> int:
    _print_config("eval", {"checkpoints": args.checkpoint, "test": args.test,
                           "store": args.store, "train_type": args.train_type,
                           "out": args.out, "threads": _threads()})
    store = _load_store(args.store)
    instances = _load_dataset(args.test)
    test_types = {inst.lex_type for inst in instances}
    if len(test_types) != 1:
        raise CliError("bad-format", "test set mixes lexicalisation types")
    fragments = []
    regime = None
    task = instances[0].task
    for path in args.checkpoint:
        if not Path(path).exists():
            raise CliError("missing-file", f"checkpoint not found: {path}")
        ckpt = load_checkpoint(path)
        regime = ckpt.meta.get("regime", "single")
        fragments.append(evaluation.evaluate(ckpt.model, instances, store,
                                             threads=_threads()))
    report = evaluation.aggregate(fragments, regime=regime, task=task,
                                  train_type=LexType.from_string(args.train_type),
                                  test_type=test_types.pop())
    evaluation.save_report(report, args.out)
    print(f"f1 {report.f1_mean:.3f} ({report.f1_std:.3f}) over {report.n_runs} run(s) -> {args.out}")
    return 0


def cmd_report(args) -> int:
    _print_config("report", {"single": args.single, "multi": args.multi, "out": args.out})
    singles = [evaluation.load_report(p) for p in args.single]
    multis = [evaluation.load_report(p) for p in args.multi]
    comparison = evaluation.compare(singles, multis)
    out = Path(args.out)
    out.with_suffix(".json").write_text(
        json.dumps(comparison.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = evaluation.render_comparison_text(comparison)
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


# --- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blm",
        description="Generate BLM datasets, encode them, and train/evaluate solvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="expand templates into a dataset file")
    p.add_argument("--task", required=True, help="agreement | caus | od")
    p.add_argument("--lex-type", required=True, help="lexicalisation type: I | II | III")
    p.add_argument("--count", type=int, required=True, help="number of instances")
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.add_argument("--lexicon", required=True, help="lexicon file path")
    p.add_argument("--out", required=True, help="output dataset (JSONL)")
    p.add_argument("--inventory", help="also write the {id, text} sentence inventory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("split", help="split a dataset into disjoint train/dev/test")
    p.add_argument("--data", required=True, help="input dataset")
    p.add_argument("--ratios", default="90:20:10", help="proportional weights a:b:c")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed")
    p.add_argument("--train", required=True, help="output train dataset")
    p.add_argument("--dev", required=True, help="output dev dataset")
    p.add_argument("--test", required=True, help="output test dataset")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("encode-mock", help="encode sentences with the hash mock encoder")
    p.add_argument("--data", action="append", required=True, help="dataset file (repeatable)")
    p.add_argument("--dim", type=int, default=768, help="embedding dimension")
    p.add_argument("--seed", type=int, default=0, help="encoder seed")
    p.add_argument("--out", required=True, help="output store file")
    p.set_defaults(func=lambda a: _cmd_encode(a, "mock"))

    p = sub.add_parser("encode-oracle", help="encode sentences with the structural oracle")
    p.add_argument("--data", action="append", required=True, help="dataset file (repeatable)")
    p.add_argument("--dim", type=int, default=128, help="embedding dimension (>= 32)")
    p.add_argument("--noise", type=float, default=0.1, help="noise scale outside the block")
    p.add_argument("--seed", type=int, default=0, help="encoder seed")
    p.add_argument("--out", required=True, help="output store file")
    p.set_defaults(func=lambda a: _cmd_encode(a, "oracle"))

    p = sub.add_parser("train", help="train per a config file")
    p.add_argument("--config", required=True, help="train config file (INI)")
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints on a test set")
    p.add_argument("--checkpoint", action="append", required=True,
                   help="checkpoint file (repeat for multi-run aggregation)")
    p.add_argument("--test", required=True, help="test dataset")
    p.add_argument("--store", required=True, help="embedding store")
    p.add_argument("--train-type", default="I", help="lexicalisation type trained on")
    p.add_argument("--out", required=True, help="output report (JSON)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="compare single-task vs multi-task reports")
    p.add_argument("--single", action="append", required=True, help="single-task report (repeatable)")
    p.add_argument("--multi", action="append", required=True, help="multi-task report (repeatable)")
    p.add_argument("--out", required=True, help="output basename (.json/.txt)")
    p.set_defaults(func=cmd_report)
    return parser


_ERROR_CATEGORIES = [
    (InadequateLexiconError, "inadequate-lexicon"),
    (LexiconError, "bad-format"),
    (DatasetFormatError, "bad-format"),
    (StoreFormatError, "bad-format"),
    (SplitError, "split"),
    (MissingEmbeddingError, "missing-embedding"),
    (FileNotFoundError, "missing-file"),
    (ValueError, "usage"),
    (RuntimeError, "runtime"),
]


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc.detail}", file=sys.stderr)
        return 1
    except tuple(cls for cls, _ in _ERROR_CATEGORIES) as exc:
        category = next(cat for cls, cat in _ERROR_CATEGORIES if isinstance(exc, cls))
        print(f"error: {category}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
