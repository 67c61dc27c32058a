#!/usr/bin/env python3
"""Export [CLS] sentence embeddings for a BLM sentence inventory.

Reads a line-oriented inventory of ``{"id": ..., "text": ...}`` records,
runs them through a pretrained transformer encoder (Italian Electra by
default) and writes the binary embedding store consumed by the training
toolkit:

    magic "BLME" | u32 version=1 | u32 dim | u64 count
    per record:    u32 id-length | id bytes (UTF-8) | dim * f32 (LE)

Inference runs in eval mode with no dropout, so the same inventory and
model always produce a bit-identical store.  The file is written to a
temp path and renamed into place once complete.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import struct
import sys
import tempfile
from pathlib import Path

import numpy as np
import torch
from transformers import AutoModel, AutoTokenizer

MAGIC = b"BLME"
VERSION = 1
DEFAULT_MODEL = "dbmdz/electra-base-italian-xxl-cased-discriminator"

log = logging.getLogger("encoder_bridge")


def read_inventory(path: str | Path) -> list[tuple[str, str]]:
    """Parse the {id, text} inventory; ids must be unique."""
    records: list[tuple[str, str]] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                sentence_id, text = row["id"], row["text"]
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed inventory record: {exc}") from exc
            if sentence_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {sentence_id}")
            seen.add(sentence_id)
            records.append((sentence_id, text))
    return records


def write_store(path: str | Path, dim: int, rows: list[tuple[str, np.ndarray]]) -> None:
    """Write the store atomically (temp file + rename)."""
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<IIQ", VERSION, dim, len(rows)))
            for sentence_id, vector in rows:
                if vector.shape != (dim,):
                    raise ValueError(f"vector for {sentence_id} has shape {vector.shape}")
                if not np.all(np.isfinite(vector)):
                    raise ValueError(f"non-finite embedding for {sentence_id}")
                raw = sentence_id.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(np.ascontiguousarray(vector, dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _max_length(tokenizer, model) -> int:
    limit = getattr(model.config, "max_position_embeddings", None) or 512
    tk_limit = getattr(tokenizer, "model_max_length", None)
    if tk_limit and tk_limit < 1_000_000:  # unset tokenizers report a huge sentinel
        limit = min(limit, tk_limit)
    return int(limit)


def encode_inventory(inventory: str | Path, model_id: str, out: str | Path,
                     batch_size: int = 32) -> tuple[int, int]:
    """Encode every inventory sentence to its last-layer [CLS] vector.

    Returns (count, dim).  Sentences longer than the encoder's limit are
    truncated with a per-id warning; generated BLM sentences are short, so
    this should never trigger on toolkit data.
    """
    records = read_inventory(inventory)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id)
    model.eval()
    dim = int(model.config.hidden_size)
    max_length = _max_length(tokenizer, model)

    rows: list[tuple[str, np.ndarray]] = []
    with torch.no_grad():
        for start in range(0, len(records), batch_size):
            batch = records[start:start + batch_size]
            texts = [text for _, text in batch]
            lengths = [len(ids) for ids in tokenizer(texts)["input_ids"]]
            for (sentence_id, _), n_tokens in zip(batch, lengths):
                if n_tokens > max_length:
                    log.warning("truncating %s: %d tokens > limit %d",
                                sentence_id, n_tokens, max_length)
            encoded = tokenizer(texts, return_tensors="pt", padding=True,
                                truncation=True, max_length=max_length)
            hidden = model(**encoded).last_hidden_state
            cls = hidden[:, 0, :].to(torch.float32).cpu().numpy()
            rows.extend((sentence_id, cls[i]) for i, (sentence_id, _) in enumerate(batch))

    write_store(out, dim, rows)
    return len(rows), dim


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Encode a sentence inventory into a binary embedding store.")
    parser.add_argument("--inventory", required=True, help="inventory JSONL ({id, text} per line)")
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help=f"encoder identifier or local path (default: {DEFAULT_MODEL})")
    parser.add_argument("--out", required=True, help="output store file")
    parser.add_argument("--batch", type=int, default=32, help="batch size")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    if not Path(args.inventory).exists():
        print(f"error: inventory not found: {args.inventory}", file=sys.stderr)
        return 1
    try:
        count, dim = encode_inventory(args.inventory, args.model, args.out, args.batch)
    except Exception as exc:  # model load and parse failures surface one line
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"encoded {count} sentences at dim {dim} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
