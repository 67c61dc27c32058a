"""Sentence-embedding storage plus deterministic test encoders.

The on-disk store is a little-endian binary file so any encoder, in any
language, can produce it:

    magic "BLME" | u32 version=1 | u32 dim | u64 count
    then per record: u32 id-length | id bytes (UTF-8) | dim * f32

Two model-free encoders back the test suite: ``mock_encode`` (a pure hash
of the text, structure-blind) and ``oracle_encode`` (writes the sentence's
chunk structure into a fixed coordinate block, making structural probing
trivially possible by construction).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Number, Role, SentenceRecord

MAGIC = b"BLME"
VERSION = 1

# Oracle layout: 4 chunk positions x (4 role-sign-bits + 2 number-sign-bits),
# then a coordination bit and a voice bit.  All block coordinates are +-1 so
# the structure survives sign-thresholding.
ORACLE_POSITIONS = 4
ORACLE_ROLE_BITS = 4
ORACLE_BLOCK_DIM = ORACLE_POSITIONS * (ORACLE_ROLE_BITS + 2) + 2
ORACLE_MIN_DIM = 32

_ROLE_IDS = {role: i + 1 for i, role in enumerate(Role)}  # 0 means "no chunk"
_ROLES_BY_ID = {i: r for r, i in _ROLE_IDS.items()}


class StoreFormatError(ValueError):
    """Corrupt or incompatible store file."""


class MissingEmbeddingError(KeyError):
    """A dataset references sentence ids absent from the store."""

    def __init__(self, missing: list[str]):
        self.missing = missing
        shown = ", ".join(missing[:10])
        more = f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""
        super().__init__(f"{len(missing)} sentence id(s) missing from store: {shown}{more}")


@dataclass
class EmbeddingStore:
    """Map from sentence id to a fixed-dimension float32 vector."""

    dim: int
    entries: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")

    def add(self, sentence_id: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise ValueError(f"vector for {sentence_id} has shape {vec.shape}, want ({self.dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"vector for {sentence_id} contains NaN/Inf")
        self.entries[sentence_id] = vec

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, sentence_id: str) -> bool:
        return sentence_id in self.entries

    def get(self, sentence_id: str) -> np.ndarray:
        try:
            return self.entries[sentence_id]
        except KeyError:
            raise MissingEmbeddingError([sentence_id]) from None

    def require_ids(self, ids) -> None:
        """Hard-fail listing (up to the first 10) unresolvable ids."""
        missing = [i for i in ids if i not in self.entries]
        if missing:
            raise MissingEmbeddingError(missing)

    def matrix(self, ids) -> np.ndarray:
        """Stack vectors for ``ids`` as float64 rows, in order."""
        self.require_ids(ids)
        return np.stack([self.entries[i] for i in ids]).astype(np.float64)


def store_write(store: EmbeddingStore, path: str | Path) -> None:
    for sentence_id, vec in store.entries.items():
        if not np.all(np.isfinite(vec)):
            raise StoreFormatError(f"refusing to write non-finite vector for {sentence_id}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, store.dim, len(store.entries)))
        for sentence_id, vec in store.entries.items():
            raw = sentence_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def store_read(path: str | Path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise StoreFormatError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 20:
        raise StoreFormatError(f"{path}: truncated header")
    version, dim, count = struct.unpack_from("<IIQ", data, 4)
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    store = EmbeddingStore(dim=dim)
    offset = 20
    for n in range(count):
        if offset + 4 > len(data):
            raise StoreFormatError(f"{path}: truncated at record {n}")
        (id_len,) = struct.unpack_from("<I", data, offset)
        offset += 4
        vec_bytes = dim * 4
        if offset + id_len + vec_bytes > len(data):
            raise StoreFormatError(f"{path}: truncated at record {n}")
        sentence_id = data[offset:offset + id_len].decode("utf-8")
        offset += id_len
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += vec_bytes
        if not np.all(np.isfinite(vec)):
            raise StoreFormatError(f"{path}: non-finite payload for id {sentence_id}")
        if sentence_id in store.entries:
            raise StoreFormatError(f"{path}: duplicate id {sentence_id}")
        store.entries[sentence_id] = vec
    if offset != len(data):
        raise StoreFormatError(f"{path}: {len(data) - offset} trailing byte(s)")
    return store


def _text_rng(text: str, seed: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{text}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def mock_encode(record: SentenceRecord, dim: int, seed: int) -> np.ndarray:
    """Structure-blind stand-in for a real encoder: a unit vector drawn from
    a PRNG keyed on (text, seed)."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    vec = _text_rng(record.text, seed).standard_normal(dim)
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32)


def structural_block(record: SentenceRecord) -> np.ndarray:
    """The +-1 coordinate block encoding roles, numbers, coordination, voice."""
    if len(record.chunks) > ORACLE_POSITIONS:
        raise ValueError(f"structural block supports up to {ORACLE_POSITIONS} chunks, "
                         f"got {len(record.chunks)}")
    block = -np.ones(ORACLE_BLOCK_DIM)
    for pos in range(ORACLE_POSITIONS):
        base = pos * ORACLE_ROLE_BITS
        role_id = _ROLE_IDS[record.chunks[pos].role] if pos < len(record.chunks) else 0
        for bit in range(ORACLE_ROLE_BITS):
            if (role_id >> bit) & 1:
                block[base + bit] = 1.0
        nbase = ORACLE_POSITIONS * ORACLE_ROLE_BITS + pos * 2
        number = record.chunks[pos].number if pos < len(record.chunks) else Number.NA
        if number is Number.SG:
            block[nbase] = 1.0
        elif number is Number.PL:
            block[nbase + 1] = 1.0
    if any(c.coord for c in record.chunks):
        block[-2] = 1.0
    if any(c.role is Role.PASS_V for c in record.chunks):
        block[-1] = 1.0
    return block


def decode_structural(vector: np.ndarray):
    """Sign-threshold the block back into (roles, numbers, coord, voice)."""
    bits = vector[:ORACLE_BLOCK_DIM] > 0
    roles, numbers = [], []
    for pos in range(ORACLE_POSITIONS):
        base = pos * ORACLE_ROLE_BITS
        role_id = sum(1 << b for b in range(ORACLE_ROLE_BITS) if bits[base + b])
        roles.append(_ROLES_BY_ID.get(role_id))
        nbase = ORACLE_POSITIONS * ORACLE_ROLE_BITS + pos * 2
        is_sg, is_pl = bits[nbase], bits[nbase + 1]
        numbers.append(Number.SG if is_sg and not is_pl
                       else Number.PL if is_pl and not is_sg
                       else Number.NA)
    return tuple(roles), tuple(numbers), bool(bits[-2]), bool(bits[-1])


def oracle_encode(record: SentenceRecord, dim: int, noise: float, seed: int) -> np.ndarray:
    """Idealized encoder: the structural block occupies the leading
    coordinates exactly; the rest is seeded Gaussian noise scaled by
    ``noise``.  The result is unit-normalized."""
    if dim < ORACLE_MIN_DIM:
        raise ValueError(f"dim {dim} too small for the structural block (need >= {ORACLE_MIN_DIM})")
    vec = np.zeros(dim)
    vec[:ORACLE_BLOCK_DIM] = structural_block(record)
    if dim > ORACLE_BLOCK_DIM:
        vec[ORACLE_BLOCK_DIM:] = noise * _text_rng(record.text, seed).standard_normal(dim - ORACLE_BLOCK_DIM)
    vec /= np.linalg.norm(vec)
    return vec.astype(np.float32)


def encode_dataset(instances, dim: int, seed: int, *, encoder: str = "mock",
                   noise: float = 0.1) -> EmbeddingStore:
    """Encode every distinct sentence of ``instances`` with one of the two
    built-in encoders."""
    from .generator import sentence_inventory

    store = EmbeddingStore(dim=dim)
    for rec in sentence_inventory(instances):
        if encoder == "mock":
            store.add(rec.id, mock_encode(rec, dim, seed))
        elif encoder == "oracle":
            store.add(rec.id, oracle_encode(rec, dim, noise, seed))
        else:
            raise ValueError(f"unknown encoder {encoder!r}")
    return store
