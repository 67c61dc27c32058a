import struct

import numpy as np
import pytest

from blmkit.data import Chunk, Number, Role, SentenceRecord, Task
from blmkit.embeddings import (
    ORACLE_BLOCK_DIM,
    EmbeddingStore,
    MissingEmbeddingError,
    StoreFormatError,
    decode_structural,
    encode_dataset,
    mock_encode,
    oracle_encode,
    store_read,
    store_write,
    structural_block,
)
from blmkit.generator import sentence_inventory


def _random_store(rng, dim, count):
    store = EmbeddingStore(dim=dim)
    for i in range(count):
        store.add(f"id-{i:04d}", rng.standard_normal(dim).astype(np.float32))
    return store


def test_store_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    for trial in range(20):
        dim = int(rng.integers(1, 40))
        count = int(rng.integers(0, 30))
        store = _random_store(rng, dim, count)
        path = tmp_path / f"s{trial}.blme"
        store_write(store, path)
        loaded = store_read(path)
        assert loaded.dim == store.dim
        assert list(loaded.entries) == list(store.entries)
        for key in store.entries:
            assert loaded.entries[key].dtype == np.float32
            assert np.array_equal(loaded.entries[key], store.entries[key])


def test_store_empty_roundtrip(tmp_path):
    path = tmp_path / "empty.blme"
    store_write(EmbeddingStore(dim=768), path)
    assert path.stat().st_size == 20  # header only
    loaded = store_read(path)
    assert loaded.dim == 768 and len(loaded) == 0


def test_store_bad_magic(tmp_path):
    path = tmp_path / "bad.blme"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(StoreFormatError, match="magic"):
        store_read(path)


def test_store_bad_version(tmp_path):
    path = tmp_path / "badv.blme"
    path.write_bytes(b"BLME" + struct.pack("<IIQ", 99, 4, 0))
    with pytest.raises(StoreFormatError, match="version"):
        store_read(path)


def test_store_truncated_record(tmp_path):
    # header claims dim 768 but the record carries only 767 floats
    path = tmp_path / "trunc.blme"
    payload = np.zeros(767, dtype="<f4").tobytes()
    raw = b"BLME" + struct.pack("<IIQ", 1, 768, 1) + struct.pack("<I", 2) + b"ab" + payload
    path.write_bytes(raw)
    with pytest.raises(StoreFormatError, match="truncated"):
        store_read(path)


def test_store_rejects_nan_payload(tmp_path):
    path = tmp_path / "nan.blme"
    vec = np.zeros(4, dtype="<f4")
    vec[1] = np.nan
    raw = b"BLME" + struct.pack("<IIQ", 1, 4, 1) + struct.pack("<I", 1) + b"a" + vec.tobytes()
    path.write_bytes(raw)
    with pytest.raises(StoreFormatError, match="non-finite"):
        store_read(path)
    store = EmbeddingStore(dim=4)
    with pytest.raises(ValueError, match="NaN/Inf"):
        store.add("a", np.array([1.0, np.inf, 0.0, 0.0]))


def test_store_trailing_bytes(tmp_path):
    path = tmp_path / "trail.blme"
    store_write(EmbeddingStore(dim=2), path)
    path.write_bytes(path.read_bytes() + b"junk")
    with pytest.raises(StoreFormatError, match="trailing"):
        store_read(path)


def test_missing_ids_reports_first_ten():
    store = EmbeddingStore(dim=4)
    store.add("present", np.zeros(4, dtype=np.float32))
    wanted = [f"gone-{i:02d}" for i in range(15)] + ["present"]
    with pytest.raises(MissingEmbeddingError) as err:
        store.require_ids(wanted)
    message = str(err.value)
    assert "gone-00" in message and "gone-09" in message
    assert "gone-10" not in message
    assert "+5 more" in message
    assert err.value.missing == wanted[:15]


# --- mock encoder ---------------------------------------------------------

def _record(text):
    chunks = (Chunk(Role.NP_SUBJ, Number.SG, text), Chunk(Role.VP, Number.SG, "cade"))
    return SentenceRecord.build(Task.AGREEMENT, chunks)


def test_mock_encode_deterministic_and_unit_norm():
    rec = _record("il vaso")
    a = mock_encode(rec, 64, seed=5)
    b = mock_encode(rec, 64, seed=5)
    assert np.array_equal(a, b)
    assert abs(np.linalg.norm(a.astype(np.float64)) - 1.0) < 1e-6
    assert not np.array_equal(a, mock_encode(rec, 64, seed=6))


def test_mock_encode_distinct_texts_not_collinear():
    # Monte Carlo: 1000 random pairs never reach |cos| 0.99
    records = [_record(f"frase {i}") for i in range(1000)]
    vecs = np.stack([mock_encode(r, 48, seed=1).astype(np.float64) for r in records])
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        i, j = rng.choice(len(records), size=2, replace=False)
        worst = max(worst, abs(float(vecs[i] @ vecs[j])))
    assert worst < 0.99


# --- oracle encoder ---------------------------------------------------------

def test_oracle_same_structure_same_block(agr_instances):
    inst_a, inst_b = agr_instances[0], agr_instances[1]
    # same template position in two different lexicalizations: same pattern
    rec_a, rec_b = inst_a.context[0], inst_b.context[0]
    assert rec_a.pattern_tag == rec_b.pattern_tag
    assert np.array_equal(structural_block(rec_a), structural_block(rec_b))
    va = oracle_encode(rec_a, 64, noise=0.0, seed=3)
    vb = oracle_encode(rec_b, 64, noise=0.0, seed=3)
    assert np.array_equal(va, vb)


def test_oracle_number_flip_changes_only_number_coordinates():
    sg = SentenceRecord.build(Task.AGREEMENT, (
        Chunk(Role.NP_SUBJ, Number.SG, "il vaso"), Chunk(Role.VP, Number.SG, "cade")))
    pl = SentenceRecord.build(Task.AGREEMENT, (
        Chunk(Role.NP_SUBJ, Number.PL, "i vasi"), Chunk(Role.VP, Number.SG, "cade")))
    diff = structural_block(sg) != structural_block(pl)
    # position 0 owns number coordinates 16 and 17
    assert set(np.flatnonzero(diff)) == {16, 17}
    # with zero noise the block norm is constant, so the normalized vectors
    # also differ exactly there
    vs = oracle_encode(sg, 64, noise=0.0, seed=0).astype(np.float64)
    vp = oracle_encode(pl, 64, noise=0.0, seed=0).astype(np.float64)
    assert set(np.flatnonzero(vs != vp)) == {16, 17}


def test_oracle_rejects_small_dim(agr_instances):
    rec = agr_instances[0].context[0]
    with pytest.raises(ValueError, match="too small"):
        oracle_encode(rec, 16, noise=0.0, seed=0)
    assert oracle_encode(rec, 32, noise=0.0, seed=0).shape == (32,)


def test_oracle_block_recoverable_under_noise(agr_instances, od_instances):
    # Monte Carlo: sign-thresholding recovers the block for >= 99% of 1000
    # noisy encodings (the block coordinates themselves are noise-free)
    records = []
    for inst in list(agr_instances) + list(od_instances):
        records.extend(rec for rec in inst.all_sentences)
    records = records[:1000] if len(records) >= 1000 else records * (1000 // len(records) + 1)
    records = records[:1000]
    hits = 0
    for i, rec in enumerate(records):
        vec = oracle_encode(rec, 128, noise=0.1, seed=i).astype(np.float64)
        roles, numbers, coord, voice = decode_structural(vec)
        expect_roles = tuple(c.role for c in rec.chunks) + (None,) * (4 - len(rec.chunks))
        expect_numbers = tuple(c.number for c in rec.chunks) + (Number.NA,) * (4 - len(rec.chunks))
        ok = (roles == expect_roles and numbers == expect_numbers
              and coord == any(c.coord for c in rec.chunks)
              and voice == any(c.role is Role.PASS_V for c in rec.chunks))
        hits += ok
    assert hits / len(records) >= 0.99


def test_encode_dataset_covers_inventory(agr_instances):
    store = encode_dataset(agr_instances, dim=64, seed=1, encoder="oracle", noise=0.05)
    inventory = sentence_inventory(agr_instances)
    assert len(store) == len(inventory)
    store.require_ids([rec.id for rec in inventory])
    with pytest.raises(ValueError, match="unknown encoder"):
        encode_dataset(agr_instances, dim=64, seed=1, encoder="bogus")
