import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))


@pytest.fixture(scope="session")
def tiny_electra(tmp_path_factory):
    """A randomly initialized Electra with the paper-scale hidden size (768)
    but a single layer and a character-level vocabulary, saved locally so
    tests never touch the network."""
    from transformers import ElectraConfig, ElectraModel, ElectraTokenizerFast

    model_dir = tmp_path_factory.mktemp("tiny-electra")
    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + list(
        "abcdefghijklmnopqrstuvwxyzàèéìòù'")
    (model_dir / "vocab.txt").write_text("\n".join(vocab), encoding="utf-8")
    tokenizer = ElectraTokenizerFast(str(model_dir / "vocab.txt"), do_lower_case=True)
    config = ElectraConfig(vocab_size=len(vocab), hidden_size=768,
                           num_hidden_layers=1, num_attention_heads=4,
                           intermediate_size=128, embedding_size=32,
                           max_position_embeddings=64)
    torch.manual_seed(1234)
    model = ElectraModel(config)
    model.eval()
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture(scope="session")
def inventory_path(tmp_path_factory):
    """A genuine inventory produced by the primary toolkit: the 15 sentences
    of one generated agreement instance."""
    from blmkit.data import LexType, Task
    from blmkit.generator import generate, sentence_inventory, write_inventory
    from blmkit.lexicon import demo_lexicon

    instances = generate(Task.AGREEMENT, LexType.TYPE_III, demo_lexicon(), 1, seed=5)
    records = sentence_inventory(instances)
    path = tmp_path_factory.mktemp("inventory") / "sentences.jsonl"
    write_inventory(records, path)
    return str(path), [rec.id for rec in records]
