import json
import random

import pytest
import torch
from tokenizers import Tokenizer, models, pre_tokenizers
from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

WORDS = (
    "the a an cat dog bird fish tree rock river cloud light dark "
    "fast slow big small red blue green yellow what which is of on "
    "under over near color size kind sort animal object thing place "
    "question choose best answer first second third fourth one two "
    "three four warm cold wet dry loud quiet old new"
).split()

SPECIALS = ["A", "B", "C", "D", "Answer", ":", ".", "?", "[UNK]", "[PAD]"]


def build_tokenizer():
    vocab = {}
    for token in SPECIALS + WORDS:
        vocab.setdefault(token, len(vocab))
    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.Whitespace()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", pad_token="[PAD]"
    )


def build_model(tokenizer, n_layer=4, seed=0):
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=len(tokenizer.get_vocab()),
        n_positions=256,
        n_embd=32,
        n_layer=n_layer,
        n_head=4,
        bos_token_id=None,
        eos_token_id=None,
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    return model


def write_mcqa(path, n_items=120, seed=1):
    rng = random.Random(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n_items):
            q_words = rng.sample(WORDS, 6)
            choices = [" ".join(rng.sample(WORDS, 2)) for _ in range(4)]
            item = {
                "id": f"q{i:04d}",
                "question": "what " + " ".join(q_words) + " ?",
                "choices": choices,
                "answer_index": rng.randrange(4),
            }
            fh.write(json.dumps(item) + "\n")
    return path


@pytest.fixture(scope="session")
def model_dirs(tmp_path_factory):
    """Save a tiny random-weight small model (4 blocks) and large model
    (2 blocks, different seed) with a shared word-level tokenizer."""
    root = tmp_path_factory.mktemp("models")
    tokenizer = build_tokenizer()
    small_dir = root / "small"
    large_dir = root / "large"
    small = build_model(tokenizer, n_layer=4, seed=0)
    large = build_model(tokenizer, n_layer=2, seed=7)
    small.save_pretrained(small_dir)
    large.save_pretrained(large_dir)
    tokenizer.save_pretrained(small_dir)
    tokenizer.save_pretrained(large_dir)
    return {"small": str(small_dir), "large": str(large_dir)}


@pytest.fixture(scope="session")
def mcqa_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "questions.jsonl"
    return str(write_mcqa(path))
