"""Shared fixtures: a tiny offline encoder, plus a raw wire-format walker."""
import pathlib
import struct

import numpy as np
import pytest
import torch
from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors
from transformers import (
    BertConfig,
    BertForTokenClassification,
    PreTrainedTokenizerFast,
)

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "and", "with", "a", "in",
    "sql", "python", "team", "##work", "skill", "##s",
    "data", "##base", "manage", "##ment", "clean", "##ing",
    "write", "query", "##ies", "plan",
]


def walk_raw(path):
    """Decode an ETS1 file field by field, independent of any library reader.

    Returns (version, dim, dataset_id, sentences) where each sentence is a
    list of (text, gold_ordinal, embedding f32 array, base f32 triple) with
    the stored values untouched: no renormalization, no float widening.
    """
    buf = pathlib.Path(path).read_bytes()
    assert buf[:4] == b"ETS1"
    version, dim, n_labels, ds_len = struct.unpack_from("<IIIH", buf, 4)
    assert n_labels == 3
    off = 18
    dataset_id = buf[off : off + ds_len].decode("utf-8")
    off += ds_len
    (n_sentences,) = struct.unpack_from("<Q", buf, off)
    off += 8
    sentences = []
    for _ in range(n_sentences):
        (n_tokens,) = struct.unpack_from("<I", buf, off)
        off += 4
        tokens = []
        for _ in range(n_tokens):
            (text_len,) = struct.unpack_from("<H", buf, off)
            off += 2
            text = buf[off : off + text_len].decode("utf-8")
            off += text_len
            gold = buf[off]
            off += 1
            emb = np.frombuffer(buf, dtype="<f4", count=dim, offset=off).copy()
            off += 4 * dim
            base = np.frombuffer(buf, dtype="<f4", count=3, offset=off).copy()
            off += 12
            tokens.append((text, gold, emb, base))
        sentences.append(tokens)
    assert off == len(buf), "trailing bytes"
    return version, dim, dataset_id, sentences


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {tok: i for i, tok in enumerate(VOCAB)}
    tk = Tokenizer(models.WordPiece(vocab=vocab, unk_token="[UNK]"))
    tk.normalizer = normalizers.BertNormalizer(lowercase=True)
    tk.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    tk.post_processor = processors.BertProcessing(
        sep=("[SEP]", vocab["[SEP]"]), cls=("[CLS]", vocab["[CLS]"])
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tk,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )


def build_model(id2label: dict[int, str], seed: int = 0) -> BertForTokenClassification:
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=96,
        num_labels=3,
        id2label=id2label,
        label2id={v: k for k, v in id2label.items()},
    )
    torch.manual_seed(seed)
    model = BertForTokenClassification(config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory) -> str:
    d = tmp_path_factory.mktemp("tiny_encoder")
    build_tokenizer().save_pretrained(d)
    build_model({0: "O", 1: "B", 2: "I"}).save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def two_label_model_dir(tmp_path_factory) -> str:
    d = tmp_path_factory.mktemp("tiny_encoder_2lab")
    build_tokenizer().save_pretrained(d)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=16,
        num_hidden_layers=1,
        num_attention_heads=2,
        intermediate_size=32,
        max_position_embeddings=96,
        num_labels=2,
        id2label={0: "NEG", 1: "POS"},
        label2id={"NEG": 0, "POS": 1},
    )
    torch.manual_seed(0)
    BertForTokenClassification(config).save_pretrained(d)
    return str(d)


@pytest.fixture(scope="session")
def permuted_model_dir(tmp_path_factory) -> str:
    """Same encoder weights with the classifier head stored in B, I, O order."""
    d = tmp_path_factory.mktemp("tiny_encoder_permuted")
    build_tokenizer().save_pretrained(d)
    base = build_model({0: "O", 1: "B", 2: "I"})
    permuted = build_model({0: "B", 1: "I", 2: "O"})
    state = base.state_dict()
    # old ordinal (O,B,I) -> new rows (B,I,O): new row 0 is old 1, etc.
    take = torch.tensor([1, 2, 0])
    state["classifier.weight"] = state["classifier.weight"][take]
    state["classifier.bias"] = state["classifier.bias"][take]
    permuted.load_state_dict(state)
    permuted.eval()
    permuted.save_pretrained(d)
    return str(d)
