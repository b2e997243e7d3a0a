"""Builds tiny local models for bridge tests.

The masked model is actually trained (full-batch, fixed seeds, a few
seconds on CPU) to copy an answer hinted earlier in the sentence into the
mask slot, so scoring tests have real signal. The seq2seq and causal models
are random-init shape probes: protocol conformance and determinism do not
depend on their weights.
"""

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.normalizers import BertNormalizer
from tokenizers.pre_tokenizers import BertPreTokenizer
from tokenizers.processors import TemplateProcessing
from transformers import (
    BertConfig,
    BertForMaskedLM,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

SPECIALS = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "<extra_id_0>"]
WORDS = [
    "the", "answer", "is", "a", "an", "of", "in", "at", "to", ".", ",",
    "paris", "london", "berlin", "oslo", "tokyo", "madrid",
    "anne", "idun", "lovisa", "verner", "malte", "redpath", "subject",
    "died", "expired", "passed", "away", "lives", "capital", "city",
    "profile", "linked", "page", "about",
]
VOCAB = SPECIALS + WORDS

ANSWERS = ["paris", "london", "berlin", "oslo", "tokyo", "madrid"]
SUBJECT_NAMES = ["anne", "idun", "lovisa", "verner", "malte"]
TRAIN_PATTERNS = [
    "the answer is {w} . {s} is [MASK] .",
    "the answer is {w} . {s} lives in [MASK] .",
    "the answer is {w} . {s} died in [MASK] .",
]


def build_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {w: i for i, w in enumerate(VOCAB)}
    t = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    t.normalizer = BertNormalizer(lowercase=True)
    t.pre_tokenizer = BertPreTokenizer()
    t.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=t,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
        additional_special_tokens=["<extra_id_0>"],
    )


def train_copy_mlm(tokenizer: PreTrainedTokenizerFast) -> BertForMaskedLM:
    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=48,
        num_hidden_layers=2,
        num_attention_heads=4,
        intermediate_size=96,
        max_position_embeddings=64,
    )
    model = BertForMaskedLM(config)
    texts, targets = [], []
    for pattern in TRAIN_PATTERNS:
        for w in ANSWERS:
            for s in SUBJECT_NAMES:
                texts.append(pattern.format(w=w, s=s))
                targets.append(tokenizer.convert_tokens_to_ids(w))
    enc = tokenizer(texts, return_tensors="pt", padding=True)
    labels = torch.full_like(enc["input_ids"], -100)
    for i in range(len(texts)):
        pos = (enc["input_ids"][i] == tokenizer.mask_token_id).nonzero()[0, 0]
        labels[i, pos] = targets[i]
    optimizer = torch.optim.AdamW(model.parameters(), lr=3e-3)
    model.train()
    for _ in range(200):
        out = model(**enc, labels=labels)
        out.loss.backward()
        optimizer.step()
        optimizer.zero_grad()
    assert out.loss.item() < 0.05, f"copy training did not converge: {out.loss.item()}"
    model.eval()
    return model


@pytest.fixture(scope="session")
def masked_model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-masked")
    tokenizer = build_tokenizer()
    model = train_copy_mlm(tokenizer)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def seq2seq_model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-seq2seq")
    tokenizer = build_tokenizer()
    torch.manual_seed(1)
    config = T5Config(
        vocab_size=len(VOCAB),
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_decoder_layers=2,
        num_heads=2,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=3,
    )
    model = T5ForConditionalGeneration(config)
    model.eval()
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def causal_model_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tiny-causal")
    tokenizer = build_tokenizer()
    torch.manual_seed(2)
    config = GPT2Config(
        vocab_size=len(VOCAB),
        n_positions=64,
        n_embd=32,
        n_layer=2,
        n_head=2,
        bos_token_id=2,
        eos_token_id=3,
        pad_token_id=0,
    )
    model = GPT2LMHeadModel(config)
    model.eval()
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def passages_table(tmp_path_factory):
    import json

    path = tmp_path_factory.mktemp("tables") / "passages.jsonl"
    entries = []
    for name in SUBJECT_NAMES:
        entries.append(
            {
                "match": name,
                "passages": [
                    {
                        "passage_id": f"{name}-p0",
                        "title": f"{name} page",
                        "text": f"page about {name} . {name} lives in paris .",
                    },
                    {
                        "passage_id": f"{name}-p1",
                        "title": f"{name} page",
                        "text": f"profile of {name} . the answer is paris .",
                    },
                ],
            }
        )
    path.write_text("\n".join(json.dumps(e) for e in entries) + "\n")
    return path
