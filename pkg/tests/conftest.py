from __future__ import annotations

import pytest

from toxic_spans import sample_corpus_path
from toxic_spans.corpus import load_comments, split_corpus
from toxic_spans.encoding import HashingTokenizer, HFTokenizerAdapter, WordTokenizer


@pytest.fixture(scope="session")
def comments():
    return load_comments(sample_corpus_path())


@pytest.fixture(scope="session")
def sentences(comments):
    return split_corpus(comments)


def _train_texts(comments):
    return [c.text for c in comments] * 2


def _wordpiece(comments):
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, processors, trainers
    from transformers import PreTrainedTokenizerFast

    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    trainer = trainers.WordPieceTrainer(
        vocab_size=300, special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]"]
    )
    tok.train_from_iterator(_train_texts(comments), trainer)
    cls_id, sep_id = tok.token_to_id("[CLS]"), tok.token_to_id("[SEP]")
    tok.post_processor = processors.TemplateProcessing(
        single="[CLS] $A [SEP]", special_tokens=[("[CLS]", cls_id), ("[SEP]", sep_id)]
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="[PAD]", unk_token="[UNK]", cls_token="[CLS]", sep_token="[SEP]"
    )
    return HFTokenizerAdapter(fast, name="wordpiece-local")


def _bytelevel_bpe(comments):
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers, processors, trainers
    from transformers import PreTrainedTokenizerFast

    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=400,
        special_tokens=["<s>", "<pad>", "</s>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
    )
    tok.train_from_iterator(_train_texts(comments), trainer)
    tok.post_processor = processors.RobertaProcessing(
        ("</s>", tok.token_to_id("</s>")), ("<s>", tok.token_to_id("<s>")), trim_offsets=True
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, bos_token="<s>", eos_token="</s>", pad_token="<pad>"
    )
    return HFTokenizerAdapter(fast, name="bpe-local")


@pytest.fixture(scope="session")
def wordpiece_adapter(comments):
    return _wordpiece(comments)


@pytest.fixture(scope="session")
def bpe_adapter(comments):
    return _bytelevel_bpe(comments)


@pytest.fixture(scope="session")
def adapter_suite(wordpiece_adapter, bpe_adapter):
    """Every adapter that can be built offline: rule-based and HF fast tokenizers."""
    return [WordTokenizer(), HashingTokenizer(), wordpiece_adapter, bpe_adapter]


# acceptance verdicts, printed together at the end of the run
ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
