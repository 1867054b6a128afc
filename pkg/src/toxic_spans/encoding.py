"""Token-level IO encoding of sentence spans, and the way back to text.

A tokenizer adapter turns a sentence into a fixed-length sequence of token
ids with ``[start, end)`` character offsets and a flag for special tokens
(sequence start/end and padding).  :func:`encode` labels a token 1 when its
offset range touches at least one non-whitespace annotated character.
"""

from __future__ import annotations

import json
import os
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .corpus import SentenceSample

MAX_LEN = 70
TAG_OPEN = "<toxic>"
TAG_CLOSE = "</toxic>"

# Hub checkpoints behind the encoder families the models are built on.
ENCODER_CHECKPOINTS = {
    "bert-base": "bert-base-uncased",
    "roberta-base": "roberta-base",
    "distilbert-base": "distilbert-base-uncased",
    "albert-base": "albert-base-v2",
    "xlnet-base": "xlnet-base-cased",
}


class AdapterContractError(ValueError):
    """A tokenizer adapter produced offsets that break the adapter contract."""


@dataclass
class TokenizedText:
    tokens: list[str]
    input_ids: list[int]
    offsets: list[tuple[int, int]]
    special: list[bool]
    attention_mask: list[int]


class TokenizerAdapter(Protocol):
    name: str

    def tokenize(self, text: str, max_len: int = MAX_LEN) -> TokenizedText:
        """Tokenize, truncate and pad ``text`` to exactly ``max_len`` positions."""


def _assemble(
    pieces: Sequence[tuple[str, int, int, int]],
    max_len: int,
    bos: tuple[str, int] | None,
    eos: tuple[str, int] | None,
    pad: tuple[str, int],
) -> TokenizedText:
    """Lay out ``bos + pieces + eos`` then pad, truncating pieces to fit."""
    room = max_len - (bos is not None) - (eos is not None)
    if room < 0:
        raise ValueError(f"max_len={max_len} leaves no room for special tokens")
    out = TokenizedText([], [], [], [], [])

    def push(tok, tid, start, end, special, mask=1):
        out.tokens.append(tok)
        out.input_ids.append(tid)
        out.offsets.append((start, end))
        out.special.append(special)
        out.attention_mask.append(mask)

    if bos:
        push(bos[0], bos[1], 0, 0, True)
    for tok, tid, start, end in pieces[:room]:
        push(tok, tid, start, end, False)
    if eos:
        push(eos[0], eos[1], 0, 0, True)
    while len(out.input_ids) < max_len:
        push(pad[0], pad[1], 0, 0, True, mask=0)
    return out


_PUNCT = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~“”‘’«»…"


@dataclass
class WordTokenizer:
    """Whitespace split with leading/trailing punctuation stripped.

    Internal apostrophes survive (``that's`` stays one token) and tokens that
    are pure punctuation disappear, so ``"it sucks horribly, that's fine"``
    yields five tokens.  No special tokens are emitted: position 0 is the
    first word.
    """

    name: str = "word"
    lowercase_ids: bool = True

    def spans(self, text: str) -> list[tuple[int, int]]:
        out = []
        for m in re.finditer(r"\S+", text):
            s, e = m.span()
            while s < e and text[s] in _PUNCT:
                s += 1
            while e > s and text[e - 1] in _PUNCT:
                e -= 1
            if s < e:
                out.append((s, e))
        return out

    def words(self, text: str) -> list[str]:
        return [text[s:e] for s, e in self.spans(text)]

    def tokenize(self, text: str, max_len: int = MAX_LEN) -> TokenizedText:
        pieces = [
            (text[s:e], _stable_id(text[s:e].lower(), 1 << 20) + 1, s, e)
            for s, e in self.spans(text)
        ]
        return _assemble(pieces, max_len, None, None, ("", 0))


def _stable_id(token: str, buckets: int) -> int:
    return zlib.crc32(token.encode("utf-8")) % buckets


@dataclass
class HashingTokenizer:
    """Word/punctuation tokenizer with hashed ids and BERT-style specials.

    Needs no vocabulary download, which makes it the tokenizer of the small
    randomly initialised test encoder.
    """

    vocab_size: int = 4096
    name: str = "hashing"
    pad_id: int = 0
    cls_id: int = 1
    sep_id: int = 2
    n_reserved: int = 3

    def tokenize(self, text: str, max_len: int = MAX_LEN) -> TokenizedText:
        pieces = []
        for m in re.finditer(r"\w+|[^\w\s]", text):
            tok = m.group()
            tid = self.n_reserved + _stable_id(tok.lower(), self.vocab_size - self.n_reserved)
            pieces.append((tok, tid, m.start(), m.end()))
        return _assemble(
            pieces, max_len, ("[CLS]", self.cls_id), ("[SEP]", self.sep_id), ("[PAD]", self.pad_id)
        )


@dataclass
class HFTokenizerAdapter:
    """Adapter over a HuggingFace *fast* tokenizer (offset mapping required)."""

    tokenizer: object
    name: str = "hf"

    @classmethod
    def from_pretrained(cls, name: str, cache_dir: str | None = None) -> "HFTokenizerAdapter":
        from transformers import AutoTokenizer

        checkpoint = ENCODER_CHECKPOINTS.get(name, name)
        cache_dir = cache_dir or os.environ.get("TOXIC_SPANS_CACHE")
        tok = AutoTokenizer.from_pretrained(checkpoint, use_fast=True, cache_dir=cache_dir)
        return cls(tok, name=name)

    def tokenize(self, text: str, max_len: int = MAX_LEN) -> TokenizedText:
        enc = self.tokenizer(
            text,
            max_length=max_len,
            truncation=True,
            padding="max_length",
            return_offsets_mapping=True,
            return_special_tokens_mask=True,
            return_attention_mask=True,
        )
        ids = list(enc["input_ids"])
        special = [bool(v) for v in enc["special_tokens_mask"]]
        mask = list(enc["attention_mask"])
        offsets = [
            (0, 0) if sp or not m else (int(s), int(e))
            for (s, e), sp, m in zip(enc["offset_mapping"], special, mask)
        ]
        special = [sp or not m for sp, m in zip(special, mask)]
        tokens = self.tokenizer.convert_ids_to_tokens(ids)
        return TokenizedText(tokens, ids, offsets, special, mask)


def get_tokenizer(name: str) -> TokenizerAdapter:
    """Resolve an adapter by name: ``word``, ``hashing`` or an encoder family."""
    if name == "word":
        return WordTokenizer()
    if name in ("hashing", "tiny-test-encoder"):
        return HashingTokenizer()
    return HFTokenizerAdapter.from_pretrained(name)


# -- encoding --------------------------------------------------------------------


@dataclass
class EncodedSample:
    sample_id: str
    input_ids: list[int]
    attention_mask: list[int]
    offset_mapping: list[tuple[int, int]]
    special: list[bool]
    target: list[int]
    truncated_span_chars: int = 0
    text: str = field(default="", repr=False)

    @property
    def valid(self) -> list[bool]:
        """Positions that can carry a label: attended and not special."""
        return [bool(m) and not sp for m, sp in zip(self.attention_mask, self.special)]

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "input_ids": self.input_ids,
            "attention_mask": self.attention_mask,
            "offset_mapping": [list(o) for o in self.offset_mapping],
            "special": [int(s) for s in self.special],
            "target": self.target,
            "truncated_span_chars": self.truncated_span_chars,
            "text": self.text,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EncodedSample":
        return cls(
            sample_id=d["sample_id"],
            input_ids=list(d["input_ids"]),
            attention_mask=list(d["attention_mask"]),
            offset_mapping=[tuple(o) for o in d["offset_mapping"]],
            special=[bool(s) for s in d["special"]],
            target=list(d["target"]),
            truncated_span_chars=d.get("truncated_span_chars", 0),
            text=d.get("text", ""),
        )


def check_adapter_output(tok: TokenizedText, text_len: int) -> None:
    """Offsets must be in bounds, non-decreasing and non-overlapping.

    Byte-level tokenizers split one multi-byte character into several tokens
    that all report that character's range; exact repeats are allowed.
    """
    prev = (0, 0)
    for i, ((s, e), sp) in enumerate(zip(tok.offsets, tok.special)):
        if sp:
            if s != e:
                raise AdapterContractError(f"special token {i} has non-empty offsets {(s, e)}")
            continue
        if not 0 <= s <= e <= text_len:
            raise AdapterContractError(f"token {i} offsets {(s, e)} outside text")
        if s < prev[0] or (s < prev[1] and e > s and (s, e) != prev):
            raise AdapterContractError(f"token {i} offsets {(s, e)} overlap a previous token")
        if e > s:
            prev = (s, e)


def encode(
    sentence: SentenceSample,
    tokenizer: TokenizerAdapter,
    max_len: int = MAX_LEN,
) -> EncodedSample:
    tok = tokenizer.tokenize(sentence.text, max_len)
    if len(tok.input_ids) != max_len:
        raise AdapterContractError(
            f"{tokenizer.name} returned {len(tok.input_ids)} positions, expected {max_len}"
        )
    text = sentence.text
    check_adapter_output(tok, len(text))

    labeled = [i for i in sentence.char_spans if not text[i].isspace()]
    is_labeled = bytearray(len(text))
    for i in labeled:
        is_labeled[i] = 1

    target = [0] * max_len
    covered_to = 0
    for i, ((s, e), sp) in enumerate(zip(tok.offsets, tok.special)):
        if sp or e <= s:
            continue
        covered_to = max(covered_to, e)
        if any(is_labeled[s:e]):
            target[i] = 1
    # a full sequence may have been truncated: count annotated characters it lost
    truncated = 0
    if all(tok.attention_mask):
        truncated = sum(1 for i in labeled if i >= covered_to)
    return EncodedSample(
        sample_id=sentence.sample_id,
        input_ids=list(tok.input_ids),
        attention_mask=list(tok.attention_mask),
        offset_mapping=list(tok.offsets),
        special=list(tok.special),
        target=target,
        truncated_span_chars=truncated,
        text=text,
    )


def encode_all(
    sentences: Iterable[SentenceSample], tokenizer: TokenizerAdapter, max_len: int = MAX_LEN
) -> list[EncodedSample]:
    return [encode(s, tokenizer, max_len) for s in sentences]


def write_encoded(samples: Iterable[EncodedSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_encoded(path: str | Path) -> list[EncodedSample]:
    with open(path, encoding="utf-8") as fh:
        return [EncodedSample.from_json(json.loads(line)) for line in fh if line.strip()]


# -- decoding --------------------------------------------------------------------


def offsets_from_target(values: Sequence[int]) -> frozenset[int]:
    return frozenset(i for i, v in enumerate(values) if v == 1)


def _runs(positions: Iterable[int]) -> list[list[int]]:
    runs: list[list[int]] = []
    for p in sorted(positions):
        if runs and runs[-1][-1] == p - 1:
            runs[-1].append(p)
        else:
            runs.append([p])
    return runs


def char_ranges(
    pred: Iterable[int], offset_mapping: Sequence[Sequence[int]]
) -> list[tuple[int, int]]:
    """Character extent of each maximal run of consecutive predicted tokens."""
    out = []
    for run in _runs(pred):
        spans = [offset_mapping[p] for p in run if offset_mapping[p][1] > offset_mapping[p][0]]
        if spans:
            out.append((min(s for s, _ in spans), max(e for _, e in spans)))
    return out


def render_tagged(
    text: str,
    pred: Iterable[int],
    offset_mapping: Sequence[Sequence[int]],
    tag_open: str = TAG_OPEN,
    tag_close: str = TAG_CLOSE,
) -> str:
    """Wrap each run of predicted tokens in ``<toxic>...</toxic>``.

    >>> render_tagged("fucking c programmers, done", {1}, [(0, 0), (0, 7), (8, 9)])
    '<toxic>fucking</toxic> c programmers, done'
    """
    parts = []
    cursor = 0
    for s, e in char_ranges(pred, offset_mapping):
        parts.append(text[cursor:s])
        parts.append(tag_open + text[s:e] + tag_close)
        cursor = e
    parts.append(text[cursor:])
    return "".join(parts)


def strip_tags(tagged: str, tag_open: str = TAG_OPEN, tag_close: str = TAG_CLOSE) -> str:
    return tagged.replace(tag_open, "").replace(tag_close, "")
