"""Lexicon baseline: a token is toxic iff it is on a fixed list."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import SentenceSample
from .encoding import MAX_LEN, WordTokenizer


@dataclass(frozen=True)
class LexiconList:
    tokens: frozenset[str]
    provenance: dict[str, tuple[str, ...]] = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token.lower() in self.tokens

    def union(self, other: "LexiconList") -> "LexiconList":
        prov = dict(self.provenance)
        for tok, src in other.provenance.items():
            prov[tok] = tuple(dict.fromkeys(prov.get(tok, ()) + src))
        return LexiconList(self.tokens | other.tokens, prov)


def parse_lexicon(text: str, default_source: str = "user") -> LexiconList:
    prov: dict[str, tuple[str, ...]] = {}
    source = default_source
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("source:"):
                source = body.split(":", 1)[1].strip()
            continue
        tok = line.lower()
        if source not in prov.get(tok, ()):
            prov[tok] = prov.get(tok, ()) + (source,)
    return LexiconList(frozenset(prov), prov)


def load_lexicon(path: str | Path | None = None) -> LexiconList:
    """Read a lexicon file; ``None`` loads the shipped 167-token list."""
    if path is None:
        text = resources.files("toxic_spans").joinpath("data/lexicon.txt").read_text("utf-8")
        return parse_lexicon(text, default_source="shipped")
    return parse_lexicon(Path(path).read_text(encoding="utf-8"), default_source=str(path))


def classify_lexicon(
    sentence: SentenceSample | str,
    lexicon: LexiconList,
    word_tokenizer: WordTokenizer | None = None,
    max_len: int = MAX_LEN,
) -> list[int]:
    """0/1 vector over word-token positions, padded with zeros to ``max_len``."""
    if not lexicon.tokens:
        raise ValueError("lexicon is empty")
    word_tokenizer = word_tokenizer or WordTokenizer()
    text = sentence if isinstance(sentence, str) else sentence.text
    words = word_tokenizer.words(text)[:max_len]
    vec = [1 if w.lower() in lexicon.tokens else 0 for w in words]
    return vec + [0] * (max_len - len(vec))
