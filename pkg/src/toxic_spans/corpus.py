"""Loading span-annotated comments, sentence splitting and stratified folds.

Spans are stored the way the released dataset stores them: as a sorted list
of individual character indices into the comment text.  Range views are
derived with :func:`indices_to_ranges` / :func:`ranges_to_indices`.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import logging
import random
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Protocol, Sequence

log = logging.getLogger(__name__)

TEXT_COLUMNS = ("text", "message", "comment")
SPAN_COLUMNS = ("char_spans", "spans", "span", "offsets")


class CorpusError(ValueError):
    """Base class for corpus loading problems."""


class CorpusFormatError(CorpusError):
    """The file as a whole cannot be read (missing columns, bad JSON...)."""


class RowError(CorpusError):
    """A single row violates the annotation format."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass(frozen=True)
class AnnotatedComment:
    id: str
    text: str
    is_toxic: bool
    char_spans: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "char_spans", tuple(self.char_spans))
        validate_spans(self.char_spans, len(self.text))
        if not self.is_toxic and self.char_spans:
            raise ValueError(f"comment {self.id!r} is non-toxic but carries spans")

    @property
    def ranges(self) -> list[tuple[int, int]]:
        return indices_to_ranges(self.char_spans)


@dataclass(frozen=True)
class SentenceSample:
    parent_id: str
    sentence_index: int
    text: str
    parent_char_offset: int
    char_spans: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "char_spans", tuple(self.char_spans))
        validate_spans(self.char_spans, len(self.text))

    @property
    def sample_id(self) -> str:
        return f"{self.parent_id}:{self.sentence_index}"

    @property
    def has_spans(self) -> bool:
        return bool(self.char_spans)

    def to_json(self) -> dict:
        d = asdict(self)
        d["char_spans"] = list(self.char_spans)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SentenceSample":
        return cls(
            parent_id=str(d["parent_id"]),
            sentence_index=int(d["sentence_index"]),
            text=d["text"],
            parent_char_offset=int(d["parent_char_offset"]),
            char_spans=tuple(int(i) for i in d["char_spans"]),
        )


def validate_spans(spans: Sequence[int], length: int) -> None:
    prev = -1
    for i in spans:
        if not isinstance(i, int) or isinstance(i, bool):
            raise ValueError(f"span index {i!r} is not an integer")
        if not 0 <= i < length:
            raise ValueError(f"span index {i} out of bounds for text of length {length}")
        if i <= prev:
            raise ValueError("span indices must be strictly increasing")
        prev = i


def indices_to_ranges(indices: Iterable[int]) -> list[tuple[int, int]]:
    """Collapse sorted character indices into half-open ``[start, end)`` runs."""
    ranges: list[tuple[int, int]] = []
    for i in indices:
        if ranges and ranges[-1][1] == i:
            ranges[-1] = (ranges[-1][0], i + 1)
        else:
            ranges.append((i, i + 1))
    return ranges


def ranges_to_indices(ranges: Iterable[Sequence[int]]) -> list[int]:
    out: set[int] = set()
    for start, end in ranges:
        out.update(range(int(start), int(end)))
    return sorted(out)


# -- loading -------------------------------------------------------------------


def parse_span_list(raw: str) -> list[int]:
    """Parse the bracketed integer list used by the dataset, e.g. ``"[10, 11]"``."""
    raw = (raw or "").strip()
    if raw in ("", "[]", "[ ]"):
        return []
    try:
        value = ast.literal_eval(raw)
    except (ValueError, SyntaxError) as exc:
        raise ValueError(f"cannot parse span list {raw!r}") from exc
    if not isinstance(value, (list, tuple)):
        raise ValueError(f"span list {raw!r} is not a list")
    for v in value:
        if not isinstance(v, int) or isinstance(v, bool):
            raise ValueError(f"non-integer span index {v!r}")
    return sorted(set(value))


def _parse_bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "toxic", "1.0"):
        return True
    if value in ("0", "false", "no", "non-toxic", "nontoxic", "0.0", ""):
        return False
    raise ValueError(f"cannot interpret {raw!r} as a toxicity flag")


def _pick(columns: Sequence[str], candidates: Sequence[str]) -> str | None:
    for c in candidates:
        if c in columns:
            return c
    return None


def _load_csv(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        columns = reader.fieldnames or []
        text_col = _pick(columns, TEXT_COLUMNS)
        span_col = _pick(columns, SPAN_COLUMNS)
        if text_col is None or span_col is None:
            raise CorpusFormatError(
                f"{path}: need a text column and a span column, found {columns}"
            )
        id_col = _pick(columns, ("id", "comment_id", "sample_id"))
        toxic_col = _pick(columns, ("is_toxic", "toxic", "label"))
        # header is line 1, first data row is row 2 as shown by spreadsheet tools
        for row_no, row in enumerate(reader, start=2):
            yield row_no, {
                "id": row[id_col] if id_col else str(row_no - 2),
                "text": row[text_col],
                "spans": row[span_col],
                "is_toxic": row[toxic_col] if toxic_col else None,
            }


def _ranges_from_task(task: dict) -> list[tuple[int, int]]:
    """Extract labeled ``[start, end)`` ranges from one annotation-tool record.

    Accepts Label Studio full exports (``annotations[].result[].value``),
    JSON-MIN exports (``label: [{start, end}]``) and plain ``spans`` /
    ``ranges`` lists of ``[start, end]`` pairs.
    """
    for key in ("spans", "ranges"):
        if key in task:
            return [(int(s), int(e)) for s, e in task[key]]
    if "label" in task:
        items = task["label"] or []
        return [(int(v["start"]), int(v["end"])) for v in items]
    ranges: list[tuple[int, int]] = []
    annotations = task.get("annotations") or task.get("completions") or []
    if annotations:
        for result in annotations[0].get("result", []):
            value = result.get("value", {})
            if "start" in value and "end" in value:
                ranges.append((int(value["start"]), int(value["end"])))
    return ranges


def _task_text(task: dict) -> str:
    if "text" in task:
        return task["text"]
    data = task.get("data") or {}
    for key in TEXT_COLUMNS:
        if key in data:
            return data[key]
    raise KeyError("text")


def _load_annotation_json(path: Path) -> Iterator[tuple[int, dict]]:
    try:
        tasks = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(tasks, list):
        raise CorpusFormatError(f"{path}: expected a JSON array of records")
    for n, task in enumerate(tasks, start=1):
        try:
            text = _task_text(task)
        except (KeyError, AttributeError) as exc:
            raise CorpusFormatError(f"{path}: record {n} has no text") from exc
        yield n, {
            "id": str(task.get("id", n - 1)),
            "text": text,
            "ranges": _ranges_from_task(task),
            "is_toxic": task.get("is_toxic"),
        }


def load_comments(
    path: str | Path,
    format: str = "csv",
    on_error: str = "raise",
) -> list[AnnotatedComment]:
    """Read a span-annotated corpus.

    ``format`` is ``"csv"`` (columns id, text, is_toxic, char_spans) or
    ``"annotation-json"``.  Rows that violate the span format raise
    :class:`RowError` naming the row; with ``on_error="skip"`` they are logged
    and dropped instead.
    """
    path = Path(path)
    if format == "csv":
        rows = _load_csv(path)
    elif format in ("annotation-json", "json"):
        rows = _load_annotation_json(path)
    else:
        raise CorpusFormatError(f"unknown corpus format {format!r}")

    comments = []
    for row_no, row in rows:
        try:
            if "ranges" in row:
                for s, e in row["ranges"]:
                    if not 0 <= s <= e <= len(row["text"]):
                        raise ValueError(f"range [{s}, {e}) out of bounds")
                spans = ranges_to_indices(row["ranges"])
            else:
                spans = parse_span_list(row["spans"])
            flag = row["is_toxic"]
            if flag is None:
                is_toxic = bool(spans)
            elif isinstance(flag, bool):
                is_toxic = flag
            else:
                is_toxic = _parse_bool(str(flag))
            comments.append(AnnotatedComment(row["id"], row["text"], is_toxic, spans))
        except ValueError as exc:
            err = RowError(row_no, str(exc))
            if on_error == "raise":
                raise err from exc
            log.warning("%s: rejected %s", path, err)
    return comments


# -- sentence splitting ----------------------------------------------------------


class SentenceSplitter(Protocol):
    def __call__(self, text: str) -> list[tuple[int, int]]:
        """Return ``[start, end)`` ranges of sentence bodies in reading order."""


ABBREVIATIONS = frozenset(
    "e.g i.e etc vs cf mr mrs ms dr st no approx fig eq al resp".split()
)

_BOUNDARY = re.compile(r"[.!?]+[\"')\]]*(?=\s)|\n")


@dataclass
class RuleSplitter:
    """Splits on terminal punctuation followed by whitespace, and on newlines.

    A period closing a known abbreviation (``e.g.``, ``etc.``) or a single
    letter initial does not end a sentence.
    """

    abbreviations: frozenset[str] = ABBREVIATIONS

    def _is_abbreviation(self, text: str, end: int) -> bool:
        if text[end - 1] != ".":
            return False
        m = re.search(r"(\S+)\.$", text[:end])
        if not m:
            return False
        word = m.group(1).lower().rstrip(".")
        return word in self.abbreviations or (len(word) == 1 and word.isalpha())

    def __call__(self, text: str) -> list[tuple[int, int]]:
        cuts = [0]
        for m in _BOUNDARY.finditer(text):
            if m.group() != "\n" and self._is_abbreviation(text, m.end()):
                continue
            cuts.append(m.end())
        cuts.append(len(text))
        out = []
        for start, end in zip(cuts, cuts[1:]):
            body = text[start:end]
            if body.strip():
                lead = len(body) - len(body.lstrip())
                out.append((start + lead, start + len(body.rstrip())))
        return out


def split_sentences(
    comment: AnnotatedComment,
    splitter: Callable[[str], list[tuple[int, int]]] | None = None,
) -> list[SentenceSample]:
    """Split a comment into sentences and remap its spans to local offsets.

    The returned sentences partition the comment text: whitespace between two
    sentence bodies is attached to the end of the earlier sentence, so that
    every span character lands in exactly one sentence.
    """
    splitter = splitter or RuleSplitter()
    text = comment.text
    bodies = [(s, e) for s, e in splitter(text) if text[s:e].strip()]
    if not bodies:
        starts = [0]
    else:
        starts = [0] + [s for s, _ in bodies[1:]]
    bounds = list(zip(starts, starts[1:] + [len(text)]))

    spans = comment.char_spans
    out = []
    j = 0
    for index, (s, e) in enumerate(bounds):
        local = []
        while j < len(spans) and spans[j] < e:
            local.append(spans[j] - s)
            j += 1
        out.append(SentenceSample(comment.id, index, text[s:e], s, tuple(local)))
    return out


def split_corpus(
    comments: Iterable[AnnotatedComment],
    splitter: Callable[[str], list[tuple[int, int]]] | None = None,
) -> list[SentenceSample]:
    splitter = splitter or RuleSplitter()
    return [s for c in comments for s in split_sentences(c, splitter)]


def write_sentences(samples: Iterable[SentenceSample], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json(), ensure_ascii=False) + "\n")


def read_sentences(path: str | Path) -> list[SentenceSample]:
    with open(path, encoding="utf-8") as fh:
        return [SentenceSample.from_json(json.loads(line)) for line in fh if line.strip()]


def load_sentences(path: str | Path, format: str | None = None) -> list[SentenceSample]:
    """Load either a sentence JSON-lines file or a raw comment corpus (split on the fly)."""
    path = Path(path)
    if format is None:
        format = {".jsonl": "sentences", ".json": "annotation-json"}.get(path.suffix, "csv")
    if format == "sentences":
        return read_sentences(path)
    return split_corpus(load_comments(path, format))


# -- folds -----------------------------------------------------------------------

TRAIN, VALIDATION, TEST = "train", "validation", "test"


@dataclass
class FoldAssignment:
    """Stratified k-fold layout.

    ``chunk[i]`` is the fold in which sample ``i`` is a test sample.  In fold
    ``f`` the test set is chunk ``f`` and the validation set is chunk
    ``(f + 1) % k``; the remaining chunks train.  With ``k == 2`` there is no
    third chunk, so the validation set is the half of the other chunk listed
    in ``val_half``.
    """

    k: int
    seed: int
    chunk: list[int]
    val_half: list[bool] = field(default_factory=list)

    def roles(self, fold: int) -> list[str]:
        if not 0 <= fold < self.k:
            raise IndexError(fold)
        out = []
        for i, c in enumerate(self.chunk):
            if c == fold:
                out.append(TEST)
            elif self.k == 2:
                out.append(VALIDATION if self.val_half[i] else TRAIN)
            elif c == (fold + 1) % self.k:
                out.append(VALIDATION)
            else:
                out.append(TRAIN)
        return out

    def split(self, fold: int) -> tuple[list[int], list[int], list[int]]:
        """Index lists ``(train, validation, test)`` for one fold."""
        parts: dict[str, list[int]] = {TRAIN: [], VALIDATION: [], TEST: []}
        for i, role in enumerate(self.roles(fold)):
            parts[role].append(i)
        return parts[TRAIN], parts[VALIDATION], parts[TEST]

    def digest(self) -> str:
        payload = json.dumps([self.k, self.seed, self.chunk, self.val_half]).encode()
        return hashlib.sha256(payload).hexdigest()


def stratified_kfold(samples: Sequence[SentenceSample], k: int, seed: int) -> FoldAssignment:
    """Assign samples to ``k`` folds preserving the span-bearing ratio."""
    if k < 2:
        raise CorpusError(f"k must be at least 2, got {k}")
    strata = [
        [i for i, s in enumerate(samples) if s.has_spans],
        [i for i, s in enumerate(samples) if not s.has_spans],
    ]
    for stratum, name in zip(strata, ("span-bearing", "span-free")):
        if len(stratum) < k:
            raise CorpusError(f"only {len(stratum)} {name} samples for k={k}")

    rng = random.Random(seed)
    chunk = [0] * len(samples)
    val_half = [False] * len(samples)
    dealt = 0
    for stratum in strata:
        order = list(stratum)
        rng.shuffle(order)
        for i in order:
            chunk[i] = dealt % k
            # alternate within each chunk so half of it can serve as validation
            val_half[i] = (dealt // k) % 2 == 1
            dealt += 1
    return FoldAssignment(k=k, seed=seed, chunk=chunk, val_half=val_half if k == 2 else [])
