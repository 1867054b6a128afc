"""Two-rater agreement on token labels (nominal Krippendorff's alpha)."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .corpus import AnnotatedComment
from .encoding import WordTokenizer


class AgreementDataError(ValueError):
    pass


@dataclass(frozen=True)
class RaterTokenLabels:
    sample_id: str
    rater_id: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class AgreementResult:
    alpha: float | None
    observed_disagreement: float
    expected_disagreement: float
    n_ratings: int
    status: str = "ok"  # "undefined" when expected disagreement is zero


def _group(per_sample) -> "OrderedDict[str, list[RaterTokenLabels]]":
    if isinstance(per_sample, Mapping):
        items = per_sample.items()
    else:
        grouped: OrderedDict[str, list[RaterTokenLabels]] = OrderedDict()
        for entry in per_sample:
            if isinstance(entry, RaterTokenLabels):
                grouped.setdefault(entry.sample_id, []).append(entry)
            else:
                entry = list(entry)
                if not entry:
                    continue
                grouped.setdefault(entry[0].sample_id, []).extend(entry)
        items = grouped.items()
    out: OrderedDict[str, list[RaterTokenLabels]] = OrderedDict()
    for sample_id, ratings in items:
        ratings = list(ratings)
        if len(ratings) != 2:
            raise AgreementDataError(
                f"sample {sample_id!r} has {len(ratings)} ratings, expected exactly 2"
            )
        if len(ratings[0].labels) != len(ratings[1].labels):
            raise AgreementDataError(
                f"sample {sample_id!r}: label lengths differ "
                f"({len(ratings[0].labels)} vs {len(ratings[1].labels)})"
            )
        out[sample_id] = ratings
    return out


def merge_rater_arrays(per_sample) -> tuple[list[int], list[int]]:
    """Concatenate each rater's token labels in sample order.

    ``per_sample`` is a mapping ``sample_id -> [labels_a, labels_b]`` or an
    iterable of :class:`RaterTokenLabels` (grouped by ``sample_id``).  Rater
    order inside a sample follows the order of first appearance of rater ids.
    """
    grouped = _group(per_sample)
    raters: list[str] = []
    for ratings in grouped.values():
        for r in ratings:
            if r.rater_id not in raters:
                raters.append(r.rater_id)
    if len(raters) > 2:
        raise AgreementDataError(f"expected two raters, found {raters}")
    a: list[int] = []
    b: list[int] = []
    for sample_id, ratings in grouped.items():
        by_rater = {r.rater_id: r for r in ratings}
        if len(by_rater) != 2:
            raise AgreementDataError(f"sample {sample_id!r} is not rated by both raters")
        a.extend(by_rater[raters[0]].labels)
        b.extend(by_rater[raters[1]].labels)
    return a, b


def krippendorff_alpha_nominal(a: Sequence[Hashable], b: Sequence[Hashable]) -> AgreementResult:
    """Nominal alpha for two raters with no missing values.

    Every unit holds one pair of values, so the coincidence matrix counts
    each ordered pair ``(a_i, b_i)`` and ``(b_i, a_i)`` once.  With ``n``
    pairable values and marginals ``n_c``::

        D_o = sum_{c != k} o_ck / n
        D_e = sum_{c != k} n_c n_k / (n (n - 1))
    """
    if len(a) != len(b):
        raise AgreementDataError(f"rater arrays differ in length ({len(a)} vs {len(b)})")
    if len(a) < 2:
        raise AgreementDataError("need at least two units")
    values = sorted(set(a) | set(b), key=repr)
    index = {v: i for i, v in enumerate(values)}
    ia = np.fromiter((index[v] for v in a), dtype=np.int64, count=len(a))
    ib = np.fromiter((index[v] for v in b), dtype=np.int64, count=len(b))
    m = len(values)
    coincidence = np.zeros((m, m))
    np.add.at(coincidence, (ia, ib), 1.0)
    coincidence += coincidence.T
    n = coincidence.sum()
    marginals = coincidence.sum(axis=1)

    off = ~np.eye(m, dtype=bool)
    d_o = coincidence[off].sum() / n
    d_e = (np.outer(marginals, marginals)[off].sum()) / (n * (n - 1))
    if d_e == 0:
        return AgreementResult(None, float(d_o), 0.0, int(n), status="undefined")
    return AgreementResult(1.0 - d_o / d_e, float(d_o), float(d_e), int(n))


def find_conflicts(per_sample) -> list[str]:
    return [
        sample_id
        for sample_id, (r1, r2) in _group(per_sample).items()
        if tuple(r1.labels) != tuple(r2.labels)
    ]


def token_labels(
    comment: AnnotatedComment, rater_id: str, tokenizer: WordTokenizer | None = None
) -> RaterTokenLabels:
    """Word-token labels for one rater's annotation of a comment."""
    tokenizer = tokenizer or WordTokenizer()
    text = comment.text
    chars = {i for i in comment.char_spans if not text[i].isspace()}
    labels = tuple(
        int(any(c in chars for c in range(s, e))) for s, e in tokenizer.spans(text)
    )
    return RaterTokenLabels(comment.id, rater_id, labels)


def pair_raters(
    first: Iterable[AnnotatedComment],
    second: Iterable[AnnotatedComment],
    tokenizer: WordTokenizer | None = None,
) -> "OrderedDict[str, list[RaterTokenLabels]]":
    """Align two raters' annotation exports by comment id."""
    second_by_id = {c.id: c for c in second}
    out: OrderedDict[str, list[RaterTokenLabels]] = OrderedDict()
    for c in first:
        other = second_by_id.get(c.id)
        if other is None:
            raise AgreementDataError(f"sample {c.id!r} missing from the second rater")
        if other.text != c.text:
            raise AgreementDataError(f"sample {c.id!r} has different text for the two raters")
        out[c.id] = [token_labels(c, "rater1", tokenizer), token_labels(other, "rater2", tokenizer)]
    extra = set(second_by_id) - set(out)
    if extra:
        raise AgreementDataError(f"samples rated only by the second rater: {sorted(extra)[:5]}")
    return out
