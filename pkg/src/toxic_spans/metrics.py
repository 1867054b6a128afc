"""Per-sample span precision/recall/F1 over token positions.

Empty sets get fixed credit instead of 0/0: a sample whose ground truth is
empty belongs to the non-toxic class and scores 1 only if nothing was
predicted; a toxic sample with an empty prediction scores 0.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

NONTOXIC, TOXIC = "nontoxic", "toxic"


class ErrorCategory(str, enum.Enum):
    EXACT = "ExactMatch"
    PARTIAL = "PartialDisagreement"
    FALSE_POSITIVE = "FalsePositive"
    FALSE_NEGATIVE = "FalseNegative"


@dataclass(frozen=True)
class SampleMetrics:
    sample_id: str
    klass: str
    precision: float
    recall: float
    f1: float


def _prf(n_pred: int, n_gt: int, n_inter: int) -> tuple[float, float, float]:
    if n_gt == 0:
        credit = 1.0 if n_pred == 0 else 0.0
        return credit, credit, credit
    if n_pred == 0:
        return 0.0, 0.0, 0.0
    p = n_inter / n_pred
    r = n_inter / n_gt
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def sample_metrics(pred: Iterable[int], gt: Iterable[int], sample_id: str = "") -> SampleMetrics:
    pred, gt = set(pred), set(gt)
    p, r, f1 = _prf(len(pred), len(gt), len(pred & gt))
    return SampleMetrics(sample_id, TOXIC if gt else NONTOXIC, p, r, f1)


def sample_metrics_arrays(pred: np.ndarray, gt: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorised :func:`sample_metrics` over boolean ``(n, L)`` arrays."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    n_pred = pred.sum(axis=1)
    n_gt = gt.sum(axis=1)
    inter = (pred & gt).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(n_pred > 0, inter / np.maximum(n_pred, 1), 0.0)
        r = np.where(n_gt > 0, inter / np.maximum(n_gt, 1), 0.0)
        f1 = np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1), 0.0)
    empty_gt = n_gt == 0
    credit = (n_pred == 0).astype(float)
    p = np.where(empty_gt, credit, p)
    r = np.where(empty_gt, credit, r)
    f1 = np.where(empty_gt, credit, f1)
    return {"toxic": ~empty_gt, "precision": p, "recall": r, "f1": f1}


def error_category(pred: Iterable[int], gt: Iterable[int]) -> ErrorCategory:
    pred, gt = set(pred), set(gt)
    if not gt and pred:
        return ErrorCategory.FALSE_POSITIVE
    if gt and not pred:
        return ErrorCategory.FALSE_NEGATIVE
    if pred != gt:
        return ErrorCategory.PARTIAL
    return ErrorCategory.EXACT


@dataclass
class ClassReport:
    """Class-separated means.  A class with no samples reports ``None``."""

    p0: float | None
    r0: float | None
    f1_0: float | None
    p1: float | None
    r1: float | None
    f1_1: float | None
    n0: int
    n1: int
    f1_0_harmonic: float | None = None
    f1_1_harmonic: float | None = None

    def as_row(self) -> dict:
        return asdict(self)


def _harmonic(p: float | None, r: float | None) -> float | None:
    if p is None or r is None:
        return None
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) else None


def aggregate(samples: Sequence[SampleMetrics]) -> ClassReport:
    """Mean P/R/F1 per class; F1 is the mean of per-sample F1 scores."""
    if not samples:
        raise ValueError("cannot aggregate an empty list of samples")
    by = {NONTOXIC: [], TOXIC: []}
    for s in samples:
        by[s.klass].append(s)
    out = {}
    for klass, suffix in ((NONTOXIC, "0"), (TOXIC, "1")):
        group = by[klass]
        out["p" + suffix] = _mean([s.precision for s in group])
        out["r" + suffix] = _mean([s.recall for s in group])
        out["f1_" + suffix] = _mean([s.f1 for s in group])
    return ClassReport(
        **out,
        n0=len(by[NONTOXIC]),
        n1=len(by[TOXIC]),
        f1_0_harmonic=_harmonic(out["p0"], out["r0"]),
        f1_1_harmonic=_harmonic(out["p1"], out["r1"]),
    )


def aggregate_arrays(pred: np.ndarray, gt: np.ndarray) -> ClassReport:
    m = sample_metrics_arrays(pred, gt)
    toxic = m["toxic"]
    out = {}
    for mask, suffix in ((~toxic, "0"), (toxic, "1")):
        for key, name in (("precision", "p"), ("recall", "r"), ("f1", "f1_")):
            vals = m[key][mask]
            out[name + suffix] = float(vals.mean()) if vals.size else None
    return ClassReport(
        **out,
        n0=int((~toxic).sum()),
        n1=int(toxic.sum()),
        f1_0_harmonic=_harmonic(out["p0"], out["r0"]),
        f1_1_harmonic=_harmonic(out["p1"], out["r1"]),
    )


def mean_report(reports: Sequence[ClassReport]) -> ClassReport:
    """Arithmetic mean of fold reports (undefined entries are skipped)."""
    values = {}
    for f in fields(ClassReport):
        col = [getattr(r, f.name) for r in reports if getattr(r, f.name) is not None]
        if f.name in ("n0", "n1"):
            values[f.name] = int(sum(col))
        else:
            values[f.name] = float(np.mean(col)) if col else None
    return ClassReport(**values)


def category_counts(pairs: Iterable[tuple[Iterable[int], Iterable[int]]]) -> Counter:
    counts = Counter({c: 0 for c in ErrorCategory})
    for pred, gt in pairs:
        counts[error_category(pred, gt)] += 1
    return counts


# -- report output ---------------------------------------------------------------

REPORT_COLUMNS = [
    "fold", "P0", "R0", "F1_0", "P1", "R1", "F1_1", "F1_0_harmonic", "F1_1_harmonic",
    "n0", "n1", "exact", "pd", "fp", "fn",
]


def report_row(label: str, report: ClassReport, counts: Counter | None = None) -> dict:
    counts = counts or Counter()
    return {
        "fold": label,
        "P0": report.p0, "R0": report.r0, "F1_0": report.f1_0,
        "P1": report.p1, "R1": report.r1, "F1_1": report.f1_1,
        "F1_0_harmonic": report.f1_0_harmonic, "F1_1_harmonic": report.f1_1_harmonic,
        "n0": report.n0, "n1": report.n1,
        "exact": counts.get(ErrorCategory.EXACT, 0),
        "pd": counts.get(ErrorCategory.PARTIAL, 0),
        "fp": counts.get(ErrorCategory.FALSE_POSITIVE, 0),
        "fn": counts.get(ErrorCategory.FALSE_NEGATIVE, 0),
    }


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "undefined"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def write_report_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in REPORT_COLUMNS})


def format_table(rows: Sequence[dict]) -> str:
    cells = [REPORT_COLUMNS] + [[_fmt(r.get(c)) for c in REPORT_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(REPORT_COLUMNS))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
