"""Probability vectors to token sets, and the validation threshold sweep."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .metrics import ClassReport, aggregate_arrays, mean_report

GRID = np.round(np.arange(1, 100) / 100, 2)


def binarize(
    probs: Sequence[float],
    threshold: float,
    valid: Sequence[bool] | None = None,
) -> frozenset[int]:
    """Positions with ``prob >= threshold``, restricted to ``valid`` positions.

    ``valid`` marks attended, non-special positions; padding and special
    tokens never enter the predicted set.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    probs = np.asarray(probs, dtype=float)
    hit = probs >= threshold
    if valid is not None:
        hit &= np.asarray(valid, dtype=bool)
    return frozenset(int(i) for i in np.flatnonzero(hit))


@dataclass
class FoldScores:
    """Probabilities, targets and valid-position masks for one fold's split."""

    probs: np.ndarray
    target: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.target = np.asarray(self.target, dtype=bool)
        self.valid = np.asarray(self.valid, dtype=bool)
        if not self.probs.shape == self.target.shape == self.valid.shape:
            raise ValueError("probs, target and valid must share one shape")

    def report(self, threshold: float) -> ClassReport:
        pred = (self.probs >= threshold) & self.valid
        return aggregate_arrays(pred, self.target & self.valid)


@dataclass
class SweepResult:
    grid: np.ndarray
    reports: list[ClassReport]
    optimal_threshold: float
    optimal_f1_1: float

    def rows(self) -> list[dict]:
        out = []
        for t, r in zip(self.grid, self.reports):
            out.append({
                "threshold": f"{t:.2f}",
                "p0": r.p0, "r0": r.r0, "f1_0": r.f1_0,
                "p1": r.p1, "r1": r.r1, "f1_1": r.f1_1,
            })
        return out

    def write_csv(self, path: str | Path) -> None:
        rows = self.rows()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def sweep(folds: Sequence[FoldScores], grid: Sequence[float] = GRID) -> SweepResult:
    """Mean-over-folds class report at each threshold; pick the best toxic F1.

    Ties go to the smallest threshold.
    """
    if not folds:
        raise ValueError("sweep needs at least one fold")
    grid = np.asarray(grid, dtype=float)
    reports = [mean_report([f.report(t) for f in folds]) for t in grid]
    f1 = np.array([np.nan if r.f1_1 is None else r.f1_1 for r in reports])
    if np.all(np.isnan(f1)):
        raise ValueError("no toxic samples in any fold; toxic F1 undefined everywhere")
    best = int(np.nanargmax(f1))  # first maximum, i.e. the smallest threshold
    return SweepResult(grid, reports, float(grid[best]), float(f1[best]))
