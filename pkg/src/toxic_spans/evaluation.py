"""k-fold cross-validation runs and error reports.

For learned scorers each fold is trained, its validation and test
probabilities are dumped, one threshold is chosen from the mean validation
sweep over all folds, and each test split is scored once at that threshold.
The lexicon baseline is already binary and skips the threshold stage.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import SentenceSample, stratified_kfold
from .encoding import (
    MAX_LEN,
    EncodedSample,
    WordTokenizer,
    encode_all,
    get_tokenizer,
    offsets_from_target,
    render_tagged,
    write_encoded,
)
from .lexicon import LexiconList, classify_lexicon, load_lexicon
from .metrics import (
    ClassReport,
    ErrorCategory,
    aggregate,
    category_counts,
    error_category,
    format_table,
    mean_report,
    report_row,
    sample_metrics,
    write_report_csv,
)
from .thresholding import GRID, FoldScores, binarize, sweep

log = logging.getLogger(__name__)


@dataclass
class Prediction:
    sample_id: str
    fold: int
    text: str
    offset_mapping: list[tuple[int, int]]
    gt: frozenset[int]
    pred: frozenset[int]


@dataclass
class RunManifest:
    config: dict
    seed: int
    k: int
    fold_digest: str
    run_dir: str | None = None
    status: str = "running"
    completed_folds: list[int] = field(default_factory=list)
    fold_artifacts: dict[str, dict] = field(default_factory=dict)
    threshold: float | None = None
    threshold_sources: list[str] = field(default_factory=list)
    truncated_span_chars: int = 0
    truncated_samples: int = 0
    timings: dict[str, float] = field(default_factory=dict)

    def write(self) -> None:
        if self.run_dir:
            Path(self.run_dir, "manifest.json").write_text(json.dumps(asdict(self), indent=2))


@dataclass
class CVResult:
    fold_reports: list[ClassReport]
    mean: ClassReport
    manifest: RunManifest
    predictions: list[Prediction]
    fold_counts: list[Counter] = field(default_factory=list)

    def rows(self) -> list[dict]:
        rows = [report_row(str(i), r, c) for i, (r, c) in enumerate(zip(self.fold_reports, self.fold_counts))]
        total = Counter()
        for c in self.fold_counts:
            total.update(c)
        rows.append(report_row("mean", self.mean, total))
        return rows

    def table(self) -> str:
        return format_table(self.rows())


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:10]


def make_run_dir(base: str | Path, config: dict) -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    path = Path(base) / f"{stamp}-{config_hash(config)}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _score_fold(preds: Sequence[Prediction]) -> tuple[ClassReport, Counter]:
    report = aggregate([sample_metrics(p.pred, p.gt, p.sample_id) for p in preds])
    return report, category_counts((p.pred, p.gt) for p in preds)


def _persist_fold(manifest: RunManifest, fold: int, report: ClassReport, counts: Counter) -> None:
    if not manifest.run_dir:
        return
    fold_dir = Path(manifest.run_dir) / f"fold{fold}"
    fold_dir.mkdir(exist_ok=True)
    path = fold_dir / "report.csv"
    write_report_csv([report_row(str(fold), report, counts)], path)
    manifest.fold_artifacts.setdefault(str(fold), {})["report"] = str(path)


def _finish(manifest, reports, counts, preds) -> CVResult:
    result = CVResult(reports, mean_report(reports), manifest, preds, counts)
    manifest.status = "complete"
    if manifest.run_dir:
        write_report_csv(result.rows(), Path(manifest.run_dir) / "report.csv")
        manifest.fold_artifacts["summary"] = {"report": str(Path(manifest.run_dir) / "report.csv")}
    manifest.write()
    return result


def run_lexicon_cv(
    sentences: Sequence[SentenceSample],
    lexicon: LexiconList | None = None,
    k: int = 10,
    seed: int = 0,
    max_len: int = MAX_LEN,
    out_dir: str | Path | None = None,
) -> CVResult:
    lexicon = lexicon or load_lexicon()
    config = {"scorer": "lexicon", "lexicon_size": len(lexicon), "max_len": max_len, "k": k, "seed": seed}
    folds = stratified_kfold(sentences, k, seed)
    manifest = RunManifest(config, seed, k, folds.digest())
    if out_dir is not None:
        manifest.run_dir = str(make_run_dir(out_dir, config))

    t0 = time.perf_counter()
    tokenizer = WordTokenizer()
    encoded = encode_all(sentences, tokenizer, max_len)
    _record_truncation(manifest, encoded)
    preds_all = []
    for s, e in zip(sentences, encoded):
        vec = classify_lexicon(s, lexicon, tokenizer, max_len)
        pred = frozenset(i for i in offsets_from_target(vec) if e.valid[i])
        preds_all.append((e, pred))
    manifest.timings["encode_and_classify"] = time.perf_counter() - t0

    reports, counts, predictions = [], [], []
    for fold in range(k):
        _, _, test = folds.split(fold)
        fold_preds = [
            Prediction(encoded[i].sample_id, fold, encoded[i].text, encoded[i].offset_mapping,
                       offsets_from_target(encoded[i].target), preds_all[i][1])
            for i in test
        ]
        report, c = _score_fold(fold_preds)
        _persist_fold(manifest, fold, report, c)
        reports.append(report)
        counts.append(c)
        predictions.extend(fold_preds)
        manifest.completed_folds.append(fold)
    manifest.timings["total"] = time.perf_counter() - t0
    return _finish(manifest, reports, counts, predictions)


def _record_truncation(manifest: RunManifest, encoded: Sequence[EncodedSample]) -> None:
    manifest.truncated_span_chars = int(sum(e.truncated_span_chars for e in encoded))
    manifest.truncated_samples = int(sum(1 for e in encoded if e.truncated_span_chars))
    if manifest.truncated_samples:
        log.warning(
            "%d annotated characters in %d samples fall beyond the %d-token limit",
            manifest.truncated_span_chars, manifest.truncated_samples, len(encoded[0].target),
        )


def fold_scores(probs: Sequence[np.ndarray], samples: Sequence[EncodedSample]) -> FoldScores:
    return FoldScores(
        np.asarray(probs),
        np.asarray([s.target for s in samples]),
        np.asarray([s.valid for s in samples]),
    )


def run_model_cv(
    sentences: Sequence[SentenceSample],
    config,
    k: int = 10,
    seed: int = 0,
    out_dir: str | Path | None = None,
    grid: Sequence[float] = GRID,
    tokenizer=None,
) -> CVResult:
    """Cross-validate a learned scorer built from ``config`` (a TrainConfig)."""
    from .model import build_scorer, dump_probs, predict, train

    cfg = asdict(config)
    cfg.update({"scorer": "model", "k": k, "seed": seed})
    folds = stratified_kfold(sentences, k, seed)
    manifest = RunManifest(cfg, seed, k, folds.digest())
    if out_dir is not None:
        manifest.run_dir = str(make_run_dir(out_dir, cfg))

    tokenizer = tokenizer or get_tokenizer(config.tokenizer_name)
    encoded = encode_all(sentences, tokenizer, config.max_len)
    _record_truncation(manifest, encoded)

    val_scores: list[FoldScores] = []
    test_parts: list[tuple[list[int], np.ndarray]] = []
    try:
        for fold in range(k):
            t0 = time.perf_counter()
            train_idx, val_idx, test_idx = folds.split(fold)
            scorer = build_scorer(config)
            scorer, history = train(
                scorer, [encoded[i] for i in train_idx], [encoded[i] for i in val_idx], config
            )
            val_vecs = predict(scorer, [encoded[i] for i in val_idx], device=config.device)
            test_vecs = predict(scorer, [encoded[i] for i in test_idx], device=config.device)
            artifacts = {"best_epoch": history.best_epoch, "stopped_epoch": history.stopped_epoch,
                         "val_loss": history.val_loss, "train_loss": history.train_loss}
            if manifest.run_dir:
                fold_dir = Path(manifest.run_dir) / f"fold{fold}"
                fold_dir.mkdir(exist_ok=True)
                for split, idx, vecs in (("val", val_idx, val_vecs), ("test", test_idx, test_vecs)):
                    dump_probs(vecs, fold_dir / f"{split}_probs.jsonl")
                    write_encoded([encoded[i] for i in idx], fold_dir / f"{split}_encoded.jsonl")
                    artifacts[f"{split}_probs"] = str(fold_dir / f"{split}_probs.jsonl")
                    artifacts[f"{split}_encoded"] = str(fold_dir / f"{split}_encoded.jsonl")
            manifest.fold_artifacts[str(fold)] = artifacts
            val_scores.append(fold_scores([v.values for v in val_vecs], [encoded[i] for i in val_idx]))
            test_parts.append((test_idx, np.asarray([v.values for v in test_vecs])))
            manifest.timings[f"fold{fold}"] = time.perf_counter() - t0
            manifest.completed_folds.append(fold)
            manifest.write()
    except Exception:
        manifest.status = "failed"
        manifest.write()
        raise

    result = sweep(val_scores, grid)
    manifest.threshold = result.optimal_threshold
    manifest.threshold_sources = [
        manifest.fold_artifacts[str(f)].get("val_probs", f"fold{f}:validation") for f in range(k)
    ]
    if manifest.run_dir:
        result.write_csv(Path(manifest.run_dir) / "sweep.csv")

    reports, counts, predictions = [], [], []
    for fold, (test_idx, probs) in enumerate(test_parts):
        fold_preds = []
        for i, p in zip(test_idx, probs):
            e = encoded[i]
            fold_preds.append(Prediction(
                e.sample_id, fold, e.text, e.offset_mapping, offsets_from_target(e.target),
                binarize(p, result.optimal_threshold, e.valid),
            ))
        report, c = _score_fold(fold_preds)
        _persist_fold(manifest, fold, report, c)
        reports.append(report)
        counts.append(c)
        predictions.extend(fold_preds)
    return _finish(manifest, reports, counts, predictions)


def run_cv(sentences, scorer="lexicon", k: int = 10, seed: int = 0, **kwargs) -> CVResult:
    """Dispatch on ``scorer``: ``"lexicon"``, a LexiconList, or a TrainConfig."""
    if scorer == "lexicon" or isinstance(scorer, LexiconList):
        lexicon = scorer if isinstance(scorer, LexiconList) else kwargs.pop("lexicon", None)
        return run_lexicon_cv(sentences, lexicon, k=k, seed=seed, **kwargs)
    return run_model_cv(sentences, scorer, k=k, seed=seed, **kwargs)


def error_report(predictions: Sequence[Prediction], n_examples: int = 3) -> dict:
    """Counts, shares and side-by-side examples for each error category."""
    counts = Counter({c: 0 for c in ErrorCategory})
    examples: dict[ErrorCategory, list[dict]] = {c: [] for c in ErrorCategory}
    for p in predictions:
        cat = error_category(p.pred, p.gt)
        counts[cat] += 1
        if cat is not ErrorCategory.EXACT and len(examples[cat]) < n_examples:
            examples[cat].append({
                "sample_id": p.sample_id,
                "gt_span": sorted(p.gt),
                "pred_span": sorted(p.pred),
                "actual": render_tagged(p.text, p.gt, p.offset_mapping),
                "predicted": render_tagged(p.text, p.pred, p.offset_mapping),
            })
    n_errors = sum(v for c, v in counts.items() if c is not ErrorCategory.EXACT)
    total = sum(counts.values())
    return {
        "total": total,
        "errors": n_errors,
        "counts": {c.value: counts[c] for c in ErrorCategory},
        "share_of_errors": {
            c.value: (counts[c] / n_errors if n_errors else 0.0)
            for c in ErrorCategory if c is not ErrorCategory.EXACT
        },
        "share_of_total": {c.value: (counts[c] / total if total else 0.0) for c in ErrorCategory},
        "examples": {c.value: examples[c] for c in ErrorCategory if c is not ErrorCategory.EXACT},
    }
