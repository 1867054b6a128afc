import csv
import json
from pathlib import Path

import numpy as np
import pytest

from toxic_spans import evaluation
from toxic_spans.evaluation import Prediction, error_report, run_cv, run_lexicon_cv, run_model_cv
from toxic_spans.lexicon import classify_lexicon, load_lexicon
from toxic_spans.model import TrainConfig

from oracles import classify_error


@pytest.fixture(scope="module")
def lexicon_run(sentences, tmp_path_factory):
    return run_lexicon_cv(sentences, k=5, seed=7, out_dir=tmp_path_factory.mktemp("runs"))


def test_lexicon_run_is_deterministic(sentences, lexicon_run):
    again = run_cv(sentences, "lexicon", k=5, seed=7)
    assert again.fold_reports == lexicon_run.fold_reports
    assert again.manifest.fold_digest == lexicon_run.manifest.fold_digest


def test_every_sentence_tested_once(sentences, lexicon_run):
    ids = [p.sample_id for p in lexicon_run.predictions]
    assert sorted(ids) == sorted(s.sample_id for s in sentences)
    report = error_report(lexicon_run.predictions)
    assert report["total"] == len(sentences)
    assert sum(report["counts"].values()) == len(sentences)


def test_error_counts_match_independent_classification(sentences, lexicon_run):
    # independent path: word positions straight from the lexicon and the span characters
    from toxic_spans.encoding import WordTokenizer

    lex = load_lexicon()
    words = WordTokenizer()
    expected = {}
    for s in sentences:
        spans = words.spans(s.text)
        gt = {i for i, (a, b) in enumerate(spans[:70])
              if any(a <= c < b and not s.text[c].isspace() for c in s.char_spans)}
        pred = {i for i, v in enumerate(classify_lexicon(s.text, lex)) if v}
        cat = classify_error(pred, gt)
        expected[cat] = expected.get(cat, 0) + 1
    counts = error_report(lexicon_run.predictions)["counts"]
    assert {k: v for k, v in counts.items() if v} == expected


def test_mean_equals_recomputation_from_fold_csvs(lexicon_run):
    run_dir = Path(lexicon_run.manifest.run_dir)
    per_fold = []
    for fold in range(5):
        with open(run_dir / f"fold{fold}" / "report.csv") as fh:
            (row,) = list(csv.DictReader(fh))
        per_fold.append(float(row["F1_1"]))
    assert np.mean(per_fold) == pytest.approx(lexicon_run.mean.f1_1, abs=1e-4)
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["completed_folds"] == list(range(5))
    assert manifest["threshold"] is None
    assert (run_dir / "report.csv").exists()
    assert "mean" in lexicon_run.table()


def test_perfect_predictor_all_exact(lexicon_run):
    perfect = [
        Prediction(p.sample_id, p.fold, p.text, p.offset_mapping, p.gt, p.gt)
        for p in lexicon_run.predictions
    ]
    report = error_report(perfect)
    assert report["counts"]["ExactMatch"] == len(perfect)
    assert report["errors"] == 0


def test_error_examples_are_rendered(lexicon_run):
    report = error_report(lexicon_run.predictions)
    for cat, examples in report["examples"].items():
        for ex in examples:
            assert ex["actual"].replace("<toxic>", "").replace("</toxic>", "") == \
                ex["predicted"].replace("<toxic>", "").replace("</toxic>", "")


@pytest.fixture(scope="module")
def model_run(sentences, tmp_path_factory):
    cfg = TrainConfig(encoder_name="tiny-test-encoder", learning_rate=1e-3, max_epochs=2,
                      patience=1, batch_size=16, seed=1)
    return run_model_cv(sentences, cfg, k=3, seed=2, out_dir=tmp_path_factory.mktemp("runs"))


def test_model_run_threshold_comes_from_validation(model_run):
    m = model_run.manifest
    assert m.status == "complete"
    assert 0.01 <= m.threshold <= 0.99
    assert len(m.threshold_sources) == 3
    for fold, src in enumerate(m.threshold_sources):
        assert src == m.fold_artifacts[str(fold)]["val_probs"]
        assert src.endswith("val_probs.jsonl") and Path(src).exists()
    assert Path(m.run_dir, "sweep.csv").read_text().count("\n") == 100


def test_model_run_test_sets_scored_once(sentences, model_run):
    assert sorted(p.sample_id for p in model_run.predictions) == sorted(s.sample_id for s in sentences)
    assert len(model_run.fold_reports) == 3


def test_failed_fold_recorded(sentences, tmp_path, monkeypatch):
    from toxic_spans import model

    real_train = model.train
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("out of memory")
        return real_train(*args, **kwargs)

    monkeypatch.setattr(model, "train", flaky)
    cfg = TrainConfig(encoder_name="tiny-test-encoder", max_epochs=2, patience=1)
    with pytest.raises(RuntimeError):
        run_model_cv(sentences, cfg, k=3, seed=0, out_dir=tmp_path)
    (run_dir,) = tmp_path.iterdir()
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["completed_folds"] == [0]
