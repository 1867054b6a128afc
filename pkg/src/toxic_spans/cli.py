"""Command line entry point: ``toxic-spans <command> ...``.

Every command is non-interactive.  Data goes to stdout or ``--out``;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import corpus as corpus_mod
from .encoding import MAX_LEN, TAG_CLOSE, TAG_OPEN, WordTokenizer, char_ranges, encode, render_tagged
from .corpus import SentenceSample

log = logging.getLogger("toxic_spans")


class UsageError(Exception):
    pass


def _corpus_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="comment CSV, annotation JSON or sentence JSONL")
    p.add_argument("--format", choices=["csv", "annotation-json", "sentences"], default=None)


def _train_args(p: argparse.ArgumentParser) -> None:
    from .model import ENCODERS

    p.add_argument("--encoder", dest="encoder_name", choices=ENCODERS, default="roberta-base")
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--max-epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--grad-accumulation", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=1e-7)
    p.add_argument("--masked-loss", action="store_true")
    p.add_argument("--device", default="cpu")


def _train_config(args, seed: int):
    from .model import TrainConfig

    names = {f.name for f in fields(TrainConfig)}
    kwargs = {k: v for k, v in vars(args).items() if k in names and k != "seed"}
    return TrainConfig(seed=seed, **kwargs)


def _sentences(args) -> list[SentenceSample]:
    return corpus_mod.load_sentences(args.corpus, args.format)


# -- commands --------------------------------------------------------------------


def cmd_ingest(args) -> None:
    comments = corpus_mod.load_comments(args.input, args.format, on_error=args.on_error)
    sentences = corpus_mod.split_corpus(comments)
    corpus_mod.write_sentences(sentences, args.out)
    with_spans = sum(s.has_spans for s in sentences)
    print(
        f"{len(comments)} comments -> {len(sentences)} sentences, "
        f"{with_spans} with spans ({100 * with_spans / max(len(sentences), 1):.2f}%)",
        file=sys.stderr,
    )


def cmd_agreement(args) -> None:
    from .agreement import find_conflicts, krippendorff_alpha_nominal, merge_rater_arrays, pair_raters

    first = corpus_mod.load_comments(args.rater1, args.format)
    second = corpus_mod.load_comments(args.rater2, args.format)
    paired = pair_raters(first, second)
    a, b = merge_rater_arrays(paired)
    result = krippendorff_alpha_nominal(a, b)
    conflicts = find_conflicts(paired)
    json.dump({
        "alpha": result.alpha,
        "status": result.status,
        "observed_disagreement": result.observed_disagreement,
        "expected_disagreement": result.expected_disagreement,
        "n_ratings": result.n_ratings,
        "conflict_count": len(conflicts),
        "conflicts": conflicts,
    }, sys.stdout, indent=2)
    sys.stdout.write("\n")


def cmd_baseline(args) -> None:
    from .lexicon import classify_lexicon, load_lexicon
    from .metrics import aggregate, category_counts, format_table, report_row, sample_metrics
    from .encoding import offsets_from_target

    lexicon = load_lexicon(args.lexicon)
    tokenizer = WordTokenizer()
    metrics, pairs = [], []
    out = open(args.out, "w", encoding="utf-8") if args.out else None
    try:
        for s in _sentences(args):
            e = encode(s, tokenizer, args.max_len)
            gt = offsets_from_target(e.target)
            pred = offsets_from_target(classify_lexicon(s, lexicon, tokenizer, args.max_len))
            metrics.append(sample_metrics(pred, gt, s.sample_id))
            pairs.append((pred, gt))
            if out:
                out.write(json.dumps({
                    "sample_id": s.sample_id,
                    "token_positions": sorted(pred),
                    "target_positions": sorted(gt),
                }) + "\n")
    finally:
        if out:
            out.close()
    print(format_table([report_row("all", aggregate(metrics), category_counts(pairs))]))


def cmd_train(args) -> None:
    from .encoding import encode_all, get_tokenizer
    from .model import build_scorer, save_checkpoint, train

    config = _train_config(args, args.seed)
    sentences = _sentences(args)
    folds = corpus_mod.stratified_kfold(sentences, args.k, args.seed)
    train_idx, val_idx, test_idx = folds.split(0)
    # a single model uses every non-validation sentence for training
    train_idx = sorted(train_idx + test_idx)
    encoded = encode_all(sentences, get_tokenizer(config.tokenizer_name), config.max_len)
    scorer, history = train(
        build_scorer(config), [encoded[i] for i in train_idx], [encoded[i] for i in val_idx], config
    )
    directory = save_checkpoint(scorer, config, args.out)
    (directory / "history.json").write_text(json.dumps(vars(history), indent=2))
    print(f"saved checkpoint to {directory} (best epoch {history.best_epoch})", file=sys.stderr)


def _fold_dirs(root: Path) -> list[Path]:
    dirs = sorted(p for p in root.glob("fold*") if p.is_dir())
    if not dirs:
        raise UsageError(f"{root}: no fold*/ directories with validation dumps")
    return dirs


def cmd_sweep(args) -> None:
    from .encoding import read_encoded
    from .evaluation import fold_scores
    from .model import load_probs
    from .thresholding import sweep

    folds = []
    for d in _fold_dirs(Path(args.probs)):
        probs_path, enc_path = d / f"{args.split}_probs.jsonl", d / f"{args.split}_encoded.jsonl"
        for p in (probs_path, enc_path):
            if not p.exists():
                raise UsageError(f"missing dump {p}")
        samples = read_encoded(enc_path)
        by_id = {v.sample_id: v.values for v in load_probs(probs_path, len(samples[0].target))}
        missing = [s.sample_id for s in samples if s.sample_id not in by_id]
        if missing:
            raise UsageError(f"{probs_path}: no probabilities for {missing[:3]}")
        folds.append(fold_scores([by_id[s.sample_id] for s in samples], samples))
    result = sweep(folds)
    result.write_csv(args.out)
    print(f"optimal threshold {result.optimal_threshold:.2f} (F1_1 {result.optimal_f1_1:.4f})",
          file=sys.stderr)


def cmd_evaluate(args) -> None:
    from .evaluation import error_report, run_lexicon_cv, run_model_cv
    from .lexicon import load_lexicon

    sentences = _sentences(args)
    if args.scorer == "lexicon":
        result = run_lexicon_cv(sentences, load_lexicon(args.lexicon), k=args.k, seed=args.seed,
                                max_len=args.max_len, out_dir=args.out)
    else:
        result = run_model_cv(sentences, _train_config(args, args.seed), k=args.k, seed=args.seed,
                              out_dir=args.out)
    errors = error_report(result.predictions)
    if result.manifest.run_dir:
        Path(result.manifest.run_dir, "errors.json").write_text(json.dumps(errors, indent=2))
        print(f"run directory: {result.manifest.run_dir}", file=sys.stderr)
    if result.manifest.threshold is not None:
        print(f"threshold {result.manifest.threshold:.2f}", file=sys.stderr)
    print(result.table())


def _read_lines(source: str):
    if source == "-":
        yield from (line.rstrip("\n") for line in sys.stdin)
        return
    try:
        fh = open(source, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read input {source}: {exc.strerror}") from exc
    with fh:
        yield from (line.rstrip("\n") for line in fh)


def cmd_predict(args) -> None:
    from .encoding import get_tokenizer, offsets_from_target
    from .lexicon import classify_lexicon, load_lexicon
    from .thresholding import binarize

    if args.model is not None:
        if args.threshold is None:
            raise UsageError("--threshold is required with --model")
        from .model import load_checkpoint, predict

        scorer, config = load_checkpoint(args.model)
        tokenizer = get_tokenizer(config.tokenizer_name)
        max_len = config.max_len
    else:
        if args.threshold is not None:
            raise UsageError("--threshold cannot be used with --lexicon (its output is binary)")
        lexicon = load_lexicon(None if args.lexicon == "shipped" else args.lexicon)
        tokenizer = WordTokenizer()
        max_len = args.max_len

    for text in _read_lines(args.input):
        sentence = SentenceSample("stdin", 0, text, 0, ())
        e = encode(sentence, tokenizer, max_len)
        if args.model is not None:
            probs = predict(scorer, [e], device=config.device)[0].values
            pred = binarize(probs, args.threshold, e.valid)
        else:
            pred = offsets_from_target(classify_lexicon(sentence, lexicon, tokenizer, max_len))
        if args.output_format == "tagged":
            print(render_tagged(text, pred, e.offset_mapping, args.tag_open, args.tag_close))
        else:
            print(json.dumps({
                "text": text,
                "token_positions": sorted(pred),
                "char_ranges": [list(r) for r in char_ranges(pred, e.offset_mapping)],
            }, ensure_ascii=False))
        sys.stdout.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toxic-spans", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="split a comment corpus into a sentence JSONL file")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "annotation-json"], default="csv")
    p.add_argument("--on-error", choices=["raise", "skip"], default="raise")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("agreement", help="Krippendorff's alpha between two raters")
    p.add_argument("--rater1", required=True)
    p.add_argument("--rater2", required=True)
    p.add_argument("--format", choices=["csv", "annotation-json"], default="annotation-json")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("baseline", help="apply the lexicon baseline to a corpus")
    _corpus_args(p)
    p.add_argument("--lexicon", default=None, help="lexicon file (default: shipped list)")
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.add_argument("--out", default=None, help="per-sentence predictions JSONL")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("train", help="train one scorer and save a checkpoint")
    _corpus_args(p)
    _train_args(p)
    p.add_argument("--k", type=int, default=10, help="the validation split is 1/k of the corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="threshold sweep over per-fold probability dumps")
    p.add_argument("--probs", required=True, help="run directory containing fold*/ dumps")
    p.add_argument("--split", choices=["val", "test"], default="val")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("evaluate", help="k-fold cross-validation")
    _corpus_args(p)
    p.add_argument("--scorer", choices=["lexicon", "model"], default="lexicon")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs", help="parent directory for the run directory")
    _train_args(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="tag toxic spans in text, one input per line")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", help="checkpoint directory")
    src.add_argument("--lexicon", nargs="?", const="shipped", help="lexicon file (default: shipped)")
    p.add_argument("--input", default="-", help="input file, '-' for stdin")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--format", dest="output_format", choices=["tagged", "json"], default="tagged")
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.add_argument("--tag-open", default=TAG_OPEN)
    p.add_argument("--tag-close", default=TAG_CLOSE)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        args.func(args)
    except UsageError as exc:
        print(f"{args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"{args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
