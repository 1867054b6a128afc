"""Explainable toxic span detection for code review comments."""

from .corpus import (
    AnnotatedComment,
    FoldAssignment,
    RuleSplitter,
    SentenceSample,
    load_comments,
    split_corpus,
    split_sentences,
    stratified_kfold,
)
from .encoding import (
    EncodedSample,
    HashingTokenizer,
    HFTokenizerAdapter,
    WordTokenizer,
    encode,
    offsets_from_target,
    render_tagged,
    strip_tags,
)
from .lexicon import LexiconList, classify_lexicon, load_lexicon
from .metrics import ClassReport, ErrorCategory, aggregate, error_category, sample_metrics
from .thresholding import binarize, sweep

__version__ = "0.1.0"


def sample_corpus_path():
    """Path of the small bundled corpus of annotated review comments."""
    from importlib import resources

    return resources.files(__name__).joinpath("data/sample_comments.csv")
