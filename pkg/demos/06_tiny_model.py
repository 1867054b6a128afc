# %% [markdown]
# Training the small random-init encoder on CPU, then cross validating it.
# Swap encoder_name for "roberta-base" (etc.) with the weights cached.

# %%
import numpy as np

from toxic_spans import sample_corpus_path
from toxic_spans.corpus import load_comments, split_corpus
from toxic_spans.encoding import HashingTokenizer, encode_all, render_tagged
from toxic_spans.metrics import aggregate, sample_metrics
from toxic_spans.model import TrainConfig, build_scorer, predict, train
from toxic_spans.thresholding import binarize

sentences = split_corpus(load_comments(sample_corpus_path()))
encoded = encode_all(sentences, HashingTokenizer())

# %% overfit 50 sentences
cfg = TrainConfig(encoder_name="tiny-test-encoder", learning_rate=1e-3, batch_size=8, max_epochs=15, patience=5)
scorer, history = train(build_scorer(cfg), encoded[:50], encoded[:50], cfg)
np.round(history.train_loss, 4)

# %%
probs = predict(scorer, encoded[:50])
preds = [binarize(p.values, 0.5, e.valid) for p, e in zip(probs, encoded[:50])]
gts = [{i for i, t in enumerate(e.target) if t} for e in encoded[:50]]
print(aggregate([sample_metrics(p, g) for p, g in zip(preds, gts)]))
e = next(e for e, g in zip(encoded, gts) if g)
print(render_tagged(e.text, preds[encoded.index(e)], e.offset_mapping))

# %% full pipeline: per fold train, sweep on validation, score test
from toxic_spans.evaluation import run_model_cv

cfg = TrainConfig(encoder_name="tiny-test-encoder", learning_rate=1e-3, max_epochs=4, patience=2)
result = run_model_cv(sentences, cfg, k=3, seed=0)
print("threshold", result.manifest.threshold)
print(result.table())
