# %% [markdown]
# Loading a span-annotated corpus, splitting it into sentences and
# building stratified folds.

# %%
from collections import Counter

from toxic_spans import sample_corpus_path
from toxic_spans.corpus import load_comments, split_corpus, stratified_kfold

comments = load_comments(sample_corpus_path())
len(comments), sum(c.is_toxic for c in comments)

# %%
c = next(c for c in comments if c.char_spans)
print(c.text)
for start, end in c.ranges:
    print(repr(c.text[start:end]))

# %% sentences partition the comment, spans follow their characters
sentences = split_corpus(comments)
parts = [s for s in sentences if s.parent_id == c.id]
for s in parts:
    print(s.sample_id, s.has_spans, repr(s.text))

# %%
print(len(sentences), "sentences,", sum(s.has_spans for s in sentences), "with spans")

# %% ten folds, toxic share roughly constant in each test split
folds = stratified_kfold(sentences, k=10, seed=0)
for f in range(3):
    train, val, test = folds.split(f)
    toxic = Counter(sentences[i].has_spans for i in test)
    print(f, len(train), len(val), len(test), toxic[True])
print(folds.digest())
