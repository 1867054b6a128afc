# %% [markdown]
# The word-list baseline, scored with 10-fold cross validation.

# %%
from toxic_spans import sample_corpus_path
from toxic_spans.corpus import load_comments, split_corpus
from toxic_spans.evaluation import error_report, run_lexicon_cv
from toxic_spans.lexicon import classify_lexicon, load_lexicon

lexicon = load_lexicon()
len(lexicon), sorted(lexicon.tokens)[:8]

# %%
vec = classify_lexicon("Oh, shit, you're right", lexicon)
[i for i, v in enumerate(vec) if v]

# %%
sentences = split_corpus(load_comments(sample_corpus_path()))
result = run_lexicon_cv(sentences, lexicon, k=10, seed=0)
print(result.table())

# %% where it goes wrong
report = error_report(result.predictions, n_examples=2)
print(report["counts"])
for cat, examples in report["examples"].items():
    for ex in examples:
        print(cat)
        print("  actual:   ", ex["actual"])
        print("  predicted:", ex["predicted"])
