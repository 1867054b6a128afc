# %% [markdown]
# From character spans to per-token IO targets, and back to tagged text.

# %%
from toxic_spans.corpus import SentenceSample
from toxic_spans.encoding import HashingTokenizer, WordTokenizer, char_ranges, encode, render_tagged, strip_tags

text = "Honestly, this is a shitty patch."
start = text.index("shitty")
s = SentenceSample("demo", 0, text, 0, tuple(range(start, start + 6)))

# %% word level, no special tokens
e = encode(s, WordTokenizer())
[(text[a:b], t) for (a, b), t, ok in zip(e.offset_mapping, e.target, e.valid) if ok]

# %% subword style with [CLS]/[SEP] and padding to 70
e = encode(s, HashingTokenizer())
print(len(e.target), e.input_ids[:3], e.special[:3])
[(text[a:b], t) for (a, b), t, ok in zip(e.offset_mapping, e.target, e.valid) if ok]

# %% predicted positions back to characters
pred = {i for i, t in enumerate(e.target) if t}
print(char_ranges(pred, e.offset_mapping))
tagged = render_tagged(text, pred, e.offset_mapping)
print(tagged)
assert strip_tags(tagged) == text

# %% a fast HF tokenizer plugs in the same way (needs the checkpoint locally)
# from toxic_spans.encoding import HFTokenizerAdapter
# encode(s, HFTokenizerAdapter.from_pretrained("roberta-base"))
