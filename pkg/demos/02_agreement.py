# %% [markdown]
# Token-level agreement between two annotators.

# %%
import random

from toxic_spans.agreement import find_conflicts, krippendorff_alpha_nominal, merge_rater_arrays, pair_raters
from toxic_spans.corpus import AnnotatedComment

# %% hand-sized case: 4 tokens, one disagreement
krippendorff_alpha_nominal([0, 0, 1, 1], [0, 0, 1, 0])  # alpha = 8/15

# %% two raters marking the same comments
text = "this is garbage code, stop pushing crap"
first = [AnnotatedComment("c1", text, True, tuple(range(8, 15))),
         AnnotatedComment("c2", "looks fine to me", False, ())]
second = [AnnotatedComment("c1", text, True, tuple(range(8, 15)) + tuple(range(35, 39))),
          AnnotatedComment("c2", "looks fine to me", False, ())]
paired = pair_raters(first, second)
a, b = merge_rater_arrays(paired)
print(a)
print(b)
print(krippendorff_alpha_nominal(a, b))
print("conflicts:", find_conflicts(paired))

# %% random noise drives alpha toward zero
rng = random.Random(0)
for flip in (0.0, 0.1, 0.3, 0.5):
    x = [int(rng.random() < 0.2) for _ in range(5000)]
    y = [v if rng.random() > flip else 1 - v for v in x]
    print(flip, round(krippendorff_alpha_nominal(x, y).alpha, 3))
