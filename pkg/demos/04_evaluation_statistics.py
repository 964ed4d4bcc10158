# %% [markdown]
# # Reading a metrics report
#
# Per label: AUROC, the Youden-optimal threshold, and accuracy, sensitivity
# and specificity at that threshold. Across labels: macro averages, the
# spread of AUROC over labels, and a bootstrap spread of the macro AUROC.
# Against a baseline scored on the same cases: a paired one-sided p-value.

# %%
import json

import numpy as np

from ffl.evaluation import ScoreSet, auroc, macro_report, youden_index

# %% [markdown]
# A four-case example small enough to check by hand. Three of the four
# positive-negative pairs are ordered correctly, so AUROC is 0.75. Thresholds
# 0.35 and 0.8 both reach J = 0.5; the lower one wins.

# %%
scores, labels = [0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]
print("AUROC", auroc(scores, labels), "Youden (t, J)", youden_index(scores, labels))

# %% [markdown]
# Now two models on 300 cases and three labels: model B is model A with
# less noise.

# %%
rng = np.random.default_rng(1)
y = rng.integers(0, 2, size=(300, 3))
signal = y + rng.normal(0, 1.0, y.shape)
a = ScoreSet(1 / (1 + np.exp(-signal)), y, ("effusion", "cardiomegaly", "atelectasis"))
b = ScoreSet(1 / (1 + np.exp(-(y + 0.6 * (signal - y)))), y, a.label_names)

rep = macro_report(b, baseline=a, B=1000, seed=0)
print(json.dumps(rep.to_dict(), indent=1)[:900], "...")

# %% [markdown]
# `auroc_across_labels_std` and `bootstrap.std` answer different questions:
# the first is how much labels differ from each other, the second is how
# much the macro AUROC would move on a new test set of the same size.

# %%
print(f"macro AUROC {rep.macro_auroc:.3f}")
print(f"  spread over labels   {rep.auroc_across_labels_std:.3f}")
print(f"  bootstrap std        {rep.bootstrap.std:.3f}  95% CI {np.round(rep.bootstrap.ci95, 3)}")
print(f"  p(B not better than A) = {rep.p_value_vs_baseline:.4f}")
