# %% [markdown]
# # Radiograph-style preprocessing
#
# Images go through three steps before training: resize, min-max
# normalization to 8 bits (truncating), and histogram equalization.
# Training-time augmentation adds random horizontal flips and small
# rotations. This script applies each step to a synthetic image and writes
# the stages side by side to `demos/out/preprocessing.png`.

# %%
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from ffl.data import augment, hist_equalize, minmax_normalize, resize

rng = np.random.default_rng(0)

# %% [markdown]
# A fake 12-bit "radiograph": a bright ellipse on a dim gradient, low contrast
# overall, with sensor noise.

# %%
h, w = 96, 80
yy, xx = np.mgrid[0:h, 0:w]
raw = 900 + 3 * xx + 400 * (((yy - 50) / 30) ** 2 + ((xx - 40) / 22) ** 2 < 1) + rng.normal(0, 25, (h, w))
print("raw range:", raw.min().round(1), raw.max().round(1))

# %%
small = resize(raw, 48, 40)
norm = minmax_normalize(small)
eq = hist_equalize(norm)
aug = augment(eq, rng)
print("normalized:", norm.dtype, norm.min(), norm.max())
print("distinct gray levels before/after equalization:", len(np.unique(norm)), len(np.unique(eq)))

# %% [markdown]
# Equalization never reorders pixels. It stretches crowded parts of the
# histogram, and rare neighboring levels can merge, so the level count can drop.

# %%
order = np.argsort(norm, axis=None, kind="stable")
assert np.all(np.diff(eq.reshape(-1)[order].astype(int)) >= 0)

# %%
out = Path(__file__).resolve().parent / "out"
out.mkdir(exist_ok=True)
fig, axes = plt.subplots(1, 4, figsize=(10, 3))
for ax, img, title in zip(axes, (raw, norm, eq, aug), ("raw", "resized + min-max", "equalized", "augmented")):
    ax.imshow(img, cmap="gray")
    ax.set_title(title, fontsize=9)
    ax.axis("off")
fig.tight_layout()
fig.savefig(out / "preprocessing.png", dpi=100)
print("wrote", out / "preprocessing.png")
