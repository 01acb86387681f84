"""
Synthetic degradation gallery
=============================

The three paired generators used for desk-scale experiments: a gamma
darkening curve with sensor noise, the atmospheric scattering model, and
additive rain streaks. Every generator is deterministic per seed and
leaves the reference untouched.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from mrdiff import data, metrics

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

img = data.synthetic_image(48, 48, seed=33)
pairs = [data.degrade_lowlight(img, seed=1),
         data.degrade_haze(img, transmission=0.45, airlight=0.85),
         data.degrade_rain(img, streak_count=25, intensity=0.6, seed=1)]

fig, axes = plt.subplots(1, 4, figsize=(12, 3.2))
axes[0].imshow(img[0].transpose(1, 2, 0))
axes[0].set_title("reference")
axes[0].axis("off")
for ax, pair in zip(axes[1:], pairs):
    psnr = metrics.psnr(pair.degraded, pair.reference)
    print(f"{pair.tag:9s} PSNR vs reference: {psnr:.2f} dB")
    ax.imshow(pair.degraded[0].transpose(1, 2, 0))
    ax.set_title(f"{pair.tag} ({psnr:.1f} dB)")
    ax.axis("off")
fig.tight_layout()
fig.savefig(os.path.join(OUT, "degradations.png"), dpi=120)
print(f"figure written to {OUT}/degradations.png")
