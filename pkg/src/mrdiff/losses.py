"""Pixel, edge, and color-histogram restoration losses.

The exact losses (Canny edge maps, hard-binned histograms) are what gets
reported at evaluation time; they have zero gradient almost everywhere,
so training uses smooth surrogates instead: Gaussian-smoothed Sobel
gradient magnitudes for the edge term and soft (linear-binned) histograms
for the color term. Both paths share the same weighting rule

    combined = l1 * pixel + l2 * edge + l3 * hist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .canny import CannyParams, LUMA_WEIGHTS, canny, gaussian_kernel1d, SOBEL_X, SOBEL_Y
from .tensor import Tensor

__all__ = [
    "LossWeights",
    "TrainableLossWeights",
    "LossReport",
    "pixel_loss",
    "edge_loss",
    "histogram",
    "hist_loss",
    "combined_loss",
    "pixel_surrogate",
    "edge_surrogate",
    "hist_surrogate",
    "soft_surrogates",
    "combined_surrogate",
    "DEFAULT_BINS",
]

DEFAULT_BINS = 64


@dataclass(frozen=True)
class LossWeights:
    """Fixed non-negative term weights; at least one must be positive."""

    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda3: float = 0.1

    def __post_init__(self):
        vals = (self.lambda1, self.lambda2, self.lambda3)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be non-negative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")

    def values(self):
        return self.lambda1, self.lambda2, self.lambda3


class TrainableLossWeights:
    """Softplus-positive weights that can be optimized with the network.

    Off by default in training configs: the balancing objective for the
    weights themselves is not pinned down, so they are exposed but frozen
    unless explicitly enabled.
    """

    def __init__(self, lambda1: float = 1.0, lambda2: float = 0.1, lambda3: float = 0.1):
        self.raw = [Tensor(np.asarray(_softplus_inverse(v)), requires_grad=True)
                    for v in (lambda1, lambda2, lambda3)]

    def tensors(self):
        return tuple(tz.softplus(r) for r in self.raw)

    def values(self):
        return tuple(t.item() for t in self.tensors())

    def parameters(self) -> dict[str, Tensor]:
        return {f"loss_lambda{i + 1}": r for i, r in enumerate(self.raw)}


def _softplus_inverse(v: float) -> float:
    if v <= 0:
        raise ValueError("trainable weights must start positive")
    return float(np.log(np.expm1(v))) if v < 30 else v


@dataclass(frozen=True)
class LossReport:
    """Per-term values and the weighted total for one (gen, gt) pair."""

    pixel: float
    edge: float
    hist: float
    combined: float
    weights: tuple[float, float, float]
    surrogate: bool = False

    def to_dict(self) -> dict:
        return {
            "pixel": self.pixel,
            "edge": self.edge,
            "hist": self.hist,
            "combined": self.combined,
            "weights": list(self.weights),
            "surrogate": self.surrogate,
        }


def _img(a) -> np.ndarray:
    arr = a.data if isinstance(a, Tensor) else np.asarray(a, dtype=np.float64)
    return arr


# ---------------------------------------------------------------------------
# exact (evaluation) losses
# ---------------------------------------------------------------------------


def pixel_loss(gen, gt) -> float:
    """Mean absolute error over all values."""
    a, b = _img(gen), _img(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def edge_loss(gen, gt, params: CannyParams = CannyParams()) -> float:
    """Fraction of pixels whose Canny edge maps disagree."""
    ea = canny(_img(gen), params)
    eb = canny(_img(gt), params)
    if ea.shape != eb.shape:
        raise ValueError("edge maps have different shapes")
    return float(np.mean(np.abs(ea.astype(np.float64) - eb.astype(np.float64))))


def histogram(image, channel: int, bins: int = DEFAULT_BINS) -> np.ndarray:
    """Normalized hard-binned histogram of one channel over [0,1]."""
    img = _img(image)
    if img.ndim == 4:
        img = img[0]
    if img.ndim != 3 or not (0 <= channel < img.shape[0]):
        raise ValueError(f"channel {channel} invalid for shape {img.shape}")
    vals = img[channel].reshape(-1)
    idx = np.clip(np.floor(vals * bins).astype(np.intp), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return counts / counts.sum()


def hist_loss(gen, gt, bins: int = DEFAULT_BINS) -> float:
    """Sum over channels of L1 distance between normalized histograms."""
    a, b = _img(gen), _img(gt)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    channels = a.shape[-3]
    total = 0.0
    for c in range(channels):
        total += float(np.abs(histogram(a, c, bins) - histogram(b, c, bins)).sum())
    return total


def combined_loss(gen, gt, weights: LossWeights = LossWeights(),
                  params: CannyParams = CannyParams(), bins: int = DEFAULT_BINS) -> LossReport:
    """Weighted pixel + edge + histogram loss with exact terms."""
    l1, l2, l3 = weights.values()
    p = pixel_loss(gen, gt)
    e = edge_loss(gen, gt, params)
    h = hist_loss(gen, gt, bins)
    return LossReport(pixel=p, edge=e, hist=h, combined=l1 * p + l2 * e + l3 * h,
                      weights=(l1, l2, l3), surrogate=False)


# ---------------------------------------------------------------------------
# differentiable surrogates
# ---------------------------------------------------------------------------


def _luma_tensor(x: Tensor) -> Tensor:
    if x.shape[1] == 1:
        return x
    if x.shape[1] != 3:
        raise ValueError(f"expected 1 or 3 channels, got {x.shape[1]}")
    k = np.array(LUMA_WEIGHTS).reshape(1, 3, 1, 1)
    return tz.conv2d(x, Tensor(k), padding=0)


def _grad_magnitude(x: Tensor, sigma: float) -> Tensor:
    lum = _luma_tensor(x)
    g1 = gaussian_kernel1d(sigma)
    blur_k = np.outer(g1, g1).reshape(1, 1, len(g1), len(g1))
    smoothed = tz.conv2d(lum, Tensor(blur_k), padding="same")
    gx = tz.conv2d(smoothed, Tensor(SOBEL_X.reshape(1, 1, 3, 3)), padding="same")
    gy = tz.conv2d(smoothed, Tensor(SOBEL_Y.reshape(1, 1, 3, 3)), padding="same")
    return tz.sqrt(tz.add(tz.add(tz.mul(gx, gx), tz.mul(gy, gy)), 1e-12))


def pixel_surrogate(gen: Tensor, gt: Tensor) -> Tensor:
    """Differentiable mean absolute error (identical to the exact term)."""
    return tz.tensor_mean(tz.absolute(gen - gt))


def edge_surrogate(gen: Tensor, gt: Tensor, params: CannyParams = CannyParams()) -> Tensor:
    """L1 between Gaussian-smoothed Sobel gradient magnitudes."""
    return tz.tensor_mean(tz.absolute(_grad_magnitude(gen, params.sigma)
                                      - _grad_magnitude(gt, params.sigma)))


def hist_surrogate(gen: Tensor, gt: Tensor, bins: int = DEFAULT_BINS) -> Tensor:
    """Sum over channels of L1 between soft histograms."""
    if gen.shape != gt.shape:
        raise ValueError(f"shape mismatch: {gen.shape} vs {gt.shape}")
    channels = gen.shape[1]
    total = None
    for c in range(channels):
        ha = tz.soft_histogram(tz.channel_slice(gen, c, c + 1), bins)
        hb = tz.soft_histogram(tz.channel_slice(gt, c, c + 1), bins)
        term = tz.tensor_sum(tz.absolute(ha - hb))
        total = term if total is None else tz.add(total, term)
    return total


def soft_surrogates(gen: Tensor, gt: Tensor, params: CannyParams = CannyParams(),
                    bins: int = DEFAULT_BINS) -> tuple[Tensor, Tensor]:
    """(edge, histogram) surrogate values with gradients."""
    return edge_surrogate(gen, gt, params), hist_surrogate(gen, gt, bins)


def combined_surrogate(gen: Tensor, gt: Tensor, weights=LossWeights(),
                       params: CannyParams = CannyParams(),
                       bins: int = DEFAULT_BINS) -> tuple[Tensor, LossReport]:
    """Weighted surrogate loss as a scalar tensor plus a value report.

    ``weights`` may be a LossWeights (fixed floats) or TrainableLossWeights
    (the weights then receive gradients too).
    """
    p = pixel_surrogate(gen, gt)
    e = edge_surrogate(gen, gt, params)
    h = hist_surrogate(gen, gt, bins)
    if isinstance(weights, TrainableLossWeights):
        w1, w2, w3 = weights.tensors()
        total = tz.add(tz.add(tz.mul(w1, p), tz.mul(w2, e)), tz.mul(w3, h))
        wvals = tuple(t.item() for t in (w1, w2, w3))
    else:
        w1, w2, w3 = weights.values()
        total = tz.add(tz.add(tz.mul(p, w1), tz.mul(e, w2)), tz.mul(h, w3))
        wvals = (w1, w2, w3)
    report = LossReport(pixel=p.item(), edge=e.item(), hist=h.item(),
                        combined=wvals[0] * p.item() + wvals[1] * e.item() + wvals[2] * h.item(),
                        weights=wvals, surrogate=True)
    return total, report
