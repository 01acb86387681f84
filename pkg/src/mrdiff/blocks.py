"""Coarse-to-fine restoration blocks and attention-based fusion.

A block runs two branches over its input: a fine branch (3x3 depthwise
conv behind layer normalization, gated and channel-attended) and a coarse
branch of three stacked grouped-dilated 3x3 convs with dilations 2-4-8,
growing the receptive field through 7, 15, and 31 pixels. The branches
are recombined by sigmoid-gated recalibration driven by spatial, channel,
and pixel attention, then projected back through a gated 1x1 stack with a
residual connection around the whole block.

Weights live in a flat ``dict[str, Tensor]`` keyed by dotted names so the
same store serves single blocks and full networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    Tensor,
    ShapeError,
    add,
    concat_channels,
    conv2d,
    layer_norm,
    mul,
    no_grad,
    pool_reduce,
    relu,
    sca,
    sigmoid,
    simple_gate,
    stat_freeze,
)

__all__ = [
    "BlockSpec",
    "init_block_weights",
    "fine_branch",
    "coarse_branch",
    "mafc_fuse",
    "c2f_block",
    "receptive_field_probe",
    "center_footprint",
    "footprint_side",
    "footprint_ladder",
]


@dataclass(frozen=True)
class BlockSpec:
    """Width and structural parameters of one coarse-to-fine block."""

    channels: int
    dilations: tuple[int, ...] = (2, 4, 8)
    ln_eps: float = 1e-6
    coarse_groups: int = 0  # 0: pick channels//4 (min 1)

    def __post_init__(self):
        if self.channels < 2 or self.channels % 2:
            raise ValueError(f"channels must be even and >= 2, got {self.channels}")
        if len(self.dilations) != 3:
            raise ValueError("exactly three coarse dilation rates are required")

    @property
    def groups(self) -> int:
        if self.coarse_groups:
            return self.coarse_groups
        return max(1, self.channels // 4)


def _he_kernel(rng: np.random.Generator, out_c: int, in_c: int, kh: int, kw: int) -> Tensor:
    std = np.sqrt(2.0 / (in_c * kh * kw))
    return Tensor(rng.standard_normal((out_c, in_c, kh, kw)) * std, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_block_weights(spec: BlockSpec, rng: np.random.Generator, prefix: str = "",
                       zero_final: bool = True) -> dict[str, Tensor]:
    """Fresh parameter store for one block.

    ``zero_final`` zero-initializes the closing 1x1 conv so a new block is
    an identity map through its residual connection.
    """
    c = spec.channels
    g = spec.groups
    cr = max(c // 2, 1)
    w = {
        f"{prefix}ln1.scale": Tensor(np.ones(c), requires_grad=True),
        f"{prefix}ln1.shift": _zeros(c),
        f"{prefix}dw.kernel": _he_kernel(rng, 2 * c, 1, 3, 3),
        f"{prefix}dw.bias": _zeros(2 * c),
        f"{prefix}sca.weight": _he_kernel(rng, c, c, 1, 1),
        f"{prefix}sca.bias": _zeros(c),
        f"{prefix}mafc.spatial.kernel": _he_kernel(rng, 1, 2, 7, 7),
        f"{prefix}mafc.spatial.bias": _zeros(1),
        f"{prefix}mafc.chan1.kernel": _he_kernel(rng, cr, c, 1, 1),
        f"{prefix}mafc.chan1.bias": _zeros(cr),
        f"{prefix}mafc.chan2.kernel": _he_kernel(rng, c, cr, 1, 1),
        f"{prefix}mafc.chan2.bias": _zeros(c),
        f"{prefix}mafc.pixel.kernel": _he_kernel(rng, c, c, 1, 1),
        f"{prefix}mafc.pixel.bias": _zeros(c),
        f"{prefix}mafc.fuse.kernel": _he_kernel(rng, c, c, 1, 1),
        f"{prefix}mafc.fuse.bias": _zeros(c),
        f"{prefix}ln2.scale": Tensor(np.ones(c), requires_grad=True),
        f"{prefix}ln2.shift": _zeros(c),
        f"{prefix}out1.kernel": _he_kernel(rng, 2 * c, c, 1, 1),
        f"{prefix}out1.bias": _zeros(2 * c),
        f"{prefix}out2.kernel": _zeros((c, c, 1, 1)) if zero_final else _he_kernel(rng, c, c, 1, 1),
        f"{prefix}out2.bias": _zeros(c),
    }
    for i, _ in enumerate(spec.dilations):
        w[f"{prefix}coarse{i}.kernel"] = _he_kernel(rng, c, c // g, 3, 3)
        w[f"{prefix}coarse{i}.bias"] = _zeros(c)
    return w


def fine_branch(x: Tensor, spec: BlockSpec, w: dict, prefix: str = "") -> Tensor:
    """Local 3x3 branch: LN -> width-doubling depthwise conv -> gate -> SCA.

    The depthwise conv doubles the channel count so the gate's halving
    lands back on the block width; a residual keeps the branch stable.
    """
    c = spec.channels
    if x.shape[1] != c:
        raise ShapeError(f"fine_branch expects {c} channels, got {x.shape[1]}")
    h = layer_norm(x, w[f"{prefix}ln1.scale"], w[f"{prefix}ln1.shift"], eps=spec.ln_eps)
    h = conv2d(h, w[f"{prefix}dw.kernel"], w[f"{prefix}dw.bias"], groups=c, padding="same")
    h = simple_gate(h)
    h = sca(h, w[f"{prefix}sca.weight"], w[f"{prefix}sca.bias"])
    return add(h, x)


def coarse_branch(f_fine: Tensor, spec: BlockSpec, w: dict, prefix: str = ""):
    """Stacked grouped-dilated convs; returns the three stage outputs.

    With dilations (2, 4, 8) the cumulative receptive fields (counting the
    fine branch's 3x3) are 7, 15, and 31. Each stage carries a residual.
    """
    g = spec.groups
    stages = []
    h = f_fine
    for i, d in enumerate(spec.dilations):
        conv = conv2d(h, w[f"{prefix}coarse{i}.kernel"], w[f"{prefix}coarse{i}.bias"],
                      dilation=d, groups=g, padding="same")
        h = add(conv, h)
        stages.append(h)
    return tuple(stages)


def mafc_fuse(f_fine: Tensor, f_coarse: Tensor, spec: BlockSpec, w: dict, prefix: str = "") -> Tensor:
    """Sigmoid-gated convex recalibration of the coarse and fine branches.

    The gate combines a spatial map (7x7 conv over the channel-pooled
    average/max stack) with a channel vector (1x1-ReLU-1x1 over the
    spatially pooled average); the fine features are additionally refined
    by pixel attention before mixing.
    """
    if f_fine.shape != f_coarse.shape:
        raise ShapeError(f"branch shapes differ: {f_fine.shape} vs {f_coarse.shape}")
    f_c2f = add(f_coarse, f_fine)
    pooled = concat_channels([pool_reduce(f_c2f, "gap_s"), pool_reduce(f_c2f, "gmp_s")])
    w_s = conv2d(pooled, w[f"{prefix}mafc.spatial.kernel"], w[f"{prefix}mafc.spatial.bias"],
                 padding="same")
    squeezed = relu(conv2d(pool_reduce(f_c2f, "gap_c"), w[f"{prefix}mafc.chan1.kernel"],
                           w[f"{prefix}mafc.chan1.bias"], padding=0))
    w_c = conv2d(squeezed, w[f"{prefix}mafc.chan2.kernel"], w[f"{prefix}mafc.chan2.bias"], padding=0)
    gate = sigmoid(add(w_s, w_c))
    pixel = sigmoid(conv2d(f_fine, w[f"{prefix}mafc.pixel.kernel"], w[f"{prefix}mafc.pixel.bias"],
                           padding=0))
    refined = mul(pixel, f_fine)
    mixed = add(mul(refined, gate), mul(f_coarse, 1.0 - gate))
    return conv2d(mixed, w[f"{prefix}mafc.fuse.kernel"], w[f"{prefix}mafc.fuse.bias"], padding=0)


def c2f_block(x: Tensor, spec: BlockSpec, w: dict, prefix: str = "") -> Tensor:
    """Full block: branches, fusion, gated 1x1 output stack, residual."""
    f_fine = fine_branch(x, spec, w, prefix)
    stages = coarse_branch(f_fine, spec, w, prefix)
    fused = mafc_fuse(f_fine, stages[-1], spec, w, prefix)
    h = layer_norm(fused, w[f"{prefix}ln2.scale"], w[f"{prefix}ln2.shift"], eps=spec.ln_eps)
    h = conv2d(h, w[f"{prefix}out1.kernel"], w[f"{prefix}out1.bias"], padding=0)
    h = simple_gate(h)
    h = conv2d(h, w[f"{prefix}out2.kernel"], w[f"{prefix}out2.bias"], padding=0)
    return add(h, x)


# ---------------------------------------------------------------------------
# receptive-field probing
# ---------------------------------------------------------------------------


def receptive_field_probe(fn, input_shape, step: float = 1e-3, threshold: float = 1e-12,
                          seed: int = 0):
    """Empirical footprint of ``fn``: which output positions respond to a
    perturbation at each input pixel.

    The baseline pass runs in statistics-recording mode and every perturbed
    pass replays those statistics, so normalization layers and globally
    pooled attention do not smear the footprint: the result reflects the
    spatial convolution structure, which is what the receptive-field claims
    describe. A perturbation touches all channels of one pixel.

    Returns a list (one entry per output of ``fn``) of boolean arrays of
    shape (H, W, Ho, Wo): entry [i, j, o, p] is True when perturbing input
    pixel (i, j) moves output position (o, p) by more than ``threshold``.
    """
    n, c, h, w_ = input_shape
    if n != 1:
        raise ShapeError("probe expects a single-item batch")
    rng = np.random.default_rng(seed)
    base = rng.standard_normal(input_shape)

    def outputs(arr):
        out = fn(Tensor(arr))
        return [t.data for t in (out if isinstance(out, tuple) else (out,))]

    with no_grad():
        with stat_freeze("record"):
            base_outs = outputs(base)
        masks = [np.zeros((h, w_) + o.shape[2:], dtype=bool) for o in base_outs]
        for i in range(h):
            for j in range(w_):
                probe = base.copy()
                probe[0, :, i, j] += step
                with stat_freeze("replay"):
                    outs = outputs(probe)
                for m, o, b in zip(masks, outs, base_outs):
                    m[i, j] = np.abs(o - b).max(axis=(0, 1)) > threshold
    return masks


def center_footprint(mask: np.ndarray) -> np.ndarray:
    """Input pixels that influence the central output position."""
    ho, wo = mask.shape[2], mask.shape[3]
    return mask[:, :, ho // 2, wo // 2]


def footprint_side(fp: np.ndarray) -> int:
    """Side length of the bounding box of a 2-D footprint mask."""
    ii, jj = np.nonzero(fp)
    if ii.size == 0:
        return 0
    return int(max(ii.max() - ii.min() + 1, jj.max() - jj.min() + 1))


def footprint_ladder(spec: BlockSpec, w: dict, prefix: str = "", size: int = 33,
                     seed: int = 0) -> list[int]:
    """Measured receptive-field sides of the fine branch and the three
    coarse stages, probed at the central output pixel."""
    def chain(x):
        f = fine_branch(x, spec, w, prefix)
        return (f,) + coarse_branch(f, spec, w, prefix)

    masks = receptive_field_probe(chain, (1, spec.channels, size, size), seed=seed)
    return [footprint_side(center_footprint(m)) for m in masks]
