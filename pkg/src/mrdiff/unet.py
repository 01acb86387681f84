"""Conditional U-shaped denoiser assembled from coarse-to-fine blocks.

The network predicts the standard-normal noise field that produced the
current diffusion state. Conditioning is channel concatenation of the
state with the degraded image; a sinusoidal time embedding is projected
per level and added as a per-channel bias. Encoder levels downsample by
bilinear 2x + 1x1 conv, decoder levels mirror that and fuse skip
connections by concatenation + 1x1 conv.

Checkpoints are numpy ``.npz`` archives: one array per parameter under its
dotted name (alphabetical order), plus a ``__meta__`` JSON string holding
a format version, the network spec, and any training state.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, asdict

import numpy as np

from .blocks import BlockSpec, c2f_block, init_block_weights
from .tensor import (
    Tensor,
    ShapeError,
    add,
    concat_channels,
    conv2d,
    interp2x_down,
    interp2x_up,
    relu,
)

__all__ = [
    "NetworkSpec",
    "init_network_weights",
    "unet_forward",
    "time_embedding",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Assembly parameters of the U-shaped denoiser."""

    depth: int = 3
    base_channels: int = 16
    blocks_per_level: int = 1
    time_embed_dim: int = 32
    image_channels: int = 3
    dilations: tuple[int, ...] = (2, 4, 8)
    ln_eps: float = 1e-6
    conditioning: str = "concat"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 2 or self.base_channels % 2:
            raise ValueError("base_channels must be even and >= 2")
        if self.time_embed_dim % 2:
            raise ValueError("time_embed_dim must be even")
        if self.conditioning != "concat":
            raise ValueError(f"unsupported conditioning mode: {self.conditioning!r}")

    def level_channels(self, level: int) -> int:
        return self.base_channels * (2 ** level)

    def block_spec(self, level: int) -> BlockSpec:
        return BlockSpec(channels=self.level_channels(level), dilations=self.dilations,
                         ln_eps=self.ln_eps)


def _he_kernel(rng, out_c, in_c, kh, kw) -> Tensor:
    std = np.sqrt(2.0 / (in_c * kh * kw))
    return Tensor(rng.standard_normal((out_c, in_c, kh, kw)) * std, requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def init_network_weights(spec: NetworkSpec, seed: int = 0) -> dict[str, Tensor]:
    """Fresh parameter store for the full network.

    The output projection starts at zero so an untrained network predicts a
    zero noise field.
    """
    rng = np.random.default_rng(seed)
    d = spec.time_embed_dim
    w: dict[str, Tensor] = {
        "intro.kernel": _he_kernel(rng, spec.base_channels, 2 * spec.image_channels, 3, 3),
        "intro.bias": _zeros(spec.base_channels),
        "temb.fc1.kernel": _he_kernel(rng, d, d, 1, 1),
        "temb.fc1.bias": _zeros(d),
        "temb.fc2.kernel": _he_kernel(rng, d, d, 1, 1),
        "temb.fc2.bias": _zeros(d),
        "outro.kernel": _zeros((spec.image_channels, spec.base_channels, 3, 3)),
        "outro.bias": _zeros(spec.image_channels),
    }
    for lv in range(spec.depth):
        c, c_next = spec.level_channels(lv), spec.level_channels(lv + 1)
        bs = spec.block_spec(lv)
        w[f"temb.enc{lv}.kernel"] = _he_kernel(rng, c, d, 1, 1)
        w[f"temb.enc{lv}.bias"] = _zeros(c)
        w[f"temb.dec{lv}.kernel"] = _he_kernel(rng, c, d, 1, 1)
        w[f"temb.dec{lv}.bias"] = _zeros(c)
        for b in range(spec.blocks_per_level):
            w.update(init_block_weights(bs, rng, prefix=f"enc{lv}.b{b}."))
            w.update(init_block_weights(bs, rng, prefix=f"dec{lv}.b{b}."))
        w[f"down{lv}.kernel"] = _he_kernel(rng, c_next, c, 1, 1)
        w[f"down{lv}.bias"] = _zeros(c_next)
        w[f"up{lv}.kernel"] = _he_kernel(rng, c, c_next, 1, 1)
        w[f"up{lv}.bias"] = _zeros(c)
        w[f"skip{lv}.kernel"] = _he_kernel(rng, c, 2 * c, 1, 1)
        w[f"skip{lv}.bias"] = _zeros(c)
    c_mid = spec.level_channels(spec.depth)
    w["temb.mid.kernel"] = _he_kernel(rng, c_mid, d, 1, 1)
    w["temb.mid.bias"] = _zeros(c_mid)
    for b in range(spec.blocks_per_level):
        w.update(init_block_weights(spec.block_spec(spec.depth), rng, prefix=f"mid.b{b}."))
    return w


def time_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding of an integer step, shaped (1, dim, 1, 1)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = t * freqs
    emb = np.concatenate([np.sin(angles), np.cos(angles)])
    return emb.reshape(1, dim, 1, 1)


def _add_temb(x: Tensor, emb: Tensor, w: dict, name: str) -> Tensor:
    proj = conv2d(emb, w[f"temb.{name}.kernel"], w[f"temb.{name}.bias"], padding=0)
    return add(x, proj)


def unet_forward(spec: NetworkSpec, w: dict, y_t: Tensor, degraded: Tensor, t: int) -> Tensor:
    """Predict the noise field for state ``y_t`` conditioned on the
    degraded image and the step index."""
    y_t = y_t if isinstance(y_t, Tensor) else Tensor(y_t)
    degraded = degraded if isinstance(degraded, Tensor) else Tensor(degraded)
    if y_t.shape != degraded.shape:
        raise ShapeError(f"state/conditioning shapes differ: {y_t.shape} vs {degraded.shape}")
    n, c, h, width = y_t.shape
    if c != spec.image_channels:
        raise ShapeError(f"expected {spec.image_channels} image channels, got {c}")
    div = 2 ** spec.depth
    if h % div or width % div:
        raise ShapeError(f"spatial dims {h}x{width} not divisible by 2^depth = {div}")
    if t < 0:
        raise ValueError("t must be non-negative")

    emb = Tensor(time_embedding(t, spec.time_embed_dim))
    emb = conv2d(emb, w["temb.fc1.kernel"], w["temb.fc1.bias"], padding=0)
    emb = conv2d(relu(emb), w["temb.fc2.kernel"], w["temb.fc2.bias"], padding=0)

    x = conv2d(concat_channels([y_t, degraded]), w["intro.kernel"], w["intro.bias"], padding="same")
    skips = []
    for lv in range(spec.depth):
        bs = spec.block_spec(lv)
        x = _add_temb(x, emb, w, f"enc{lv}")
        for b in range(spec.blocks_per_level):
            x = c2f_block(x, bs, w, prefix=f"enc{lv}.b{b}.")
        skips.append(x)
        x = conv2d(interp2x_down(x), w[f"down{lv}.kernel"], w[f"down{lv}.bias"], padding=0)

    x = _add_temb(x, emb, w, "mid")
    for b in range(spec.blocks_per_level):
        x = c2f_block(x, spec.block_spec(spec.depth), w, prefix=f"mid.b{b}.")

    for lv in reversed(range(spec.depth)):
        bs = spec.block_spec(lv)
        x = conv2d(interp2x_up(x), w[f"up{lv}.kernel"], w[f"up{lv}.bias"], padding=0)
        x = conv2d(concat_channels([x, skips[lv]]), w[f"skip{lv}.kernel"], w[f"skip{lv}.bias"],
                   padding=0)
        x = _add_temb(x, emb, w, f"dec{lv}")
        for b in range(spec.blocks_per_level):
            x = c2f_block(x, bs, w, prefix=f"dec{lv}.b{b}.")

    return conv2d(x, w["outro.kernel"], w["outro.bias"], padding="same")


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------


def save_checkpoint(path, weights: dict[str, Tensor], spec: NetworkSpec,
                    extra: dict | None = None) -> None:
    """Write parameters and metadata to an ``.npz`` archive.

    Parameter arrays are stored under their dotted names; ``__meta__``
    holds a JSON document with the format version, the network spec, and
    caller-supplied training state (JSON-serializable).
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "spec": asdict(spec),
        "extra": extra or {},
    }
    arrays = {name: np.asarray(weights[name].data) for name in weights}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    # plain zip of .npy members with frozen timestamps: readable by np.load
    # and bitwise reproducible for identical contents
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, arrays[name], allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path):
    """Read an ``.npz`` checkpoint; returns (weights, spec, extra)."""
    with np.load(path, allow_pickle=False) as archive:
        if "__meta__" not in archive:
            raise ValueError(f"{path}: not a checkpoint (missing __meta__)")
        meta = json.loads(str(archive["__meta__"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        spec_dict = dict(meta["spec"])
        spec_dict["dilations"] = tuple(spec_dict["dilations"])
        spec = NetworkSpec(**spec_dict)
        weights = {name: Tensor(archive[name], requires_grad=True)
                   for name in archive.files if name != "__meta__"}
    return weights, spec, meta.get("extra", {})
