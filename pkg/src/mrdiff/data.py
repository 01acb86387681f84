"""Image I/O and synthetic paired-degradation generators.

Images travel as float64 arrays of shape (1, 3, H, W) with values in
[0,1]. The mandatory on-disk format is binary PPM (P6, maxval 255),
which round-trips bit-exactly; PNG support is available when Pillow is
installed. Generated pairs follow the ``<tag>_<seed>_{deg,ref}.ppm``
naming convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ImagePair",
    "load_image",
    "save_image",
    "load_png",
    "save_png",
    "synthetic_image",
    "degrade_lowlight",
    "degrade_haze",
    "degrade_rain",
    "pair_filenames",
    "DEGRADATIONS",
]


@dataclass(frozen=True)
class ImagePair:
    """Degraded/reference pair with provenance."""

    degraded: np.ndarray
    reference: np.ndarray
    tag: str
    seed: int

    def __post_init__(self):
        if self.degraded.shape != self.reference.shape:
            raise ValueError("pair images must be shape-equal")


# ---------------------------------------------------------------------------
# PPM (P6) I/O
# ---------------------------------------------------------------------------


def _read_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Next whitespace-delimited token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated PPM header")
    return data[start:pos], pos


def load_image(path) -> np.ndarray:
    """Read a binary PPM (P6, 8-bit) file into a (1,3,H,W) array in [0,1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, pos = _read_token(raw, 0)
    if magic != b"P6":
        raise ValueError(f"{path}: not a P6 PPM file (magic {magic!r})")
    wtok, pos = _read_token(raw, pos)
    htok, pos = _read_token(raw, pos)
    mtok, pos = _read_token(raw, pos)
    try:
        width, height, maxval = int(wtok), int(htok), int(mtok)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed PPM header") from exc
    if width <= 0 or height <= 0:
        raise ValueError(f"{path}: invalid dimensions {width}x{height}")
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval} (only 255)")
    pos += 1  # single whitespace byte after maxval
    expected = width * height * 3
    pixels = raw[pos:pos + expected]
    if len(pixels) != expected:
        raise ValueError(f"{path}: expected {expected} pixel bytes, found {len(pixels)}")
    arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, 3)
    return (arr.astype(np.float64) / 255.0).transpose(2, 0, 1)[None]


def save_image(path, image: np.ndarray) -> None:
    """Write a (1,3,H,W) array in [0,1] as binary PPM; values are clamped
    then quantized to 8 bits."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] != 3:
        raise ValueError(f"expected shape (1,3,H,W), got {img.shape}")
    h, w = img.shape[2], img.shape[3]
    quant = np.round(np.clip(img[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quant.transpose(1, 2, 0).tobytes())


def load_png(path) -> np.ndarray:
    """PNG loader (requires the optional Pillow dependency)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("PNG support needs Pillow: pip install 'mrdiff[png]'") from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)[None]


def save_png(path, image: np.ndarray) -> None:
    """PNG writer (requires the optional Pillow dependency)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise RuntimeError("PNG support needs Pillow: pip install 'mrdiff[png]'") from exc
    img = np.asarray(image, dtype=np.float64)
    quant = np.round(np.clip(img[0], 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quant.transpose(1, 2, 0)).save(path)


def pair_filenames(tag: str, seed: int) -> tuple[str, str]:
    return f"{tag}_{seed}_deg.ppm", f"{tag}_{seed}_ref.ppm"


# ---------------------------------------------------------------------------
# synthetic content and degradations
# ---------------------------------------------------------------------------


def synthetic_image(height: int, width: int, seed: int) -> np.ndarray:
    """Smooth colored test scene: gradients, Gaussian blobs, one rectangle.

    Deterministic per seed; values land in [0.05, 0.95] so degradations
    have headroom before clamping.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    yy /= max(height - 1, 1)
    xx /= max(width - 1, 1)
    img = np.zeros((3, height, width))
    for c in range(3):
        f = 0.5 + 0.2 * rng.uniform(-1, 1) * xx + 0.2 * rng.uniform(-1, 1) * yy
        for _ in range(4):
            cy, cx = rng.uniform(0, 1, 2)
            spread = rng.uniform(0.08, 0.35)
            f += rng.uniform(-0.5, 0.5) * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * spread ** 2))
        img[c] = f
    top, left = rng.integers(0, max(height // 2, 1)), rng.integers(0, max(width // 2, 1))
    rh = int(rng.integers(height // 4 + 1, height // 2 + 1))
    rw = int(rng.integers(width // 4 + 1, width // 2 + 1))
    tint = rng.uniform(-0.35, 0.35, size=3)
    img[:, top:top + rh, left:left + rw] += tint[:, None, None]
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo + 1e-12)
    return (0.05 + 0.9 * img)[None]


def degrade_lowlight(img: np.ndarray, gain: float = 0.45, gamma: float = 2.2,
                     noise_std: float = 0.02, seed: int = 0) -> ImagePair:
    """Darkening curve plus sensor noise: clamp((gain*img)^gamma + N(0, std))."""
    if not (0 < gain <= 1):
        raise ValueError("gain must be in (0, 1]")
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    rng = np.random.default_rng(seed)
    degraded = np.power(gain * img, gamma)
    if noise_std > 0:
        degraded = degraded + noise_std * rng.standard_normal(img.shape)
    return ImagePair(degraded=np.clip(degraded, 0.0, 1.0), reference=img.copy(),
                     tag="lowlight", seed=seed)


def degrade_haze(img: np.ndarray, transmission: float = 0.5, airlight: float = 0.8,
                 seed: int = 0) -> ImagePair:
    """Atmospheric scattering: I = J*t + A*(1-t)."""
    if not (0 <= transmission <= 1):
        raise ValueError("transmission must be in [0, 1]")
    if not (0 <= airlight <= 1):
        raise ValueError("airlight must be in [0, 1]")
    degraded = img * transmission + airlight * (1.0 - transmission)
    return ImagePair(degraded=np.clip(degraded, 0.0, 1.0), reference=img.copy(),
                     tag="haze", seed=seed)


def degrade_rain(img: np.ndarray, streak_count: int = 14, angle_deg: float = 15.0,
                 intensity: float = 0.5, seed: int = 0) -> ImagePair:
    """Additive bright streaks along a common direction."""
    if streak_count < 0 or intensity < 0:
        raise ValueError("streak_count and intensity must be non-negative")
    rng = np.random.default_rng(seed)
    _, _, h, w = img.shape
    layer = np.zeros((h, w))
    direction = np.array([np.cos(np.radians(90.0 - angle_deg)),
                          np.sin(np.radians(90.0 - angle_deg))])
    for _ in range(streak_count):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        length = rng.uniform(0.25, 0.6) * h
        strength = intensity * rng.uniform(0.5, 1.0)
        for s in np.arange(-length / 2, length / 2, 0.5):
            y, x = int(round(cy + s * direction[0])), int(round(cx + s * direction[1]))
            if 0 <= y < h and 0 <= x < w:
                layer[y, x] = max(layer[y, x], strength)
    degraded = img + layer[None, None]
    return ImagePair(degraded=np.clip(degraded, 0.0, 1.0), reference=img.copy(),
                     tag="rain", seed=seed)


DEGRADATIONS = {
    "lowlight": degrade_lowlight,
    "haze": degrade_haze,
    "rain": degrade_rain,
}
