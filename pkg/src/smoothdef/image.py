"""Dense image container with boundary-aware access and differential operators.

Images are H x W x C arrays of float64 intensities, nominally in [0, 1],
row-major and channel-interleaved. All operations are pure; an Image is
treated as immutable after construction.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np


class BoundaryPolicy(enum.Enum):
    """Out-of-bounds index handling. Replicate is the default everywhere:
    it gives zero-flux (Neumann) behavior for the diffusion filters."""

    REPLICATE = "replicate"
    REFLECT = "reflect"
    ZERO = "zero"

    @property
    def pad_mode(self) -> str:
        return {"replicate": "edge", "reflect": "reflect", "zero": "constant"}[self.value]


def resolve_index(i: int, n: int, policy: BoundaryPolicy) -> int | None:
    """Map a signed index onto [0, n), or None for ZERO out-of-bounds."""
    if 0 <= i < n:
        return i
    if policy is BoundaryPolicy.ZERO:
        return None
    if policy is BoundaryPolicy.REPLICATE:
        return min(max(i, 0), n - 1)
    # Reflect without repeating the edge sample: period 2(n-1).
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return i if i < n else period - i


@dataclass(frozen=True)
class Image:
    """Immutable float64 image, shape (height, width, channels)."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got ndim={arr.ndim}")
        h, w, c = arr.shape
        if h < 1 or w < 1:
            raise ValueError(f"image extents must be >= 1, got {h}x{w}")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))


def pixel_at(
    img: Image,
    row: int,
    col: int,
    ch: int = 0,
    policy: BoundaryPolicy = BoundaryPolicy.REPLICATE,
) -> float:
    """Value at a signed (row, col), resolved per the boundary policy."""
    if not 0 <= ch < img.channels:
        raise ValueError(f"channel {ch} out of range for {img.channels}-channel image")
    r = resolve_index(row, img.height, policy)
    c = resolve_index(col, img.width, policy)
    if r is None or c is None:
        return 0.0
    return float(img.data[r, c, ch])


def pad(arr: np.ndarray, radius: int, policy: BoundaryPolicy) -> np.ndarray:
    """Pad the two spatial axes of a (H, W) or (H, W, C) array."""
    if radius == 0:
        return arr
    width = [(radius, radius), (radius, radius)] + [(0, 0)] * (arr.ndim - 2)
    if policy is BoundaryPolicy.ZERO:
        return np.pad(arr, width, mode="constant", constant_values=0.0)
    return np.pad(arr, width, mode=policy.pad_mode)


def gradient(
    img: Image, policy: BoundaryPolicy = BoundaryPolicy.REPLICATE
) -> tuple[Image, Image]:
    """Central-difference gradient, returned as (d/dx, d/dy) images.

    x runs along columns, y along rows; boundary samples come from the policy.
    """
    p = pad(img.data, 1, policy)
    dx = (p[1:-1, 2:, :] - p[1:-1, :-2, :]) / 2.0
    dy = (p[2:, 1:-1, :] - p[:-2, 1:-1, :]) / 2.0
    return Image(dx), Image(dy)


def laplacian(img: Image, policy: BoundaryPolicy = BoundaryPolicy.REPLICATE) -> Image:
    """5-point stencil Laplacian per channel."""
    p = pad(img.data, 1, policy)
    core = p[1:-1, 1:-1, :]
    out = p[2:, 1:-1, :] + p[:-2, 1:-1, :] + p[1:-1, 2:, :] + p[1:-1, :-2, :] - 4.0 * core
    return Image(out)


def linf_distance(a: Image, b: Image) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a.data - b.data)))


def clamp01(img: Image) -> Image:
    return Image(np.clip(img.data, 0.0, 1.0))


# ---------------------------------------------------------------------------
# Persistence: lossless raw format and 8-bit PNG for inspection.
# ---------------------------------------------------------------------------

RAW_MAGIC = b"SSIM1"


def save_raw(img: Image, path) -> None:
    """Bit-exact binary format: magic "SSIM1", u32 LE h/w/c, f64 LE data."""
    with open(path, "wb") as f:
        f.write(RAW_MAGIC)
        f.write(struct.pack("<III", img.height, img.width, img.channels))
        f.write(img.data.astype("<f8").tobytes())


def load_raw(path) -> Image:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(RAW_MAGIC)] != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic at offset 0")
    try:
        h, w, c = struct.unpack_from("<III", blob, len(RAW_MAGIC))
    except struct.error as e:
        raise ValueError(f"{path}: truncated header at offset {len(RAW_MAGIC)}") from e
    need = len(RAW_MAGIC) + 12 + 8 * h * w * c
    if len(blob) != need:
        raise ValueError(f"{path}: expected {need} bytes, got {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8", offset=len(RAW_MAGIC) + 12).reshape(h, w, c)
    return Image(data.astype(np.float64))


def save_png(img: Image, path) -> None:
    """8-bit grayscale/RGB PNG, values rounded from [0,1]."""
    from PIL import Image as PILImage

    arr = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    pil.save(path, format="PNG")


def load_png(path) -> Image:
    from PIL import Image as PILImage

    with PILImage.open(path) as pil:
        if pil.mode not in ("L", "RGB"):
            pil = pil.convert("RGB" if len(pil.getbands()) >= 3 else "L")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image(arr)
