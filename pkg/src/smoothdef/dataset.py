"""Datasets: IDX file loading and a seeded synthetic digit generator.

The synthetic corpus renders 10 digit classes from a 5x7 bitmap font at
28x28 with random placement, intensity, and noise; it is the zero-download
stand-in for an IDX digit corpus.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .image import Image

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: list
    labels: list
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(
                f"{len(self.images)} images vs {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.images)

    def subset(self, indices) -> "Dataset":
        return Dataset(
            [self.images[i] for i in indices],
            [self.labels[i] for i in indices],
            self.split,
        )


# ---------------------------------------------------------------------------
# IDX format (big-endian magic + dims, then raw uint8 payload)
# ---------------------------------------------------------------------------


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) < 16:
            raise ValueError(f"{path}: truncated IDX header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"{path}: bad IDX image magic 0x{magic:08x}")
        data = np.frombuffer(f.read(), dtype=np.uint8)
    if data.size != n * rows * cols:
        raise ValueError(f"{path}: expected {n * rows * cols} pixels, got {data.size}")
    return data.reshape(n, rows, cols)


def read_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(8)
        if len(header) < 8:
            raise ValueError(f"{path}: truncated IDX header")
        magic, n = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"{path}: bad IDX label magic 0x{magic:08x}")
        data = np.frombuffer(f.read(), dtype=np.uint8)
    if data.size != n:
        raise ValueError(f"{path}: expected {n} labels, got {data.size}")
    return data


def write_idx_images(path, images: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.size))
        f.write(labels.tobytes())


def load_idx_dataset(images_path, labels_path, split: str = "train",
                     limit: int | None = None) -> Dataset:
    raw = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if raw.shape[0] != labels.shape[0]:
        raise ValueError(f"{images_path}: {raw.shape[0]} images vs {labels.shape[0]} labels")
    if limit is not None:
        raw, labels = raw[:limit], labels[:limit]
    images = [Image(a.astype(np.float64) / 255.0) for a in raw]
    return Dataset(images, [int(v) for v in labels], split)


# ---------------------------------------------------------------------------
# Synthetic digit corpus
# ---------------------------------------------------------------------------

_FONT = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_GLYPHS = {
    d: np.array([[int(ch) for ch in row] for row in rows], dtype=np.float64)
    for d, rows in _FONT.items()
}


def _render_digit(rng: np.random.Generator, digit: int, size: int = 28,
                  noise_sigma: float = 0.12) -> np.ndarray:
    glyph = np.kron(_GLYPHS[digit], np.ones((3, 3)))  # 21 x 15
    gh, gw = glyph.shape
    canvas = np.zeros((size, size))
    top = rng.integers(0, size - gh + 1)
    left = rng.integers(0, size - gw + 1)
    intensity = rng.uniform(0.7, 1.0)
    canvas[top : top + gh, left : left + gw] = glyph * intensity
    # soften stroke edges with one 3x3 box pass so the corpus is not binary
    padded = np.pad(canvas, 1, mode="edge")
    canvas = sum(
        padded[a : a + size, b : b + size] for a in range(3) for b in range(3)
    ) / 9.0
    canvas += rng.normal(0.0, noise_sigma, canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def make_synthetic_dataset(n: int, seed: int, split: str = "train",
                           channels: int = 1, noise_sigma: float = 0.12) -> Dataset:
    """Deterministic digit corpus: n samples, labels drawn uniformly."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for _ in range(n):
        digit = int(rng.integers(0, 10))
        arr = _render_digit(rng, digit, noise_sigma=noise_sigma)
        if channels == 3:
            arr = np.repeat(arr[:, :, np.newaxis], 3, axis=2)
        images.append(Image(arr))
        labels.append(digit)
    return Dataset(images, labels, split)
