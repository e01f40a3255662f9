"""Loaders for MNIST/Fashion-MNIST IDX files and CIFAR-10 binary batches.

All loaders return images as float64 arrays in [0, 1] (pixel byte / 255) and
integer class labels in [0, 10).  A seeded synthetic digit generator is also
provided so the full pipeline can run without any dataset files on disk.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049
CIFAR_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
N_CLASSES = 10


class DatasetFormatError(ValueError):
    """File does not match the expected binary layout."""


class CorruptDataError(ValueError):
    """File parses but carries out-of-range values."""


@dataclass(frozen=True)
class Image:
    """Dense pixel grid, row-major, channel-interleaved, values in [0, 1]."""

    pixels: np.ndarray  # (height, width, channels) float64

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) pixels, got {self.pixels.shape}")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return self.pixels.shape[2]


@dataclass
class LabeledDataset:
    images: list[Image]
    labels: np.ndarray  # int class indices in [0, 10)
    name: str = ""

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels length mismatch")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= N_CLASSES):
            raise CorruptDataError("label outside [0, 10)")

    def __len__(self):
        return len(self.images)

    def subset(self, indices):
        return LabeledDataset([self.images[i] for i in indices],
                              self.labels[list(indices)], self.name)


def _read_be32(f, what):
    data = f.read(4)
    if len(data) != 4:
        raise DatasetFormatError(f"truncated header while reading {what}")
    return struct.unpack(">I", data)[0]


def load_idx_images(path):
    """Read an IDX image file (magic 2051) into a list of grayscale Images."""
    with open(path, "rb") as f:
        magic = _read_be32(f, "magic")
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetFormatError(f"bad image magic {magic} (expected {IDX_IMAGE_MAGIC})")
        count = _read_be32(f, "count")
        rows = _read_be32(f, "rows")
        cols = _read_be32(f, "cols")
        payload = f.read()
    expected = count * rows * cols
    if len(payload) != expected:
        raise DatasetFormatError(
            f"payload is {len(payload)} bytes, header implies {expected}")
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)
    return [Image(raw[i].astype(np.float64)[:, :, None] / 255.0) for i in range(count)]


def load_idx_labels(path):
    """Read an IDX label file (magic 2049) into an int array."""
    with open(path, "rb") as f:
        magic = _read_be32(f, "magic")
        if magic != IDX_LABEL_MAGIC:
            raise DatasetFormatError(f"bad label magic {magic} (expected {IDX_LABEL_MAGIC})")
        count = _read_be32(f, "count")
        payload = f.read()
    if len(payload) != count:
        raise DatasetFormatError(f"payload is {len(payload)} bytes, header says {count}")
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if len(labels) and labels.max() >= N_CLASSES:
        raise CorruptDataError(f"label {labels.max()} outside [0, 10)")
    return labels


def load_cifar10_batch(path, name="cifar10"):
    """Read one CIFAR-10 binary batch (3073-byte records, planar RGB)."""
    with open(path, "rb") as f:
        payload = f.read()
    if len(payload) % CIFAR_RECORD_BYTES != 0:
        raise DatasetFormatError(
            f"file length {len(payload)} is not a multiple of {CIFAR_RECORD_BYTES}")
    n = len(payload) // CIFAR_RECORD_BYTES
    raw = np.frombuffer(payload, dtype=np.uint8).reshape(n, CIFAR_RECORD_BYTES)
    labels = raw[:, 0].astype(np.int64)
    if n and labels.max() >= N_CLASSES:
        raise CorruptDataError(f"label {labels.max()} outside [0, 10)")
    # planar R,G,B planes -> (32, 32, 3) interleaved
    planes = raw[:, 1:].reshape(n, 3, 32, 32).transpose(0, 2, 3, 1)
    images = [Image(planes[i].astype(np.float64) / 255.0) for i in range(n)]
    return LabeledDataset(images, labels, name)


def write_idx_images(path, images_u8):
    """Write raw uint8 images (n, rows, cols) as an IDX image file."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images_u8.tobytes())


def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


# ---- split handling ---------------------------------------------------------

IDX_FILES = {
    "mnist": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
              "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
    "fashion": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}

N_TRAIN = 50_000  # remaining train-file items become the validation split


def load_splits(name, data_dir):
    """Return (train, val, test) LabeledDatasets for a named dataset.

    IDX datasets hold 60k train images; the first 50k train, the last 10k
    validate, the official test file tests.  CIFAR-10 uses data_batch_1..4
    for training, data_batch_5 for validation and test_batch for testing.
    """
    if name in IDX_FILES:
        sub = "fashion-mnist" if name == "fashion" else name
        base = os.path.join(data_dir, sub)
        if not os.path.isdir(base):
            base = data_dir
        ti, tl, si, sl = (os.path.join(base, fn) for fn in IDX_FILES[name])
        images = load_idx_images(ti)
        labels = load_idx_labels(tl)
        full = LabeledDataset(images, labels, name)
        train = full.subset(range(min(N_TRAIN, len(full))))
        val = full.subset(range(min(N_TRAIN, len(full)), len(full)))
        test = LabeledDataset(load_idx_images(si), load_idx_labels(sl), name)
        return train, val, test
    if name == "cifar10":
        base = os.path.join(data_dir, "cifar-10-batches-bin")
        if not os.path.isdir(base):
            base = data_dir
        parts = [load_cifar10_batch(os.path.join(base, f"data_batch_{i}.bin"))
                 for i in range(1, 5)]
        train = LabeledDataset(sum((p.images for p in parts), []),
                               np.concatenate([p.labels for p in parts]), name)
        val = load_cifar10_batch(os.path.join(base, "data_batch_5.bin"), name)
        test = load_cifar10_batch(os.path.join(base, "test_batch.bin"), name)
        return train, val, test
    raise ValueError(f"unknown dataset {name!r}")


# ---- synthetic digits -------------------------------------------------------

# 5x7 digit glyphs, one 5-bit row per byte, MSB = leftmost column.
_GLYPHS = {
    0: (0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E),
    1: (0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E),
    2: (0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F),
    3: (0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E),
    4: (0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02),
    5: (0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E),
    6: (0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E),
    7: (0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08),
    8: (0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E),
    9: (0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C),
}


def _glyph_array(digit):
    rows = _GLYPHS[digit]
    return np.array([[(r >> (4 - c)) & 1 for c in range(5)] for r in rows],
                    dtype=np.float64)


def make_synthetic_digits(n, seed=0, size=28, channels=1):
    """Seeded digit-glyph dataset: jittered 5x7 glyphs rendered at `size`.

    A stand-in with the same shape contract as MNIST for demos and tests;
    not a substitute for the real dataset in accuracy comparisons.
    """
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n):
        digit = int(rng.integers(N_CLASSES))
        canvas = np.zeros((size, size))
        glyph = np.kron(_glyph_array(digit), np.ones((3, 3)))  # 15x21
        gh, gw = glyph.shape
        y0 = (size - gh) // 2
        x0 = (size - gw) // 2
        canvas[y0:y0 + gh, x0:x0 + gw] = glyph

        angle = rng.uniform(-18, 18)
        scale = rng.uniform(0.85, 1.15)
        shift = rng.uniform(-2.5, 2.5, size=2)
        c, s = np.cos(np.deg2rad(angle)), np.sin(np.deg2rad(angle))
        mat = np.array([[c, -s], [s, c]]) / scale
        center = np.array([size / 2, size / 2])
        offset = center - mat @ (center + shift)
        warped = ndimage.affine_transform(canvas, mat, offset=offset, order=1)
        warped = ndimage.gaussian_filter(warped, sigma=0.6)
        peak = warped.max()
        if peak > 0:
            warped = warped / peak
        if channels == 1:
            px = warped[:, :, None]
        else:
            tint = rng.uniform(0.6, 1.0, size=3)
            px = warped[:, :, None] * tint[None, None, :]
        images.append(Image(np.clip(px, 0.0, 1.0)))
        labels.append(digit)
    return LabeledDataset(images, np.array(labels), "synthetic")
