"""Figure and raster output: saliency overlays, segment boundaries, and
matplotlib curves for training, fidelity and superpixel-count sweeps.

Overlays are written both as dependency-free binary PPM (P6) and as PNG.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_ppm(path, rgb):
    """Write an (H, W, 3) float image in [0, 1] as binary PPM (P6)."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError("expected (H, W, 3) image")
    data = np.clip(np.round(rgb * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode())
        f.write(data.tobytes())


def read_ppm(path):
    with open(path, "rb") as f:
        if f.readline().strip() != b"P6":
            raise ValueError("not a P6 PPM file")
        w, h = (int(v) for v in f.readline().split())
        maxval = int(f.readline())
        data = np.frombuffer(f.read(w * h * 3), dtype=np.uint8)
    return data.reshape(h, w, 3).astype(np.float64) / maxval


def luminance(pixels):
    if pixels.shape[2] == 1:
        return pixels[:, :, 0]
    return pixels @ np.array([0.299, 0.587, 0.114])


def overlay_image(img, heat):
    """Blend saliency into the red channel: pixel = (1-s)*gray + s*red."""
    gray = luminance(img.pixels)
    if heat.shape != gray.shape:
        raise ValueError("heat map dimensions do not match the image")
    out = np.empty(gray.shape + (3,))
    out[:, :, 0] = (1 - heat) * gray + heat
    out[:, :, 1] = (1 - heat) * gray
    out[:, :, 2] = (1 - heat) * gray
    return out


def boundary_image(img, seg):
    """Source image with segment boundaries marked in red."""
    lab = seg.labels
    edge = np.zeros_like(lab, dtype=bool)
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    gray = luminance(img.pixels)
    out = np.repeat(gray[:, :, None], 3, axis=2)
    out[edge] = [1.0, 0.0, 0.0]
    return out


def save_raster(base_path, rgb):
    """Write both .ppm and .png next to each other; returns the paths."""
    ppm = f"{base_path}.ppm"
    png = f"{base_path}.png"
    write_ppm(ppm, rgb)
    plt.imsave(png, np.clip(rgb, 0, 1))
    return ppm, png


def plot_training_curves(history, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    epochs = [m.epoch for m in history]
    ax1.plot(epochs, [m.loss for m in history], color="tab:red")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("classification loss")
    ax2.plot(epochs, [m.train_acc for m in history], label="train")
    if not all(np.isnan(m.val_acc) for m in history):
        ax2.plot(epochs, [m.val_acc for m in history], label="validation")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0, 1)
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_fidelity_curves(reports, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for r in reports:
        ax.plot(r.thresholds, r.fidelity_at, marker="o", label=r.method)
    ax.set_xlabel("occlusion threshold")
    ax.set_ylabel("fidelity (accuracy drop)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_accuracy_vs_k(ks, accs, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, accs, marker="s")
    ax.set_xlabel("desired superpixel count")
    ax.set_ylabel("test accuracy")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
