"""Pure-numpy kernels for the per-pixel filter inner loops.

Same contracts as the compiled extension in ``_kernels.pyx``; selected as a
fallback at import time by :mod:`smoothdef.kernels`. All functions take and
return 2-D float64 arrays (one channel), with any boundary padding already
applied by the caller.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def median_filter(padded: np.ndarray, kernel_size: int) -> np.ndarray:
    """Median over kernel_size x kernel_size windows of a padded channel."""
    win = sliding_window_view(padded, (kernel_size, kernel_size))
    return np.median(win, axis=(2, 3))


def bilateral_filter(
    padded: np.ndarray, diameter: int, sigma_space: float, sigma_range: float
) -> np.ndarray:
    """Bilateral filter of a channel padded by diameter//2 on each side."""
    r = diameter // 2
    win = sliding_window_view(padded, (diameter, diameter))
    center = win[:, :, r, r][:, :, np.newaxis, np.newaxis]
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    spatial = np.exp(-(dy * dy + dx * dx) / (2.0 * sigma_space * sigma_space))
    weights = spatial * np.exp(
        -((win - center) ** 2) / (2.0 * sigma_range * sigma_range)
    )
    return np.einsum("hwij,hwij->hw", weights, win) / weights.sum(axis=(2, 3))


def nlm_filter(
    padded: np.ndarray,
    height: int,
    width: int,
    patch_radius: int,
    search_radius: int,
    h_filter: float,
    patch_kernel: np.ndarray,
) -> np.ndarray:
    """Non-local means of a channel padded by search_radius + patch_radius.

    patch_kernel is the (2p+1, 2p+1) Gaussian patch weighting, sum 1. The sum
    over candidate pixels j runs over the (2s+1)^2 search window, offset by
    offset: the shifted view of the padded channel.
    """
    p, s = patch_radius, search_radius
    h2 = h_filter * h_filter
    base = padded[s : s + height + 2 * p, s : s + width + 2 * p]
    num = np.zeros((height, width))
    den = np.zeros((height, width))
    for dy in range(-s, s + 1):
        for dx in range(-s, s + 1):
            shifted = padded[
                s + dy : s + dy + height + 2 * p, s + dx : s + dx + width + 2 * p
            ]
            diff2 = (base - shifted) ** 2
            win = sliding_window_view(diff2, patch_kernel.shape)
            dist = np.einsum("hwij,ij->hw", win, patch_kernel)
            w = np.exp(-dist / h2)
            num += w * shifted[p : p + height, p : p + width]
            den += w
    return num / den


def diffusion_step(
    chan: np.ndarray, edge_scale: float, time_step: float, exponential: bool
) -> np.ndarray:
    """One explicit Perona-Malik step with replicate (zero-flux) boundary.

    Per 4-neighbor direction: flux = c(|delta|) * delta with delta the
    one-sided difference; c is the exponential or rational edge-stopping
    coefficient with scale edge_scale.
    """
    p = np.pad(chan, 1, mode="edge")
    out = chan.copy()
    for delta in (
        p[:-2, 1:-1] - chan,
        p[2:, 1:-1] - chan,
        p[1:-1, :-2] - chan,
        p[1:-1, 2:] - chan,
    ):
        g = (delta / edge_scale) ** 2
        c = np.exp(-g) if exponential else 1.0 / (1.0 + g)
        out += time_step * c * delta
    return out
