"""Reconstruction quality metrics on magnitude images.

PSNR uses the reference's peak magnitude as the dynamic range. SSIM is the
standard Gaussian-window formulation (11x11, sigma 1.5, K1=0.01, K2=0.03)
averaged over fully valid window positions. Complex (H, W, 2) inputs are
reduced to magnitude first; plain 2D arrays are used as-is. Neither metric
mutates its inputs.
"""

from __future__ import annotations

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def magnitude(img: np.ndarray) -> np.ndarray:
    """Magnitude of an (H, W, 2) complex-pair image; 2D arrays pass through."""
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 2:
        return np.hypot(img[..., 0], img[..., 1])
    if img.ndim == 2:
        return img.astype(np.float64, copy=True)
    raise ValueError(f"expected (H, W) or (H, W, 2) image, got shape {img.shape}")


def psnr(x: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    mx, mr = magnitude(x), magnitude(ref)
    if mx.shape != mr.shape:
        raise ValueError(f"image shapes differ: {mx.shape} vs {mr.shape}")
    mse = np.mean((mx - mr) ** 2)
    if mse == 0.0:
        return float("inf")
    peak = mr.max()
    return float(10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalised 2D Gaussian window."""
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed_mean(img, window):
    k = window.shape[0]
    views = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("hwij,ij->hw", views, window)


def ssim(x: np.ndarray, ref: np.ndarray) -> float:
    """Mean structural similarity over valid window positions, in [-1, 1].

    Dynamic range is the reference's peak magnitude.
    """
    mx, mr = magnitude(x), magnitude(ref)
    if mx.shape != mr.shape:
        raise ValueError(f"image shapes differ: {mx.shape} vs {mr.shape}")
    if min(mx.shape) < SSIM_WINDOW:
        raise ValueError(
            f"image {mx.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    window = gaussian_window()
    L = mr.max()
    c1 = (SSIM_K1 * L) ** 2
    c2 = (SSIM_K2 * L) ** 2
    mu_x = _windowed_mean(mx, window)
    mu_y = _windowed_mean(mr, window)
    s_xx = _windowed_mean(mx * mx, window) - mu_x * mu_x
    s_yy = _windowed_mean(mr * mr, window) - mu_y * mu_y
    s_xy = _windowed_mean(mx * mr, window) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * s_xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (s_xx + s_yy + c2)
    return float(np.mean(num / den))
