"""Synthetic complex-valued phantom images with consistent spectrograms.

Each phantom is a sum of random ellipses, lightly blurred, with a spatially
smooth random phase so the image is genuinely complex. Generation is a pure
function of (seed, index): sample i of a dataset is reproducible without
generating the first i-1 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .fourier import fft2_centered


@dataclass
class PhantomSample:
    """Ground-truth complex image and its exact spectrogram pair."""

    image: np.ndarray         # (H, W, 2) float64
    spectrogram: np.ndarray   # (H, W, 2) float64, fft2_centered(image)
    seed: int
    index: int
    ellipses: list = field(default_factory=list)


def _ellipse_mask(H, W, cy, cx, a, b, theta):
    y = (np.arange(H) + 0.5) / H - cy
    x = (np.arange(W) + 0.5) / W - cx
    yy, xx = np.meshgrid(y, x, indexing="ij")
    ct, st = np.cos(theta), np.sin(theta)
    u = (xx * ct + yy * st) / a
    v = (-xx * st + yy * ct) / b
    return (u * u + v * v) <= 1.0


def generate_phantom(H: int, W: int, seed: int, index: int) -> PhantomSample:
    """One phantom, deterministic in (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(index,)))
    n_ellipses = int(rng.integers(3, 9))
    magnitude = np.zeros((H, W))
    ellipses = []
    for _ in range(n_ellipses):
        e = {
            "cy": rng.uniform(0.25, 0.75),
            "cx": rng.uniform(0.25, 0.75),
            "a": rng.uniform(0.06, 0.28),
            "b": rng.uniform(0.06, 0.28),
            "theta": rng.uniform(0.0, np.pi),
            "intensity": rng.uniform(0.2, 1.0),
        }
        ellipses.append(e)
        magnitude += e["intensity"] * _ellipse_mask(H, W, e["cy"], e["cx"],
                                                    e["a"], e["b"], e["theta"])
    peak = rng.uniform(0.85, 1.1)
    top = magnitude.max()
    if top > 0:
        magnitude *= peak / top
    magnitude = gaussian_filter(magnitude, sigma=1.0, mode="constant")

    phase = gaussian_filter(rng.standard_normal((H, W)), sigma=max(H, W) / 8,
                            mode="reflect")
    span = np.abs(phase).max()
    if span > 0:
        phase *= rng.uniform(0.2, 0.45) * np.pi / span

    image = np.empty((H, W, 2))
    image[..., 0] = magnitude * np.cos(phase)
    image[..., 1] = magnitude * np.sin(phase)
    return PhantomSample(image=image, spectrogram=fft2_centered(image),
                         seed=seed, index=index, ellipses=ellipses)


def generate_phantoms(count: int, H: int, W: int, seed: int) -> list:
    """Dataset of ``count`` phantoms, deterministic in the seed."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    return [generate_phantom(H, W, seed, i) for i in range(count)]
