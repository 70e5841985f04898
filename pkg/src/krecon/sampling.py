"""Undersampling masks and the sampled k-space point sets they produce.

Two mask families: uniform 1D Cartesian (whole phase-encode columns) and
variable-density Gaussian 2D (independent per-bin draws). Both keep the DC
bin sampled and record their achieved acceleration. Normalised coordinates
use half-pixel centering, bin (r, c) -> ((r + 0.5)/H, (c + 0.5)/W), so grids
of different resolutions sample the same continuous domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError

DEFAULT_CENTER_FRACTION = 0.08
DEFAULT_SIGMA_FRACTION = 0.25


@dataclass
class Mask:
    """Binary k-space sampling pattern plus its generation metadata."""

    grid: np.ndarray            # (H, W) uint8, entries in {0, 1}
    kind: str                   # "uniform1d" | "gaussian2d" | "full"
    target_accel: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise DimensionError(f"mask grid must be 2D, got shape {g.shape}")
        if not np.isin(g, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        if g.sum() < 1:
            raise ValueError("mask must sample at least one bin")
        h, w = g.shape
        if g[h // 2, w // 2] != 1:
            raise ValueError("mask must sample the DC (center) bin")
        self.grid = g.astype(np.uint8)

    @property
    def shape(self):
        return self.grid.shape

    def popcount(self) -> int:
        return int(self.grid.sum())


def acceleration(mask: Mask) -> float:
    """Achieved acceleration H*W / number of sampled bins (>= 1)."""
    h, w = mask.shape
    return h * w / mask.popcount()


def make_uniform_1d_mask(H: int, W: int, accel: float,
                         center_fraction: float = DEFAULT_CENTER_FRACTION,
                         offset: int = 0) -> Mask:
    """Uniform 1D Cartesian mask: whole columns, deterministic.

    A fully sampled block of ceil(center_fraction * W) central columns, plus
    evenly spaced columns outside it. The spacing is chosen so the total
    sampled column count approximates W / accel. The DC column is always
    included.

    Parameters
    ----------
    accel : target acceleration, >= 1.
    center_fraction : fraction of columns in the always-sampled center block.
    offset : phase of the evenly spaced columns; must be < round(accel).
    """
    if accel < 1:
        raise ValueError(f"acceleration must be >= 1, got {accel}")
    if not 0 <= center_fraction < 1:
        raise ValueError(f"center_fraction must be in [0, 1), got {center_fraction}")
    if offset >= max(1, round(accel)):
        raise ValueError(f"offset {offset} must be < round(accel) = {round(accel)}")

    n_center = int(np.ceil(center_fraction * W))
    target_cols = int(round(W / accel))
    if n_center > target_cols:
        raise ValueError(
            f"center block of {n_center} columns exceeds the sampling budget "
            f"of {target_cols} columns for {accel}x acceleration")

    cols = np.zeros(W, dtype=bool)
    start = (W - n_center) // 2
    cols[start:start + n_center] = True
    cols[W // 2] = True  # DC column regardless of center_fraction

    outside = np.flatnonzero(~cols)
    budget = target_cols - int(cols.sum())
    if budget > 0 and outside.size > 0:
        spacing = max(1, int(round(outside.size / budget)))
        cols[outside[offset::spacing]] = True

    grid = np.repeat(cols[None, :].astype(np.uint8), H, axis=0)
    mask = Mask(grid, "uniform1d", float(accel),
                meta={"center_fraction": center_fraction, "offset": offset,
                      "undersampled_axis": "columns"})
    mask.meta["achieved_accel"] = acceleration(mask)
    return mask


def make_gaussian_2d_mask(H: int, W: int, accel: float,
                          sigma_fraction: float = DEFAULT_SIGMA_FRACTION,
                          seed: int = 0) -> Mask:
    """Variable-density Gaussian 2D mask.

    Per-bin inclusion probability proportional to
    exp(-||k - center||^2 / (2 sigma^2)) with sigma = sigma_fraction *
    min(H, W), rescaled (and clamped at 1) so the expected sampled count is
    H*W / accel, then drawn independently per bin. The DC bin is forced on.
    """
    if accel < 1:
        raise ValueError(f"acceleration must be >= 1, got {accel}")
    if sigma_fraction <= 0:
        raise ValueError(f"sigma_fraction must be positive, got {sigma_fraction}")

    target = H * W / accel
    sigma = sigma_fraction * min(H, W)
    r = np.arange(H) - H // 2
    c = np.arange(W) - W // 2
    dist2 = r[:, None] ** 2 + c[None, :] ** 2
    density = np.exp(-dist2 / (2 * sigma ** 2))

    if target >= H * W - 0.5:
        probs = np.ones((H, W))
    else:
        # Monotone in alpha: bisect for sum(min(1, alpha * density)) == target.
        lo, hi = 0.0, 1.0 / density[density > 0].min()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if np.minimum(1.0, mid * density).sum() < target:
                lo = mid
            else:
                hi = mid
        probs = np.minimum(1.0, hi * density)
        if probs.max() >= 1.0 and probs.sum() < target - 1:
            raise ValueError(
                f"cannot calibrate gaussian mask: need {target:.0f} samples but "
                f"saturated probabilities yield only {probs.sum():.0f}")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    grid = (rng.random((H, W)) < probs).astype(np.uint8)
    grid[H // 2, W // 2] = 1
    mask = Mask(grid, "gaussian2d", float(accel),
                meta={"sigma_fraction": sigma_fraction, "seed": seed})
    mask.meta["achieved_accel"] = acceleration(mask)
    return mask


def full_mask(H: int, W: int) -> Mask:
    """All-ones mask (no undersampling)."""
    mask = Mask(np.ones((H, W), dtype=np.uint8), "full", 1.0)
    mask.meta["achieved_accel"] = 1.0
    return mask


@dataclass
class SampledPointSet:
    """The observed k-space points: complex values plus normalised positions.

    ``values[i]`` is the (real, imag) pair at row-major mask bin i;
    ``positions[i]`` its half-pixel-centered normalised (row, col) coordinate.
    """

    values: np.ndarray      # (n, 2)
    positions: np.ndarray   # (n, 2) in (0, 1)^2
    indices: np.ndarray     # (n, 2) integer bin coordinates (row, col)
    mask: Mask
    grid_shape: tuple

    @property
    def n(self) -> int:
        return self.values.shape[0]


def grid_coords(H: int, W: int, dtype=np.float64) -> np.ndarray:
    """Normalised half-pixel-centered coordinates of every bin, row-major (H*W, 2)."""
    r = (np.arange(H, dtype=dtype) + 0.5) / H
    c = (np.arange(W, dtype=dtype) + 0.5) / W
    rr, cc = np.meshgrid(r, c, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def apply_mask(full: np.ndarray, mask: Mask):
    """Gather the sampled points and form the zero-filled spectrogram.

    Returns (SampledPointSet, zero_filled) where zero_filled equals ``full``
    at sampled bins and 0 elsewhere.
    """
    full = np.asarray(full)
    if full.ndim != 3 or full.shape[2] != 2:
        raise DimensionError(f"spectrogram must be (H, W, 2), got {full.shape}")
    if full.shape[:2] != mask.shape:
        raise DimensionError(
            f"spectrogram {full.shape[:2]} and mask {mask.shape} dims differ")
    h, w = mask.shape
    rows, cols = np.nonzero(mask.grid)
    values = full[rows, cols, :].copy()
    positions = np.stack([(rows + 0.5) / h, (cols + 0.5) / w], axis=1)
    zero_filled = full * mask.grid[:, :, None]
    points = SampledPointSet(values=values, positions=positions,
                             indices=np.stack([rows, cols], axis=1),
                             mask=mask, grid_shape=(h, w))
    return points, zero_filled
