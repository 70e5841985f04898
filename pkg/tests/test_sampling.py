"""Mask generators and point-set gathering."""

import numpy as np
import pytest

from krecon import fourier as F
from krecon import sampling as S


# ---------------------------------------------------------------------------
# uniform 1D

def test_uniform_accel_one_is_all_ones():
    m = S.make_uniform_1d_mask(8, 8, accel=1.0, center_fraction=0.0)
    assert m.grid.sum() == 64
    assert S.acceleration(m) == 1.0


def test_uniform_column_structure():
    m = S.make_uniform_1d_mask(16, 32, accel=4.0)
    col_sums = m.grid.sum(axis=0)
    assert np.isin(col_sums, (0, 16)).all()


def test_uniform_64_at_2p5x_budget():
    m = S.make_uniform_1d_mask(64, 64, accel=2.5, center_fraction=0.08)
    # center block: ceil(0.08 * 64) = 6 columns, all sampled
    center = m.grid[:, 29:35]
    assert center.all()
    achieved = S.acceleration(m)
    assert abs(achieved - 2.5) / 2.5 < 0.10


@pytest.mark.parametrize("accel", [2.5, 5.0])
def test_uniform_achieved_accel_within_ten_percent(accel):
    m = S.make_uniform_1d_mask(64, 64, accel=accel)
    assert abs(S.acceleration(m) - accel) / accel < 0.10


def test_uniform_deterministic():
    a = S.make_uniform_1d_mask(32, 32, accel=5.0, offset=1)
    b = S.make_uniform_1d_mask(32, 32, accel=5.0, offset=1)
    assert np.array_equal(a.grid, b.grid)


def test_uniform_dc_column_always_sampled():
    m = S.make_uniform_1d_mask(16, 16, accel=5.0, center_fraction=0.0)
    assert m.grid[:, 8].all()


def test_uniform_center_block_over_budget_rejected():
    with pytest.raises(ValueError):
        S.make_uniform_1d_mask(64, 64, accel=20.0, center_fraction=0.5)


def test_uniform_offset_bound():
    with pytest.raises(ValueError):
        S.make_uniform_1d_mask(64, 64, accel=2.5, offset=2)
    S.make_uniform_1d_mask(64, 64, accel=2.5, offset=1)


# ---------------------------------------------------------------------------
# gaussian 2D

def test_gaussian_accel_one_is_all_ones():
    m = S.make_gaussian_2d_mask(16, 16, accel=1.0)
    assert m.grid.sum() == 256


def test_gaussian_achieved_accel_over_seeds():
    accels = [S.acceleration(S.make_gaussian_2d_mask(64, 64, accel=5.0, seed=s))
              for s in range(20)]
    assert abs(np.mean(accels) - 5.0) / 5.0 < 0.05


def test_gaussian_same_seed_identical():
    a = S.make_gaussian_2d_mask(32, 32, accel=5.0, seed=7)
    b = S.make_gaussian_2d_mask(32, 32, accel=5.0, seed=7)
    assert np.array_equal(a.grid, b.grid)
    c = S.make_gaussian_2d_mask(32, 32, accel=5.0, seed=8)
    assert not np.array_equal(a.grid, c.grid)


def test_gaussian_density_concentrates_at_center():
    m = S.make_gaussian_2d_mask(64, 64, accel=10.0, seed=0)
    center = m.grid[24:40, 24:40].mean()
    edge = np.concatenate([m.grid[:8, :].ravel(), m.grid[-8:, :].ravel()]).mean()
    assert center > 3 * edge


def test_gaussian_dc_always_sampled():
    for s in range(5):
        m = S.make_gaussian_2d_mask(32, 32, accel=10.0, seed=s)
        assert m.grid[16, 16] == 1


# ---------------------------------------------------------------------------
# acceleration accessor

def test_acceleration_values():
    assert S.acceleration(S.full_mask(4, 4)) == 1.0
    grid = np.zeros((4, 4), dtype=np.uint8)
    grid[::2, :] = 1
    m = S.Mask(grid, "uniform1d", 2.0)
    assert S.acceleration(m) == 2.0
    g = S.make_gaussian_2d_mask(32, 32, accel=5.0, seed=1)
    assert g.meta["achieved_accel"] == S.acceleration(g)


def test_mask_invariants_enforced():
    with pytest.raises(ValueError):
        S.Mask(np.zeros((4, 4), dtype=np.uint8), "full", 1.0)  # no ones
    grid = np.ones((4, 4), dtype=np.uint8)
    grid[2, 2] = 0  # DC bin off
    with pytest.raises(ValueError):
        S.Mask(grid, "full", 1.0)


# ---------------------------------------------------------------------------
# apply_mask

def rand_grid(rng, h, w):
    return rng.standard_normal((h, w, 2))


def test_apply_full_mask_keeps_everything():
    rng = np.random.default_rng(20)
    g = rand_grid(rng, 8, 8)
    pts, zf = S.apply_mask(g, S.full_mask(8, 8))
    assert pts.n == 64
    np.testing.assert_array_equal(zf, g)


def test_apply_single_center_bin():
    g = np.arange(8 * 8 * 2, dtype=float).reshape(8, 8, 2)
    grid = np.zeros((8, 8), dtype=np.uint8)
    grid[4, 4] = 1
    pts, zf = S.apply_mask(g, S.Mask(grid, "full", 64.0))
    assert pts.n == 1
    np.testing.assert_allclose(pts.positions[0], [0.5625, 0.5625])
    np.testing.assert_array_equal(pts.values[0], g[4, 4])
    assert zf[4, 4, 0] == g[4, 4, 0] and np.count_nonzero(zf) == 2


def test_apply_even_center_position_rule():
    # bin (H//2, W//2) of an even grid maps to ((H/2+0.5)/H, ...), the rule's
    # nearest position to the continuous center
    grid = np.zeros((2, 2), dtype=np.uint8)
    grid[1, 1] = 1
    pts, _ = S.apply_mask(np.ones((2, 2, 2)), S.Mask(grid, "full", 4.0))
    np.testing.assert_allclose(pts.positions[0], [0.75, 0.75])


def test_scatter_gather_round_trip():
    rng = np.random.default_rng(21)
    g = rand_grid(rng, 16, 16)
    m = S.make_gaussian_2d_mask(16, 16, accel=3.0, seed=2)
    pts, zf = S.apply_mask(g, m)
    assert pts.n == m.popcount()
    rebuilt = np.zeros_like(g)
    rebuilt[pts.indices[:, 0], pts.indices[:, 1], :] = pts.values
    np.testing.assert_array_equal(rebuilt, zf)
    # positions are distinct and map back to mask-1 bins
    assert len({tuple(p) for p in pts.positions.tolist()}) == pts.n
    assert m.grid[pts.indices[:, 0], pts.indices[:, 1]].all()


def test_apply_mask_dim_mismatch():
    with pytest.raises(Exception):
        S.apply_mask(np.zeros((8, 8, 2)), S.full_mask(4, 4))


def test_masking_commutes_with_ifft_of_product():
    rng = np.random.default_rng(22)
    g = rand_grid(rng, 16, 16)
    m = S.make_uniform_1d_mask(16, 16, accel=2.0)
    _, zf = S.apply_mask(g, m)
    direct = F.ifft2_centered(g * m.grid[:, :, None])
    np.testing.assert_allclose(F.ifft2_centered(zf), direct, atol=1e-12)
