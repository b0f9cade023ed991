"""Schedules, partitions, rotations, and kernel curves."""

import numpy as np
import pytest

from avsieve.rope import (
    SYNC,
    VANILLA,
    PositionTriple,
    apply_rope,
    build_schedule,
    default_splits,
    make_partition,
    position_angles,
    relative_kernel_curve,
    rope_config,
)


def test_schedule_closed_form_small():
    sched = build_schedule(10000, 8)
    np.testing.assert_allclose(sched.thetas, [1.0, 0.1, 0.01, 0.001], rtol=1e-12)


def test_schedule_single_frequency():
    assert build_schedule(123.0, 2).thetas == (1.0,)


def test_schedule_lowest_frequency_128():
    sched = build_schedule(10000, 128)
    assert sched.thetas[63] == pytest.approx(10000.0 ** (-126 / 128), rel=1e-12)
    assert sched.thetas[63] == pytest.approx(1.156e-4, rel=2e-3)


def test_schedule_strictly_decreasing_starting_at_one():
    sched = build_schedule(10000, 64)
    assert sched.thetas[0] == 1.0
    assert all(a > b for a, b in zip(sched.thetas, sched.thetas[1:]))


def test_schedule_rejects_odd_dimension():
    with pytest.raises(ValueError):
        build_schedule(10000, 7)
    with pytest.raises(ValueError):
        build_schedule(1.0, 8)


def test_partition_reference_splits():
    part = make_partition(SYNC, [18, 18, 18, 10], 128)
    assert len(part.blocks) == 4
    assert part.n_freqs == 64
    assert part.blocks == (("t", 18), ("h", 18), ("w", 18), ("t", 10))

    vanilla = make_partition(VANILLA, [16, 24, 24], 128)
    assert vanilla.blocks == (("t", 16), ("h", 24), ("w", 24))

    even = make_partition(SYNC, [16, 16, 16, 16], 128)
    assert even.n_freqs == 64


def test_partition_rejects_bad_splits():
    with pytest.raises(ValueError, match="64"):
        make_partition(SYNC, [18, 18, 18, 11], 128)
    with pytest.raises(ValueError, match="4 splits"):
        make_partition(SYNC, [18, 18, 28], 128)
    with pytest.raises(ValueError, match="3 splits"):
        make_partition(VANILLA, [16, 24, 24, 0], 128)


def test_sync_with_empty_final_block_is_vanilla():
    a = make_partition(SYNC, [16, 24, 24, 0], 128)
    b = make_partition(VANILLA, [16, 24, 24], 128)
    assert a == b


def test_default_splits_reference_and_fallback():
    assert default_splits(SYNC, 64) == (18, 18, 18, 10)
    assert default_splits(VANILLA, 16) == (4, 6, 6)
    assert sum(default_splits(SYNC, 4)) == 4
    assert default_splits(SYNC, 4)[3] >= 1


def test_apply_rope_zero_position_is_identity():
    cfg = rope_config(16)
    x = np.random.default_rng(0).normal(size=16)
    out = apply_rope(x, PositionTriple(0, 0, 0), cfg.schedule, cfg.partition)
    np.testing.assert_array_equal(out, x)


def test_apply_rope_planar_rotation():
    sched = build_schedule(10000, 2)
    part = make_partition(VANILLA, [1, 0, 0], 2)
    for delta in (1, 3, 7):
        out = apply_rope(np.array([1.0, 0.0]), PositionTriple(delta, 0, 0), sched, part)
        np.testing.assert_allclose(out, [np.cos(delta), np.sin(delta)], atol=1e-14)


def test_apply_rope_norm_preservation():
    rng = np.random.default_rng(1)
    for mode in (VANILLA, SYNC):
        cfg = rope_config(32, mode=mode)
        for _ in range(50):
            x = rng.normal(size=32)
            pos = PositionTriple(*rng.integers(0, 500, size=3))
            out = apply_rope(x, pos, cfg.schedule, cfg.partition)
            assert abs(np.linalg.norm(out) - np.linalg.norm(x)) < 1e-12


@pytest.mark.parametrize("mode", [VANILLA, SYNC])
def test_relative_shift_identity(mode):
    rng = np.random.default_rng(2)
    cfg = rope_config(32, mode=mode)
    for _ in range(100):
        q = rng.normal(size=32)
        k = rng.normal(size=32)
        p1 = PositionTriple(*rng.integers(0, 200, size=3))
        p2 = PositionTriple(*rng.integers(0, 200, size=3))
        shift = rng.integers(0, 100, size=3)
        base = np.dot(
            apply_rope(q, p1, cfg.schedule, cfg.partition),
            apply_rope(k, p2, cfg.schedule, cfg.partition),
        )
        moved = np.dot(
            apply_rope(q, p1.shifted(*shift), cfg.schedule, cfg.partition),
            apply_rope(k, p2.shifted(*shift), cfg.schedule, cfg.partition),
        )
        assert abs(base - moved) < 1e-10


def test_relative_shift_example_from_temporal_axis():
    cfg = rope_config(32)
    rng = np.random.default_rng(3)
    q, k = rng.normal(size=32), rng.normal(size=32)
    lhs = np.dot(
        apply_rope(q, PositionTriple(5, 2, 7), cfg.schedule, cfg.partition),
        apply_rope(k, PositionTriple(9, 2, 7), cfg.schedule, cfg.partition),
    )
    rhs = np.dot(
        apply_rope(q, PositionTriple(0, 2, 7), cfg.schedule, cfg.partition),
        apply_rope(k, PositionTriple(4, 2, 7), cfg.schedule, cfg.partition),
    )
    assert abs(lhs - rhs) < 1e-10


def test_axis_separation():
    cfg = rope_config(32, mode=SYNC)
    x = np.random.default_rng(4).normal(size=32)
    base = apply_rope(x, PositionTriple(11, 3, 6), cfg.schedule, cfg.partition)
    moved = apply_rope(x, PositionTriple(11, 9, 6), cfg.schedule, cfg.partition)
    axis = cfg.partition.axis_indices()
    non_h_pairs = np.where(axis != 1)[0]
    coords = np.concatenate([2 * non_h_pairs, 2 * non_h_pairs + 1])
    np.testing.assert_array_equal(base[coords], moved[coords])
    assert not np.array_equal(base, moved)


def test_sync_final_block_zero_matches_vanilla_bit_exactly():
    sched = build_schedule(10000, 128)
    sync0 = make_partition(SYNC, [16, 24, 24, 0], 128)
    vanilla = make_partition(VANILLA, [16, 24, 24], 128)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.normal(size=128)
        pos = PositionTriple(*rng.integers(0, 1000, size=3))
        a = apply_rope(x, pos, sched, sync0)
        b = apply_rope(x, pos, sched, vanilla)
        np.testing.assert_array_equal(a, b)


def test_kernel_curve_trivial_and_examples():
    sched = build_schedule(10000, 128)
    g_low = relative_kernel_curve([63], sched, 100)
    assert g_low[0] == 1.0
    assert g_low[100] == pytest.approx(np.cos(sched.thetas[63] * 100), abs=1e-15)
    assert g_low[100] > 0.99

    g_high = relative_kernel_curve([0], sched, 3)
    assert g_high[3] == pytest.approx(np.cos(3.0), abs=1e-15)
    assert g_high[3] < -0.98  # sign flip within three steps


def test_kernel_curve_band_contrast():
    sched = build_schedule(10000, 128)
    low = relative_kernel_curve(range(54, 64), sched, 500)
    high = relative_kernel_curve(range(18), sched, 500)
    assert low.min() >= 0.8
    assert high.min() <= 0.1


def test_kernel_curve_rejects_empty_band():
    with pytest.raises(ValueError):
        relative_kernel_curve([], build_schedule(10000, 8), 10)


def test_position_angles_matches_scalar_path():
    cfg = rope_config(16)
    positions = np.array([[3, 1, 4], [0, 0, 0], [25, 2, 2]])
    batch = position_angles(positions, cfg.schedule, cfg.partition)
    for i, row in enumerate(positions):
        single = apply_rope(np.eye(16)[0], PositionTriple(*row), cfg.schedule, cfg.partition)
        np.testing.assert_allclose(single[0], np.cos(batch[i, 0]), atol=1e-15)
