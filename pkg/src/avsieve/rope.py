"""Multi-axis rotary position encodings over (time, height, width) triples.

A frequency schedule assigns each coordinate pair (2j, 2j+1) of a head vector
a rotation rate theta_j = theta_base^(-2j/d). A partition maps each frequency
index to one of the three position axes. The ``vanilla`` layout uses three
consecutive blocks [t, h, w], placing time on the highest frequencies only;
the ``sync`` layout appends a second temporal block [t, h, w, t] on the
lowest frequencies, giving time a slowly-rotating channel group that stays
stable across large position gaps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor, rotate_pairs_value

VANILLA = "vanilla"
SYNC = "sync"

AXIS_T, AXIS_H, AXIS_W = "t", "h", "w"
_AXIS_INDEX = {AXIS_T: 0, AXIS_H: 1, AXIS_W: 2}

# Named splits from the reference configurations; other widths fall back to
# proportional allocation by largest remainder.
_SPLIT_TABLE = {
    (SYNC, 64): (18, 18, 18, 10),
    (VANILLA, 64): (16, 24, 24),
    (SYNC, 16): (5, 4, 4, 3),
    (VANILLA, 16): (4, 6, 6),
}


@dataclass(frozen=True)
class FrequencySchedule:
    """Descending rotation rates theta_j = theta_base^(-2j/d), j in [0, d/2)."""

    theta_base: float
    d: int
    thetas: tuple[float, ...]

    @property
    def n_freqs(self) -> int:
        return len(self.thetas)


@dataclass(frozen=True)
class FrequencyPartition:
    """Ordered (axis, count) blocks over frequency indices, highest first."""

    blocks: tuple[tuple[str, int], ...]

    @property
    def n_freqs(self) -> int:
        return sum(count for _, count in self.blocks)

    def axis_indices(self) -> np.ndarray:
        """Per-frequency axis selector (0=t, 1=h, 2=w)."""
        out = np.empty(self.n_freqs, dtype=np.intp)
        j = 0
        for axis, count in self.blocks:
            out[j:j + count] = _AXIS_INDEX[axis]
            j += count
        return out


@dataclass(frozen=True)
class PositionTriple:
    """Integer (t, h, w) position ids; t counts 40 ms audio-token intervals."""

    t: int
    h: int
    w: int

    def __post_init__(self):
        if min(self.t, self.h, self.w) < 0:
            raise ValueError(f"PositionTriple: ids must be non-negative, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.t, self.h, self.w], dtype=np.int64)

    def shifted(self, dt: int = 0, dh: int = 0, dw: int = 0) -> "PositionTriple":
        return PositionTriple(self.t + dt, self.h + dh, self.w + dw)


@dataclass(frozen=True)
class RopeConfig:
    schedule: FrequencySchedule
    partition: FrequencyPartition


def build_schedule(theta_base: float, d: int) -> FrequencySchedule:
    """Frequency schedule for head dimension ``d`` (must be even)."""
    if d % 2 != 0 or d < 2:
        raise ValueError(f"build_schedule: d must be even and >= 2, got {d}")
    if theta_base <= 1:
        raise ValueError(f"build_schedule: theta_base must exceed 1, got {theta_base}")
    thetas = tuple(float(theta_base) ** (-2.0 * j / d) for j in range(d // 2))
    return FrequencySchedule(float(theta_base), int(d), thetas)


def make_partition(mode: str, splits: Sequence[int], d: int) -> FrequencyPartition:
    """Partition the d/2 frequencies into axis blocks.

    ``vanilla`` takes three counts for [t, h, w]; ``sync`` takes four for
    [t, h, w, t]. A sync split with a zero-size final block collapses to the
    vanilla layout, so the two modes coincide bit-exactly in that case.
    """
    total = d // 2
    expected = {VANILLA: 3, SYNC: 4}.get(mode)
    if expected is None:
        raise ValueError(f"make_partition: unknown mode {mode!r}")
    splits = tuple(int(s) for s in splits)
    if len(splits) != expected:
        raise ValueError(
            f"make_partition: {mode} mode expects {expected} splits, got {len(splits)}"
        )
    if any(s < 0 for s in splits) or sum(splits) != total:
        raise ValueError(
            f"make_partition: splits {splits} must be non-negative and sum to d/2 = {total}"
        )
    if mode == SYNC and splits[3] == 0:
        splits, mode = splits[:3], VANILLA
    axes = (AXIS_T, AXIS_H, AXIS_W) if mode == VANILLA else (AXIS_T, AXIS_H, AXIS_W, AXIS_T)
    return FrequencyPartition(tuple(zip(axes, splits)))


def default_splits(mode: str, n_freqs: int) -> tuple[int, ...]:
    """Reference split for ``n_freqs`` frequencies, scaled proportionally."""
    hit = _SPLIT_TABLE.get((mode, n_freqs))
    if hit is not None:
        return hit
    reference = _SPLIT_TABLE[(mode, 64)]
    raw = [n_freqs * r / 64 for r in reference]
    floors = [int(x) for x in raw]
    remainder = n_freqs - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: raw[i] - floors[i], reverse=True)
    for i in order[:remainder]:
        floors[i] += 1
    return tuple(floors)


def rope_config(head_dim: int, mode: str = SYNC, splits: Sequence[int] | None = None,
                theta_base: float = 10000.0) -> RopeConfig:
    schedule = build_schedule(theta_base, head_dim)
    if splits is None:
        splits = default_splits(mode, head_dim // 2)
    return RopeConfig(schedule, make_partition(mode, splits, head_dim))


def rotation_angles(pos: PositionTriple, schedule: FrequencySchedule,
                    partition: FrequencyPartition) -> np.ndarray:
    """Per-frequency rotation angle for one position."""
    if partition.n_freqs != schedule.n_freqs:
        raise ValueError(
            f"rotation_angles: partition covers {partition.n_freqs} frequencies, "
            f"schedule has {schedule.n_freqs}"
        )
    thetas = np.asarray(schedule.thetas)
    return thetas * pos.as_array()[partition.axis_indices()]


def position_angles(positions: np.ndarray, schedule: FrequencySchedule,
                    partition: FrequencyPartition) -> np.ndarray:
    """Angles for a batch of positions: (L, 3) int array -> (L, d/2)."""
    positions = np.asarray(positions)
    if positions.ndim != 2 or positions.shape[1] != 3:
        raise ValueError(f"position_angles: expected (L, 3) positions, got {positions.shape}")
    if partition.n_freqs != schedule.n_freqs:
        raise ValueError("position_angles: partition and schedule disagree on d/2")
    thetas = np.asarray(schedule.thetas)
    return positions[:, partition.axis_indices()].astype(np.float64) * thetas[None, :]


def apply_rope(x, pos: PositionTriple, schedule: FrequencySchedule,
               partition: FrequencyPartition):
    """Rotate a length-d vector by its position; preserves the 2-norm."""
    arr = x.array if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    if arr.shape != (schedule.d,):
        raise ValueError(f"apply_rope: expected shape ({schedule.d},), got {arr.shape}")
    out = rotate_pairs_value(arr, rotation_angles(pos, schedule, partition))
    return Tensor(out) if isinstance(x, Tensor) else out


def relative_kernel_curve(band: Iterable[int], schedule: FrequencySchedule,
                          delta_max: int) -> np.ndarray:
    """Mean per-channel cosine kernel g(delta) for delta in [0, delta_max].

    g(delta) = mean over the band of cos(theta_j * delta); g(0) = 1 exactly.
    High-frequency bands oscillate and alias within a few steps while
    low-frequency bands stay near 1 over long ranges.
    """
    idx = np.asarray(sorted(set(int(j) for j in band)), dtype=np.intp)
    if idx.size == 0:
        raise ValueError("relative_kernel_curve: band must be non-empty")
    if idx.min() < 0 or idx.max() >= schedule.n_freqs:
        raise ValueError(
            f"relative_kernel_curve: band indices must lie in [0, {schedule.n_freqs})"
        )
    thetas = np.asarray(schedule.thetas)[idx]
    deltas = np.arange(delta_max + 1, dtype=np.float64)
    return np.cos(thetas[:, None] * deltas[None, :]).mean(axis=0)
