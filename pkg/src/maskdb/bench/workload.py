"""Benchmark workload parameters and skewed key sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict
from typing import Optional
from typing import Tuple

import numpy as np

KiB = 1024
MiB = 1024 * KiB

SIZE_CLASSES: Dict[str, int] = {
    "small": 64 * KiB,
    "medium": 256 * KiB,
    "large": 1 * MiB,
}

# Location, scale and shape of the key popularity distribution.
SKEW_LOCATION = -1.0
SKEW_SCALE = 10.0
SKEW_SHAPE = 30.0

# Width of the sampled range mapped onto the key space, in scales.
SKEW_SPAN = 4.0


@dataclass(frozen=True)
class WorkloadSpec:
    """Thread counts, sizes and key skew of a benchmark run.

    ``samples`` is the number of timed operations per sequential
    scenario; ``prepopulate`` the number of items written before the
    concurrent scenarios. Both can be lowered for quick runs.

    """

    read_threads: int = 64
    write_threads: int = 16
    location: float = SKEW_LOCATION
    scale: float = SKEW_SCALE
    shape: float = SKEW_SHAPE
    sizes: Tuple[Tuple[str, int], ...] = tuple(SIZE_CLASSES.items())
    prepopulate: int = 10_000
    batch_size: int = 100
    batch_rounds: int = 10
    samples: int = 200
    concurrent_ops: int = 10_000
    seed: Optional[int] = 0

    def __post_init__(self) -> None:
        if self.read_threads < 1 or self.write_threads < 1:
            raise ValueError("Thread counts must be >= 1")
        if not self.sizes or any(size <= 0 for _, size in self.sizes):
            raise ValueError("Object sizes must be > 0")
        if self.scale <= 0:
            raise ValueError("Skew scale must be > 0")
        counts = (
            self.prepopulate,
            self.batch_size,
            self.batch_rounds,
            self.samples,
            self.concurrent_ops,
        )
        if min(counts) < 1:
            raise ValueError("Counts must be >= 1")

    @property
    def small_size(self) -> int:  # noqa: D102
        return min(size for _, size in self.sizes)


def skew_normal(
    rng: np.random.Generator,
    count: int,
    location: float,
    scale: float,
    shape: float,
) -> np.ndarray:
    """Draw skew-normal samples.

    Uses the two correlated normals construction: with
    ``delta = shape / sqrt(1 + shape**2)``, ``z = delta*|u0| + sqrt(1 -
    delta**2)*u1`` is skew-normal with the given shape.

    Args:
        rng: random generator.
        count: number of samples.
        location: location parameter.
        scale: scale parameter, > 0.
        shape: shape parameter; positive values skew right.

    Returns:
        ``count`` samples.

    """
    delta = shape / np.sqrt(1.0 + shape * shape)
    u0, u1 = rng.standard_normal((2, count))
    z = delta * np.abs(u0) + np.sqrt(1.0 - delta * delta) * u1
    return location + scale * z


def sample_keys(
    spec: WorkloadSpec,
    count: int,
    key_space: Optional[int] = None,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Sample key indices with a few hot keys.

    Skew-normal samples are shifted by the location, scaled so that
    ``SKEW_SPAN`` scales cover the key space, and clamped into it. Low
    indices are the hot ones.

    Args:
        spec: workload parameters.
        count: number of keys, >= 0.
        key_space: number of distinct keys; defaults to
            ``spec.prepopulate``.
        seed: overrides ``spec.seed``.

    Returns:
        ``count`` integer indices in ``[0, key_space)``.

    """
    if count < 0:
        raise ValueError("count must be >= 0")
    key_space = spec.prepopulate if key_space is None else key_space
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    samples = skew_normal(rng, count, spec.location, spec.scale, spec.shape)
    positions = (samples - spec.location) / (spec.scale * SKEW_SPAN)
    keys = np.floor(positions * key_space).astype(np.int64)
    return np.clip(keys, 0, key_space - 1)
