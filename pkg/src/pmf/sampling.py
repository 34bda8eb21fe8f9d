"""Farthest-point sampling hierarchies with covering radii."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .metric import MetricSpace

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = (1000, 2000, 4000, 8000, 16000)


@dataclass(frozen=True)
class Level:
    indices: np.ndarray
    radius: float

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass(frozen=True)
class SamplingHierarchy:
    """Nested farthest-point samples; level ``i`` is a prefix of level ``i + 1``."""

    levels: list[Level]
    seed: int
    order: np.ndarray = field(repr=False)

    @property
    def sizes(self) -> list[int]:
        return [lv.size for lv in self.levels]

    @property
    def radii(self) -> list[float]:
        return [lv.radius for lv in self.levels]

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i) -> Level:
        return self.levels[i]


def default_schedule(n: int) -> list[int]:
    """The six-scale schedule ``1e3, 2e3, 4e3, 8e3, 1.6e4, n`` clipped to `n`."""
    return [s for s in DEFAULT_SCHEDULE if s < n] + [int(n)]


def farthest_point_order(space: MetricSpace, count: int, seed: int = 0, checkpoints=()):
    """Greedy farthest-point order of `count` points starting at `seed`.

    Returns ``(order, radii)`` where ``radii[c]`` is the covering radius
    after the first ``c`` samples for each requested checkpoint ``c``
    (``count`` is always included). Ties go to the smallest index.

    Each new sample can only lower the nearest-sample distance of points
    closer to it than the current covering radius, so its column is
    computed with that radius as a search limit.
    """
    n = space.n
    count = int(count)
    if not 1 <= count <= n:
        raise ValueError(f"sample count {count} outside [1, {n}]")
    if not 0 <= seed < n:
        raise ValueError(f"seed {seed} out of range [0, {n})")
    want = set(int(c) for c in checkpoints) | {count}
    order = np.empty(count, dtype=np.int64)
    mind = np.full(n, np.inf)
    taken = np.zeros(n, dtype=bool)
    radii = {}
    cur = int(seed)
    for c in range(count):
        order[c] = cur
        taken[cur] = True
        lim = float(mind[~taken].max()) if c > 0 and not taken.all() else np.inf
        col = space.distance_columns([cur], limit=lim, cache=False)[0]
        np.minimum(mind, col, out=mind)
        mind[cur] = 0.0
        if c + 1 in want:
            radii[c + 1] = float(mind.max()) if (c + 1) < n else 0.0
        if c + 1 < count:
            score = np.where(taken, -1.0, mind)
            cur = int(np.argmax(score))
    return order, radii


def farthest_point_sampling(space: MetricSpace, level_sizes, seed: int = 0) -> SamplingHierarchy:
    """Build a nested hierarchy from one farthest-point run.

    `level_sizes` must be strictly increasing with the last entry at most
    ``space.n``; each level records its covering radius.
    """
    sizes = [int(s) for s in level_sizes]
    if not sizes:
        raise ValueError("level_sizes is empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"level sizes must be strictly increasing, got {sizes}")
    if sizes[0] < 1:
        raise ValueError("level sizes must be positive")
    if sizes[-1] > space.n:
        raise ValueError(f"level size {sizes[-1]} exceeds the number of points {space.n}")
    order, radii = farthest_point_order(space, sizes[-1], seed=seed, checkpoints=sizes)
    levels = []
    for s in sizes:
        idx = order[:s].copy()
        idx.flags.writeable = False
        levels.append(Level(idx, radii[s]))
    rs = [lv.radius for lv in levels]
    if any(b >= a for a, b in zip(rs, rs[1:])):
        logger.warning("covering radii are not strictly decreasing: %s", rs)
    order.flags.writeable = False
    return SamplingHierarchy(levels, int(seed), order)


def covering_radius(space: MetricSpace, samples) -> float:
    """Max over all points of the distance to the nearest sample."""
    cols = space.distance_columns(samples, cache=False)
    return float(cols.min(axis=0).max())


def write_hierarchy(h: SamplingHierarchy, path) -> None:
    """One line per level: ``n_i r_i idx...``."""
    with open(path, "w", encoding="ascii") as fh:
        for lv in h.levels:
            fh.write(f"{lv.size} {lv.radius!r} " + " ".join(map(str, lv.indices.tolist())) + "\n")


def read_hierarchy(path, seed: int | None = None) -> SamplingHierarchy:
    levels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            tok = line.split()
            if not tok:
                continue
            size, radius = int(tok[0]), float(tok[1])
            idx = np.array([int(t) for t in tok[2:]], dtype=np.int64)
            if idx.size != size:
                raise ValueError(f"{path}:{lineno}: level lists {idx.size} indices, header says {size}")
            levels.append(Level(idx, radius))
    if not levels:
        raise ValueError(f"{path}: no levels")
    order = levels[-1].indices
    return SamplingHierarchy(levels, int(order[0]) if seed is None else seed, order)
