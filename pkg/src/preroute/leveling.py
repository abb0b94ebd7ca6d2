"""Topological levelization and the multi-frequency level encoding.

Levels are computed over cell+net edges only; net_inv edges are reverse
companions and never constrain the ordering. A node's level is one more
than the maximum level among its timing predecessors (0 for sources), so
all dependencies cross strictly from lower to higher levels.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .graph import CircuitGraph, CircuitError

DEFAULT_FREQUENCIES = 8


@dataclass(frozen=True)
class LevelSchedule:
    levels: tuple[tuple[int, ...], ...]
    node_level: tuple[int, ...]

    @property
    def max_level(self) -> int:
        return len(self.levels) - 1

    def sizes(self) -> list[int]:
        return [len(l) for l in self.levels]


def topo_levels(graph: CircuitGraph) -> LevelSchedule:
    """Levelize a validated graph; deterministic (levels sorted by node id)."""
    n = graph.num_nodes
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for e in graph.edges:
        if e.kind in ("cell", "net"):
            indeg[e.dst] += 1
            succ[e.src].append(e.dst)

    level = [0] * n
    queue = deque(i for i in range(n) if indeg[i] == 0)
    seen = 0
    while queue:
        u = queue.popleft()
        seen += 1
        for v in succ[u]:
            level[v] = max(level[v], level[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(v)
    if seen != n:
        raise CircuitError(f"circuit {graph.name!r} has a cycle; cannot levelize")

    levels: list[list[int]] = [[] for _ in range(max(level) + 1 if n else 1)]
    for i in range(n):
        levels[level[i]].append(i)
    return LevelSchedule(levels=tuple(tuple(l) for l in levels), node_level=tuple(level))


def level_encoding(x: int, n_freq: int, max_level: int) -> np.ndarray:
    """Map a level index to [x, sin/cos pairs at doubling frequencies].

    Output length is 2*n_freq + 1; frequency f runs over 2^0 .. 2^(n_freq-1),
    each contributing sin(f*pi*x/L) and cos(f*pi*x/L).
    """
    if max_level < 1:
        raise ValueError(f"max_level must be >= 1, got {max_level}")
    if n_freq < 1:
        raise ValueError(f"n_freq must be >= 1, got {n_freq}")
    if not 0 <= x <= max_level:
        raise ValueError(f"level index {x} outside [0, {max_level}]")
    return encode_levels(np.asarray([x], dtype=np.float64), n_freq, max_level)[0]


def encode_levels(xs: np.ndarray, n_freq: int, max_level: int) -> np.ndarray:
    """Vectorized level encoding: [len(xs), 2*n_freq + 1]."""
    xs = np.asarray(xs, dtype=np.float64)
    freqs = 2.0 ** np.arange(n_freq)
    ang = np.pi * xs[:, None] * freqs[None, :] / float(max_level)
    out = np.empty((len(xs), 2 * n_freq + 1), dtype=np.float64)
    out[:, 0] = xs
    out[:, 1::2] = np.sin(ang)
    out[:, 2::2] = np.cos(ang)
    return out


def level_histogram(schedule: LevelSchedule) -> list[tuple[int, int]]:
    """(level index, node count) pairs, for the level-stats report."""
    return [(i, len(l)) for i, l in enumerate(schedule.levels)]
