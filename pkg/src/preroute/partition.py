"""Level-window graph partition with halo padding.

Sub-graphs are built by greedily accumulating whole consecutive levels
until the next level would reach the size bound, then emitting the window
padded with up to ``pad_levels`` preceding and succeeding levels. Padding
nodes keep the receptive field of core nodes intact but are excluded from
loss computation and gradients (``core_mask``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import CircuitGraph, EdgeRecord, NodeRecord
from .leveling import LevelSchedule


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class SubGraph:
    parent: str
    local_graph: CircuitGraph
    core_levels: tuple[int, int]
    pad_levels_before: tuple[int, int] | None
    pad_levels_after: tuple[int, int] | None
    core_mask: tuple[bool, ...]
    local_to_parent: tuple[int, ...]
    parent_levels: tuple[int, ...]

    @property
    def num_core(self) -> int:
        return sum(self.core_mask)


def _induce(graph: CircuitGraph, selected: list[int]) -> tuple[CircuitGraph, dict[int, int]]:
    to_local = {pid: i for i, pid in enumerate(selected)}
    nodes = []
    for i, pid in enumerate(selected):
        parent_node = graph.nodes[pid]
        nodes.append(
            NodeRecord(
                id=i,
                is_primary_input=parent_node.is_primary_input,
                is_primary_output=parent_node.is_primary_output,
                is_fanin=parent_node.is_fanin,
                is_fanout=parent_node.is_fanout,
                features=parent_node.features,
            )
        )
    edges = []
    used_luts = set()
    for e in graph.edges:
        if e.src in to_local and e.dst in to_local:
            edges.append(
                EdgeRecord(
                    src=to_local[e.src],
                    dst=to_local[e.dst],
                    kind=e.kind,
                    features=e.features,
                    lut_id=e.lut_id,
                )
            )
            if e.lut_id is not None:
                used_luts.add(e.lut_id)
    luts = {lut_id: graph.luts[lut_id] for lut_id in sorted(used_luts)}
    local = CircuitGraph(
        name=graph.name,
        nodes=tuple(nodes),
        edges=tuple(edges),
        luts=luts,
        feature_schema=graph.feature_schema,
    )
    return local, to_local


def _emit(
    graph: CircuitGraph,
    schedule: LevelSchedule,
    core_first: int,
    core_last: int,
    pad_levels: int,
    index: int,
) -> SubGraph:
    n_levels = len(schedule.levels)
    before_first = max(0, core_first - pad_levels)
    after_last = min(core_last + pad_levels, n_levels - 1)
    selected: list[int] = []
    for lvl in range(before_first, after_last + 1):
        selected.extend(schedule.levels[lvl])
    selected.sort()
    local, _ = _induce(graph, selected)
    local = CircuitGraph(
        name=f"{graph.name}.part{index}",
        nodes=local.nodes,
        edges=local.edges,
        luts=local.luts,
        feature_schema=local.feature_schema,
    )
    parent_levels = tuple(schedule.node_level[pid] for pid in selected)
    core_mask = tuple(core_first <= lvl <= core_last for lvl in parent_levels)
    return SubGraph(
        parent=graph.name,
        local_graph=local,
        core_levels=(core_first, core_last),
        pad_levels_before=(before_first, core_first - 1) if before_first < core_first else None,
        pad_levels_after=(core_last + 1, after_last) if after_last > core_last else None,
        core_mask=core_mask,
        local_to_parent=tuple(selected),
        parent_levels=parent_levels,
    )


def partition(
    graph: CircuitGraph,
    schedule: LevelSchedule,
    max_size: int,
    pad_levels: int,
    split_oversized: bool = False,
) -> list[SubGraph]:
    """Split a levelized graph into core windows of fewer than max_size nodes.

    A single level holding max_size or more nodes cannot be windowed (the
    greedy accumulation would never admit it); that raises unless
    split_oversized is set, in which case the level is emitted alone as one
    oversized core.
    """
    if max_size <= 0:
        raise PartitionError(f"max_size must be positive, got {max_size}")
    if pad_levels < 0:
        raise PartitionError(f"pad_levels must be >= 0, got {pad_levels}")
    levels = schedule.levels
    out: list[SubGraph] = []
    i = 0
    j = 0
    core_size = 0
    while i < len(levels) or core_size > 0:
        if i < len(levels) and core_size + len(levels[i]) < max_size:
            core_size += len(levels[i])
            i += 1
        elif core_size == 0:
            if not split_oversized:
                raise PartitionError(
                    f"level {i} has {len(levels[i])} nodes, which meets or exceeds "
                    f"max_size {max_size}; rerun with split_oversized to emit it alone"
                )
            out.append(_emit(graph, schedule, i, i, pad_levels, len(out)))
            i += 1
            j = i
        else:
            out.append(_emit(graph, schedule, j, i - 1, pad_levels, len(out)))
            j = i
            core_size = 0
    return out


def reassemble(subgraphs: list[SubGraph], values: list[np.ndarray], num_parent_nodes: int) -> np.ndarray:
    """Collect per-node values back onto the parent, cores only.

    values[t] holds one row per local node of subgraphs[t]; padding rows are
    discarded. Every parent node must be covered by exactly one core.
    """
    if len(subgraphs) != len(values):
        raise PartitionError(f"got {len(values)} value blocks for {len(subgraphs)} sub-graphs")
    first = np.asarray(values[0])
    out = np.zeros((num_parent_nodes,) + first.shape[1:], dtype=first.dtype)
    covered = np.zeros(num_parent_nodes, dtype=np.int64)
    for sub, vals in zip(subgraphs, values):
        vals = np.asarray(vals)
        if len(vals) != len(sub.local_to_parent):
            raise PartitionError(
                f"sub-graph {sub.local_graph.name!r}: {len(vals)} rows for "
                f"{len(sub.local_to_parent)} local nodes"
            )
        core_local = np.nonzero(np.asarray(sub.core_mask, dtype=bool))[0]
        parent_ids = np.asarray(sub.local_to_parent, dtype=np.int64)[core_local]
        out[parent_ids] = vals[core_local]
        np.add.at(covered, parent_ids, 1)
    bad = np.nonzero(covered != 1)[0]
    if len(bad):
        nid = int(bad[0])
        raise PartitionError(f"parent node {nid} covered by {int(covered[nid])} cores, expected 1")
    return out
