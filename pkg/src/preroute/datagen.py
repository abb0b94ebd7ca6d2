"""Deterministic synthetic circuit generator and oracle labeling.

Circuits are built stage by stage with alternating pin roles: a level of
net drivers (primary inputs or cell outputs) feeds a level of net sinks
(cell inputs), which feeds the next level of cell outputs. Every cell/net
edge therefore connects adjacent topological levels, which mirrors the
same-role-per-level structure the partitioner relies on and keeps level
padding equivalent to hop-distance padding.

Identical seeds produce byte-identical documents; per-circuit RNG streams
are derived from (seed, circuit index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .graph import (
    NODE_FEATURE_SCHEMA,
    CircuitGraph,
    EdgeRecord,
    Lut,
    NodeRecord,
    check,
)
from .leveling import topo_levels
from .sta import (
    CHANNELS,
    NetDelayModel,
    TimingAnnotation,
    _edge_arrays,
    endpoints_of,
    propagate_forward,
    propagate_rat,
    slack,
)

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    n_nodes: int = 2000
    fanin_max: int = 2
    depth_bias: float = 0.25
    lut_grid: tuple[int, int] = (4, 4)
    placement_extent: tuple[float, float] = (100.0, 100.0)
    rat_margin: float = 0.0
    n_luts: int = 8
    boundary_slew: tuple[float, float, float, float] = (0.04, 0.05, 0.055, 0.065)

    def validate(self) -> None:
        if self.n_nodes < 3:
            raise ValueError(f"n_nodes must be >= 3, got {self.n_nodes}")
        if self.fanin_max < 1:
            raise ValueError(f"fanin_max must be >= 1, got {self.fanin_max}")
        if self.depth_bias <= 0:
            raise ValueError("depth_bias must be positive")
        if min(self.lut_grid) < 1 or min(self.placement_extent) <= 0 or self.n_luts < 1:
            raise ValueError("lut_grid, placement_extent and n_luts must be positive")


@dataclass(frozen=True)
class CorpusConfig:
    seed: int = 0
    n_train: int = 14
    n_test: int = 7
    node_range: tuple[int, int] = (1000, 50000)
    base: GenConfig = field(default_factory=GenConfig)
    net_model: NetDelayModel = field(default_factory=NetDelayModel)

    @classmethod
    def from_doc(cls, doc: dict) -> "CorpusConfig":
        base = GenConfig(**doc.get("base", {})) if "base" in doc else GenConfig()
        if isinstance(base.lut_grid, list):
            base = replace(base, lut_grid=tuple(base.lut_grid))
        if isinstance(base.placement_extent, list):
            base = replace(base, placement_extent=tuple(base.placement_extent))
        if isinstance(base.boundary_slew, list):
            base = replace(base, boundary_slew=tuple(base.boundary_slew))
        net_model = NetDelayModel.from_doc(doc["net_model"]) if "net_model" in doc else NetDelayModel()
        return cls(
            seed=int(doc.get("seed", 0)),
            n_train=int(doc.get("n_train", 14)),
            n_test=int(doc.get("n_test", 7)),
            node_range=tuple(doc.get("node_range", (1000, 50000))),
            base=base,
            net_model=net_model,
        )


def _random_lut(rng: np.random.Generator, grid: tuple[int, int]) -> Lut:
    n_rows, n_cols = grid
    rows = np.cumsum(rng.uniform(0.03, 0.4, size=n_rows)) + 0.01
    cols = np.cumsum(rng.uniform(0.2, 0.8, size=n_cols)) + 0.3
    base_delay = rng.uniform(0.05, 0.3)
    row_inc = np.cumsum(rng.uniform(0.02, 0.15, size=n_rows))
    col_inc = np.cumsum(rng.uniform(0.02, 0.2, size=n_cols))
    delay = base_delay + row_inc[:, None] + col_inc[None, :]
    base_slew = rng.uniform(0.03, 0.08)
    srow = np.cumsum(rng.uniform(0.01, 0.1, size=n_rows))
    scol = np.cumsum(rng.uniform(0.01, 0.12, size=n_cols))
    slew = base_slew + srow[:, None] + scol[None, :]
    return Lut(
        row_axis=tuple(float(v) for v in rows),
        col_axis=tuple(float(v) for v in cols),
        delay_table=tuple(tuple(float(v) for v in r) for r in delay),
        slew_table=tuple(tuple(float(v) for v in r) for r in slew),
    )


def gen_circuit(cfg: GenConfig, name: str = "circuit") -> CircuitGraph:
    """Generate a validated random circuit; identical cfg -> identical graph."""
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))

    n_pi = max(2, min(256, cfg.n_nodes // 100))
    stages = max(1, int(round(cfg.depth_bias * math.sqrt(cfg.n_nodes) * rng.uniform(0.9, 1.1))))
    mean_pins = 1.0 + (1 + cfg.fanin_max) / 2.0
    n_cells = max(stages, int(round((cfg.n_nodes - n_pi) / mean_pins)))

    cells_per_stage = np.full(stages, n_cells // stages, dtype=np.int64)
    cells_per_stage[: n_cells % stages] += 1
    rng.shuffle(cells_per_stage)
    cells_per_stage = np.maximum(cells_per_stage, 1)

    width, height = cfg.placement_extent
    luts = {f"lut{k}": _random_lut(rng, cfg.lut_grid) for k in range(cfg.n_luts)}
    lut_names = sorted(luts)

    nodes: list[NodeRecord] = []
    edges: list[EdgeRecord] = []
    xs: list[float] = []
    ys: list[float] = []

    def add_node(is_pi=False, is_fanin=False, is_fanout=False) -> int:
        nid = len(nodes)
        nodes.append(
            NodeRecord(id=nid, is_primary_input=is_pi, is_fanin=is_fanin, is_fanout=is_fanout)
        )
        xs.append(float(rng.uniform(0, width)))
        ys.append(float(rng.uniform(0, height)))
        return nid

    drivers = [add_node(is_pi=True, is_fanout=True) for _ in range(n_pi)]

    for s in range(stages):
        n_stage_cells = int(cells_per_stage[s])
        fanin_counts = rng.integers(1, cfg.fanin_max + 1, size=n_stage_cells)
        # every current driver must sink somewhere if capacity allows
        total_fanins = int(fanin_counts.sum())
        if total_fanins < len(drivers):
            extra = len(drivers) - total_fanins
            grow = np.nonzero(fanin_counts < cfg.fanin_max)[0]
            for idx in grow[:extra]:
                fanin_counts[idx] += 1
            total_fanins = int(fanin_counts.sum())

        fanins = [add_node(is_fanin=True) for _ in range(total_fanins)]
        assignment = np.empty(total_fanins, dtype=np.int64)
        n_fixed = min(len(drivers), total_fanins)
        assignment[:n_fixed] = rng.permutation(len(drivers))[:n_fixed]
        if total_fanins > len(drivers):
            assignment[n_fixed:] = rng.integers(0, len(drivers), size=total_fanins - n_fixed)
        order = rng.permutation(total_fanins)
        for pos, fanin in enumerate(fanins):
            src = drivers[int(assignment[order[pos]])]
            dx = xs[fanin] - xs[src]
            dy = ys[fanin] - ys[src]
            man = abs(dx) + abs(dy)
            edges.append(EdgeRecord(src=src, dst=fanin, kind="net", features=(dx, dy, man)))
            edges.append(EdgeRecord(src=fanin, dst=src, kind="net_inv", features=(-dx, -dy, man)))

        new_drivers = []
        cursor = 0
        for c in range(n_stage_cells):
            out_pin = add_node(is_fanout=True)
            lut_id = lut_names[int(rng.integers(0, len(lut_names)))]
            for _ in range(int(fanin_counts[c])):
                edges.append(EdgeRecord(src=fanins[cursor], dst=out_pin, kind="cell", lut_id=lut_id))
                cursor += 1
            new_drivers.append(out_pin)
        drivers = new_drivers

    caps = rng.uniform(0.5, 2.0, size=len(nodes))
    has_out = [False] * len(nodes)
    for e in edges:
        if e.kind in ("cell", "net"):
            has_out[e.src] = True

    interim = CircuitGraph(
        name=name,
        nodes=tuple(
            NodeRecord(
                id=nd.id,
                is_primary_input=nd.is_primary_input,
                is_primary_output=not has_out[nd.id],
                is_fanin=nd.is_fanin,
                is_fanout=nd.is_fanout,
                features=(0.0,) * len(NODE_FEATURE_SCHEMA),
            )
            for nd in nodes
        ),
        edges=tuple(edges),
        luts=luts,
    )
    schedule = topo_levels(interim)
    max_level = max(schedule.max_level, 1)

    final_nodes = []
    for nd in interim.nodes:
        nid = nd.id
        feats = (
            1.0 if nd.is_primary_input else 0.0,
            1.0 if nd.is_primary_output else 0.0,
            1.0 if nd.is_fanin else 0.0,
            1.0 if nd.is_fanout else 0.0,
            xs[nid] / width,
            ys[nid] / height,
            float(caps[nid]),
            schedule.node_level[nid] / max_level,
        )
        final_nodes.append(
            NodeRecord(
                id=nid,
                is_primary_input=nd.is_primary_input,
                is_primary_output=nd.is_primary_output,
                is_fanin=nd.is_fanin,
                is_fanout=nd.is_fanout,
                features=feats,
            )
        )
    graph = CircuitGraph(name=name, nodes=tuple(final_nodes), edges=tuple(edges), luts=luts)
    return check(graph)


def label_circuit(graph: CircuitGraph, net_model: NetDelayModel, cfg: GenConfig) -> TimingAnnotation:
    """Golden labels: zero boundary arrivals, endpoint RAT at critical AT +/- margin."""
    schedule = topo_levels(graph)
    zeros = np.zeros(4)
    slew0 = np.asarray(cfg.boundary_slew, dtype=np.float64)
    boundary_at = {i: zeros for i in range(graph.num_nodes) if graph.nodes[i].is_primary_input}
    boundary_slew = {i: slew0 for i in boundary_at}

    at, at_slew, net_delay, cell_delay = propagate_forward(graph, schedule, boundary_at, boundary_slew, net_model)
    ends = endpoints_of(graph)
    end_at = at[ends]
    rat_vec = np.empty(4)
    rat_vec[0] = end_at[:, 0].min() - cfg.rat_margin
    rat_vec[1] = end_at[:, 1].min() - cfg.rat_margin
    rat_vec[2] = end_at[:, 2].max() + cfg.rat_margin
    rat_vec[3] = end_at[:, 3].max() + cfg.rat_margin
    endpoint_rat = {e: rat_vec for e in ends}
    rat = propagate_rat(graph, schedule, endpoint_rat, net_delay, cell_delay)

    arrays = _edge_arrays(graph)
    return TimingAnnotation(
        at=at,
        slew=at_slew,
        rat=rat,
        slack=slack(at, rat),
        net_edges=arrays.net_edges,
        net_delay=net_delay,
        cell_edges=arrays.cell_edges,
        cell_delay=cell_delay,
    )


def corpus_circuit_configs(cfg: CorpusConfig) -> list[tuple[str, str, GenConfig]]:
    """(name, split, per-circuit GenConfig) for each corpus member."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0DE]))
    lo, hi = cfg.node_range
    total = cfg.n_train + cfg.n_test
    sizes = np.exp(rng.uniform(np.log(lo), np.log(hi), size=total)).astype(np.int64)
    out = []
    for idx in range(total):
        split = "train" if idx < cfg.n_train else "test"
        local = idx if split == "train" else idx - cfg.n_train
        member = replace(cfg.base, seed=cfg.seed * 100003 + idx, n_nodes=int(sizes[idx]))
        out.append((f"{split}{local:02d}", split, member))
    return out


def build_manifest(cfg: CorpusConfig, entries: list[dict]) -> dict:
    return {
        "format_version": MANIFEST_VERSION,
        "seed": cfg.seed,
        "net_model": cfg.net_model.to_doc(),
        "channels": list(CHANNELS),
        "circuits": entries,
    }
