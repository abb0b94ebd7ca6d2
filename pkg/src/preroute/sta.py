"""Exact golden static timing analysis over the circuit DAG.

Four timing channels are analyzed at once, ordered early/rise, early/fall,
late/rise, late/fall. Arrival times propagate forward level by level
(min-reduced on early channels, max-reduced on late); required arrival
times propagate backward from endpoints; slack is their signed difference.
Cell arcs are looked up in delay/slew tables with bilinear interpolation,
clamped at the table borders.

Within one level all nodes are independent (their timing predecessors live
in strictly earlier levels), so any evaluation order gives identical
results under the fixed tie-break: at a multi-fanin reduction the slew of
the predecessor achieving the arrival extremum wins, ties going to the
smallest predecessor id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graph import CircuitGraph, Lut
from .leveling import LevelSchedule

CHANNELS = ("early_rise", "early_fall", "late_rise", "late_fall")
EARLY = (0, 1)
LATE = (2, 3)

LABEL_FORMAT_VERSION = 1


class StaError(ValueError):
    pass


@dataclass(frozen=True)
class Corner:
    mode: str  # early | late
    transition: str  # rise | fall

    @property
    def channel(self) -> int:
        return CHANNELS.index(f"{self.mode}_{self.transition}")


CORNERS = tuple(Corner(mode, transition) for mode in ("early", "late") for transition in ("rise", "fall"))


@dataclass(frozen=True)
class NetDelayModel:
    """Deterministic physical surrogate for routed net timing.

    delay = corner_scale * (alpha * manhattan + beta); the output slew adds
    gamma * manhattan to the input slew on every channel.
    """

    alpha: float = 0.01
    beta: float = 0.05
    gamma: float = 0.002
    corner_scale: tuple[float, float, float, float] = (0.9, 0.95, 1.05, 1.1)

    def delay(self, manhattan: np.ndarray) -> np.ndarray:
        base = self.alpha * np.asarray(manhattan, dtype=np.float64) + self.beta
        return base[..., None] * np.asarray(self.corner_scale, dtype=np.float64)

    def degrade_slew(self, slew_in: np.ndarray, manhattan: np.ndarray) -> np.ndarray:
        return slew_in + self.gamma * np.asarray(manhattan, dtype=np.float64)[..., None]

    def to_doc(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "corner_scale": list(self.corner_scale),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "NetDelayModel":
        return cls(
            alpha=float(doc["alpha"]),
            beta=float(doc["beta"]),
            gamma=float(doc["gamma"]),
            corner_scale=tuple(float(v) for v in doc["corner_scale"]),
        )


@dataclass
class TimingAnnotation:
    """Per-pin 4-channel timing plus per-edge delay labels.

    Edge arrays are aligned with the circuit document's net / cell edge
    order (net_inv edges carry no labels).
    """

    at: np.ndarray
    slew: np.ndarray
    rat: np.ndarray
    slack: np.ndarray
    net_edges: list[tuple[int, int]]
    net_delay: np.ndarray
    cell_edges: list[tuple[int, int]]
    cell_delay: np.ndarray


def lut_lookup(lut: Lut, table: str, input_slew: float, load: float) -> float:
    """Bilinear interpolation on the bracketing grid cell, border-clamped."""
    values = np.asarray(lut.delay_table if table == "delay" else lut.slew_table, dtype=np.float64)
    rows = np.asarray(lut.row_axis, dtype=np.float64)
    cols = np.asarray(lut.col_axis, dtype=np.float64)
    out = _bilinear(rows, cols, values, np.asarray([input_slew], dtype=np.float64), np.asarray([load]))
    return float(out[0])


def _bilinear(rows: np.ndarray, cols: np.ndarray, values: np.ndarray, q_row: np.ndarray, q_col: np.ndarray) -> np.ndarray:
    q_row = np.clip(q_row, rows[0], rows[-1])
    q_col = np.clip(q_col, cols[0], cols[-1])
    ri = np.clip(np.searchsorted(rows, q_row, side="right") - 1, 0, max(len(rows) - 2, 0))
    ci = np.clip(np.searchsorted(cols, q_col, side="right") - 1, 0, max(len(cols) - 2, 0))
    if len(rows) == 1:
        tr = np.zeros_like(q_row)
        ri1 = ri
    else:
        ri1 = ri + 1
        tr = (q_row - rows[ri]) / (rows[ri1] - rows[ri])
    if len(cols) == 1:
        tc = np.zeros_like(q_col)
        ci1 = ci
    else:
        ci1 = ci + 1
        tc = (q_col - cols[ci]) / (cols[ci1] - cols[ci])
    v00 = values[ri, ci]
    v01 = values[ri, ci1]
    v10 = values[ri1, ci]
    v11 = values[ri1, ci1]
    return (1 - tr) * ((1 - tc) * v00 + tc * v01) + tr * ((1 - tc) * v10 + tc * v11)


@dataclass
class _EdgeArrays:
    """Edge tensors split by kind, document order preserved."""

    net_src: np.ndarray
    net_dst: np.ndarray
    net_len: np.ndarray
    net_edges: list[tuple[int, int]]
    cell_src: np.ndarray
    cell_dst: np.ndarray
    cell_lut: list[str]
    cell_edges: list[tuple[int, int]]
    cell_load: np.ndarray


def _edge_arrays(graph: CircuitGraph) -> _EdgeArrays:
    cap_idx = graph.feature_index("capacitance")
    net_src, net_dst, net_len, net_edges = [], [], [], []
    cell_src, cell_dst, cell_lut, cell_edges = [], [], [], []
    for e in graph.edges:
        if e.kind == "net":
            net_src.append(e.src)
            net_dst.append(e.dst)
            net_len.append(e.features[2] if len(e.features) >= 3 else 0.0)
            net_edges.append((e.src, e.dst))
        elif e.kind == "cell":
            cell_src.append(e.src)
            cell_dst.append(e.dst)
            cell_lut.append(e.lut_id)
            cell_edges.append((e.src, e.dst))
    cell_load = np.asarray(
        [graph.nodes[d].features[cap_idx] for d in cell_dst], dtype=np.float64
    )
    return _EdgeArrays(
        net_src=np.asarray(net_src, dtype=np.int64),
        net_dst=np.asarray(net_dst, dtype=np.int64),
        net_len=np.asarray(net_len, dtype=np.float64),
        net_edges=net_edges,
        cell_src=np.asarray(cell_src, dtype=np.int64),
        cell_dst=np.asarray(cell_dst, dtype=np.int64),
        cell_lut=cell_lut,
        cell_edges=cell_edges,
        cell_load=cell_load,
    )


def _reduce_candidates(
    cand_dst: np.ndarray,
    cand_src: np.ndarray,
    cand_at: np.ndarray,
    cand_slew: np.ndarray,
    at: np.ndarray,
    slew: np.ndarray,
) -> None:
    """Per destination and channel, keep the extremal arrival candidate.

    Early channels take the minimum arrival, late channels the maximum; the
    winning candidate's slew is adopted. Ties prefer the smallest source id.
    """
    for ch in range(4):
        value = cand_at[:, ch]
        if ch in EARLY:
            order = np.lexsort((cand_src, value, cand_dst))
        else:
            order = np.lexsort((cand_src, -value, cand_dst))
        dst_sorted = cand_dst[order]
        first = np.unique(dst_sorted, return_index=True)[1]
        winners = order[first]
        at[cand_dst[winners], ch] = cand_at[winners, ch]
        slew[cand_dst[winners], ch] = cand_slew[winners, ch]


def propagate_forward(
    graph: CircuitGraph,
    schedule: LevelSchedule,
    boundary_at: dict[int, np.ndarray] | np.ndarray,
    boundary_slew: dict[int, np.ndarray] | np.ndarray,
    net_model: NetDelayModel,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forward AT/slew propagation; returns (at, slew, net_delay, cell_delay).

    boundary_at / boundary_slew assign 4-vectors to every primary input,
    either as {node_id: vector} or as dense [n, 4] arrays.
    """
    n = graph.num_nodes
    arrays = _edge_arrays(graph)
    at = np.full((n, 4), np.nan)
    slew = np.full((n, 4), np.nan)

    sources = [i for i in range(n) if graph.nodes[i].is_primary_input]
    for nid in sources:
        try:
            at[nid] = np.asarray(boundary_at[nid], dtype=np.float64)
            slew[nid] = np.asarray(boundary_slew[nid], dtype=np.float64)
        except (KeyError, IndexError):
            raise StaError(f"primary input {nid} has no boundary at/slew assignment") from None

    net_delay = net_model.delay(arrays.net_len)
    cell_delay = np.zeros((len(arrays.cell_src), 4))

    node_level = np.asarray(schedule.node_level)
    net_level = node_level[arrays.net_dst] if len(arrays.net_dst) else np.zeros(0, dtype=np.int64)
    cell_level = node_level[arrays.cell_dst] if len(arrays.cell_dst) else np.zeros(0, dtype=np.int64)

    lut_cache = {
        lut_id: (
            np.asarray(lut.row_axis, dtype=np.float64),
            np.asarray(lut.col_axis, dtype=np.float64),
            np.asarray(lut.delay_table, dtype=np.float64),
            np.asarray(lut.slew_table, dtype=np.float64),
        )
        for lut_id, lut in graph.luts.items()
    }
    lut_order = sorted(graph.luts)
    lut_index = {lut_id: i for i, lut_id in enumerate(lut_order)}
    cell_lut_ids = np.asarray([lut_index[l] for l in arrays.cell_lut], dtype=np.int64)

    for lvl in range(1, len(schedule.levels)):
        cand_dst_parts, cand_src_parts, cand_at_parts, cand_slew_parts = [], [], [], []

        sel = np.nonzero(net_level == lvl)[0]
        if len(sel):
            src = arrays.net_src[sel]
            if np.isnan(at[src]).any():
                bad = src[np.isnan(at[src]).any(axis=1)][0]
                raise StaError(f"node {int(bad)} has no incoming timing but is not a primary input")
            cand_dst_parts.append(arrays.net_dst[sel])
            cand_src_parts.append(src)
            cand_at_parts.append(at[src] + net_delay[sel])
            cand_slew_parts.append(net_model.degrade_slew(slew[src], arrays.net_len[sel]))

        sel = np.nonzero(cell_level == lvl)[0]
        if len(sel):
            src = arrays.cell_src[sel]
            if np.isnan(at[src]).any():
                bad = src[np.isnan(at[src]).any(axis=1)][0]
                raise StaError(f"node {int(bad)} has no incoming timing but is not a primary input")
            d = np.zeros((len(sel), 4))
            s_out = np.zeros((len(sel), 4))
            for li, lut_id in enumerate(lut_order):
                mask = np.nonzero(cell_lut_ids[sel] == li)[0]
                if not len(mask):
                    continue
                rows, cols, dtab, stab = lut_cache[lut_id]
                loads = arrays.cell_load[sel][mask]
                for ch in range(4):
                    q_slew = slew[src[mask], ch]
                    d[mask, ch] = _bilinear(rows, cols, dtab, q_slew, loads)
                    s_out[mask, ch] = _bilinear(rows, cols, stab, q_slew, loads)
            cell_delay[sel] = d
            cand_dst_parts.append(arrays.cell_dst[sel])
            cand_src_parts.append(src)
            cand_at_parts.append(at[src] + d)
            cand_slew_parts.append(s_out)

        if not cand_dst_parts:
            level_nodes = np.asarray(schedule.levels[lvl])
            if np.isnan(at[level_nodes]).any():
                bad = level_nodes[np.isnan(at[level_nodes]).any(axis=1)][0]
                raise StaError(f"node {int(bad)} has no incoming timing but is not a primary input")
            continue

        _reduce_candidates(
            np.concatenate(cand_dst_parts),
            np.concatenate(cand_src_parts),
            np.concatenate(cand_at_parts),
            np.concatenate(cand_slew_parts),
            at,
            slew,
        )

    if np.isnan(at).any():
        bad = int(np.nonzero(np.isnan(at).any(axis=1))[0][0])
        raise StaError(f"node {bad} has no incoming timing but is not a primary input")
    return at, slew, net_delay, cell_delay


def propagate_rat(
    graph: CircuitGraph,
    schedule: LevelSchedule,
    endpoint_rat: dict[int, np.ndarray],
    net_delay: np.ndarray,
    cell_delay: np.ndarray,
) -> np.ndarray:
    """Backward RAT propagation from endpoints, reverse level order.

    On late channels a node's RAT is the minimum over successors of
    (successor RAT - edge delay); on early channels the maximum.
    """
    n = graph.num_nodes
    arrays = _edge_arrays(graph)
    rat = np.full((n, 4), np.nan)

    has_succ = np.zeros(n, dtype=bool)
    for a in (arrays.net_src, arrays.cell_src):
        if len(a):
            has_succ[a] = True
    endpoints = [i for i in range(n) if not has_succ[i]]
    for nid in endpoints:
        if nid not in endpoint_rat:
            raise StaError(f"endpoint node {nid} has no required-arrival assignment")
        rat[nid] = np.asarray(endpoint_rat[nid], dtype=np.float64)

    node_level = np.asarray(schedule.node_level)
    net_src_level = node_level[arrays.net_src] if len(arrays.net_src) else np.zeros(0, dtype=np.int64)
    cell_src_level = node_level[arrays.cell_src] if len(arrays.cell_src) else np.zeros(0, dtype=np.int64)

    for lvl in range(len(schedule.levels) - 1, -1, -1):
        cand_src_parts, cand_rat_parts = [], []
        sel = np.nonzero(net_src_level == lvl)[0]
        if len(sel):
            cand_src_parts.append(arrays.net_src[sel])
            cand_rat_parts.append(rat[arrays.net_dst[sel]] - net_delay[sel])
        sel = np.nonzero(cell_src_level == lvl)[0]
        if len(sel):
            cand_src_parts.append(arrays.cell_src[sel])
            cand_rat_parts.append(rat[arrays.cell_dst[sel]] - cell_delay[sel])
        if not cand_src_parts:
            continue
        cand_src = np.concatenate(cand_src_parts)
        cand_rat = np.concatenate(cand_rat_parts)
        order = np.argsort(cand_src, kind="stable")
        uniq, first = np.unique(cand_src[order], return_index=True)
        rows_sorted = cand_rat[order]
        grp_max = np.maximum.reduceat(rows_sorted, first, axis=0)
        grp_min = np.minimum.reduceat(rows_sorted, first, axis=0)
        rat[uniq, 0] = grp_max[:, 0]
        rat[uniq, 1] = grp_max[:, 1]
        rat[uniq, 2] = grp_min[:, 2]
        rat[uniq, 3] = grp_min[:, 3]

    if np.isnan(rat).any():
        bad = int(np.nonzero(np.isnan(rat).any(axis=1))[0][0])
        raise StaError(f"node {bad} received no required-arrival value")
    return rat


def slack(at: np.ndarray, rat: np.ndarray) -> np.ndarray:
    """Early channels AT - RAT, late channels RAT - AT, elementwise."""
    at = np.asarray(at, dtype=np.float64)
    rat = np.asarray(rat, dtype=np.float64)
    if at.shape != rat.shape:
        raise StaError(f"shape mismatch: at {at.shape} vs rat {rat.shape}")
    out = np.empty_like(at)
    out[..., EARLY[0]] = at[..., EARLY[0]] - rat[..., EARLY[0]]
    out[..., EARLY[1]] = at[..., EARLY[1]] - rat[..., EARLY[1]]
    out[..., LATE[0]] = rat[..., LATE[0]] - at[..., LATE[0]]
    out[..., LATE[1]] = rat[..., LATE[1]] - at[..., LATE[1]]
    return out


def analyze(
    graph: CircuitGraph,
    schedule: LevelSchedule,
    boundary_at,
    boundary_slew,
    endpoint_rat: dict[int, np.ndarray],
    net_model: NetDelayModel,
) -> TimingAnnotation:
    at, slw, net_delay, cell_delay = propagate_forward(graph, schedule, boundary_at, boundary_slew, net_model)
    rat = propagate_rat(graph, schedule, endpoint_rat, net_delay, cell_delay)
    arrays = _edge_arrays(graph)
    return TimingAnnotation(
        at=at,
        slew=slw,
        rat=rat,
        slack=slack(at, rat),
        net_edges=arrays.net_edges,
        net_delay=net_delay,
        cell_edges=arrays.cell_edges,
        cell_delay=cell_delay,
    )


def endpoints_of(graph: CircuitGraph) -> list[int]:
    has_succ = [False] * graph.num_nodes
    for e in graph.edges:
        if e.kind in ("cell", "net"):
            has_succ[e.src] = True
    return [i for i in range(graph.num_nodes) if not has_succ[i]]


def serialize_labels(circuit_name: str, ann: TimingAnnotation) -> str:
    doc = {
        "format_version": LABEL_FORMAT_VERSION,
        "circuit": circuit_name,
        "channels": list(CHANNELS),
        "at": ann.at.tolist(),
        "slew": ann.slew.tolist(),
        "rat": ann.rat.tolist(),
        "slack": ann.slack.tolist(),
        "net_edges": [list(e) for e in ann.net_edges],
        "net_delay": ann.net_delay.tolist(),
        "cell_edges": [list(e) for e in ann.cell_edges],
        "cell_delay": ann.cell_delay.tolist(),
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def parse_labels(data: bytes | str) -> tuple[str, TimingAnnotation]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    doc = json.loads(data)
    ann = TimingAnnotation(
        at=np.asarray(doc["at"], dtype=np.float64),
        slew=np.asarray(doc["slew"], dtype=np.float64),
        rat=np.asarray(doc["rat"], dtype=np.float64),
        slack=np.asarray(doc["slack"], dtype=np.float64),
        net_edges=[tuple(e) for e in doc["net_edges"]],
        net_delay=np.asarray(doc["net_delay"], dtype=np.float64),
        cell_edges=[tuple(e) for e in doc["cell_edges"]],
        cell_delay=np.asarray(doc["cell_delay"], dtype=np.float64),
    )
    return doc["circuit"], ann


def load_labels(path) -> tuple[str, TimingAnnotation]:
    with open(path, "rb") as fh:
        return parse_labels(fh.read())
