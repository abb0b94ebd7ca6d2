"""Heterogeneous circuit DAG model and its on-disk document format.

A circuit is a pin-level DAG: every node is a pin (primary input, primary
output, cell fan-in or cell fan-out) and edges come in three kinds:

* ``cell``     fan-in pin -> fan-out pin inside one cell, carries a LUT id
* ``net``      net driver -> net sink, carries geometric features
* ``net_inv``  the reversed companion of every net edge

The format is JSON with fixed field names (see docs/format.md). Parsing is
strict: structurally broken documents are rejected with the offending
element named, never repaired.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

EDGE_KINDS = ("cell", "net", "net_inv")

# Node feature layout of the synthetic format (F = 8).
NODE_FEATURE_SCHEMA = (
    "is_primary_input",
    "is_primary_output",
    "is_fanin",
    "is_fanout",
    "x",
    "y",
    "capacitance",
    "normalized_depth",
)

# Net / net_inv edge feature layout; cell edges carry no features.
NET_EDGE_FEATURE_SCHEMA = ("dx", "dy", "manhattan")

FORMAT_VERSION = 1


class CircuitError(ValueError):
    """A circuit document or graph violates the format contract."""


@dataclass(frozen=True)
class NodeRecord:
    id: int
    is_primary_input: bool = False
    is_primary_output: bool = False
    is_fanin: bool = False
    is_fanout: bool = False
    features: tuple[float, ...] = ()


@dataclass(frozen=True)
class EdgeRecord:
    src: int
    dst: int
    kind: str
    features: tuple[float, ...] = ()
    lut_id: str | None = None


@dataclass(frozen=True)
class Lut:
    """Two-dimensional delay/slew table indexed by (input slew, driving load)."""

    row_axis: tuple[float, ...]
    col_axis: tuple[float, ...]
    delay_table: tuple[tuple[float, ...], ...]
    slew_table: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class CircuitGraph:
    """Immutable circuit graph; safe for unlimited concurrent readers."""

    name: str
    nodes: tuple[NodeRecord, ...]
    edges: tuple[EdgeRecord, ...]
    luts: dict[str, Lut] = field(default_factory=dict)
    feature_schema: tuple[str, ...] = NODE_FEATURE_SCHEMA

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def feature_dim(self) -> int:
        return len(self.feature_schema)

    def edges_of_kind(self, kind: str) -> list[EdgeRecord]:
        return [e for e in self.edges if e.kind == kind]

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_schema.index(name)
        except ValueError:
            raise CircuitError(f"circuit {self.name!r} has no feature {name!r}") from None

    def timing_predecessors(self) -> list[list[tuple[int, EdgeRecord]]]:
        """Per node: incoming (src, edge) pairs over cell and net edges."""
        preds: list[list[tuple[int, EdgeRecord]]] = [[] for _ in self.nodes]
        for e in self.edges:
            if e.kind in ("cell", "net"):
                preds[e.dst].append((e.src, e))
        return preds

    def timing_successors(self) -> list[list[tuple[int, EdgeRecord]]]:
        """Per node: outgoing (dst, edge) pairs over cell and net edges."""
        succs: list[list[tuple[int, EdgeRecord]]] = [[] for _ in self.nodes]
        for e in self.edges:
            if e.kind in ("cell", "net"):
                succs[e.src].append((e.dst, e))
        return succs


def validate_lut(lut_id: str, lut: Lut) -> list[str]:
    out = []
    for axis_name, axis in (("row_axis", lut.row_axis), ("col_axis", lut.col_axis)):
        if len(axis) < 1:
            out.append(f"lut {lut_id!r}: empty {axis_name}")
        if any(b <= a for a, b in zip(axis, axis[1:])):
            out.append(f"lut {lut_id!r}: {axis_name} not strictly ascending")
    for table_name, table in (("delay", lut.delay_table), ("slew", lut.slew_table)):
        if len(table) != len(lut.row_axis) or any(len(r) != len(lut.col_axis) for r in table):
            out.append(f"lut {lut_id!r}: {table_name} table shape does not match axes")
    if any(v <= 0.0 for row in lut.slew_table for v in row):
        out.append(f"lut {lut_id!r}: slew table has non-positive values")
    return out


def validate(graph: CircuitGraph) -> list[str]:
    """Check every structural invariant; returns violation descriptions.

    An empty report means the graph is well formed. Violations are data,
    not exceptions; ``check`` raises on a non-empty report.
    """
    out: list[str] = []
    n = len(graph.nodes)
    for i, node in enumerate(graph.nodes):
        if node.id != i:
            out.append(f"node ids not dense: position {i} holds id {node.id}")
        if len(node.features) != graph.feature_dim:
            out.append(
                f"node {node.id}: feature length {len(node.features)} != schema length {graph.feature_dim}"
            )
        if any(not math.isfinite(v) for v in node.features):
            out.append(f"node {node.id}: non-finite feature value")

    for lut_id, lut in graph.luts.items():
        out.extend(validate_lut(lut_id, lut))

    cell_touched: dict[int, str] = {}
    incoming_timing = [0] * n
    outgoing_timing = [0] * n
    net_pairs: set[tuple[int, int]] = set()
    inv_pairs: set[tuple[int, int]] = set()
    seen: set[tuple[int, int, str]] = set()
    for e in graph.edges:
        if e.kind not in EDGE_KINDS:
            out.append(f"edge ({e.src}, {e.dst}): unknown kind {e.kind!r}")
            continue
        if not (0 <= e.src < n and 0 <= e.dst < n):
            out.append(f"edge ({e.src}, {e.dst}): endpoint out of range")
            continue
        if (e.src, e.dst, e.kind) in seen:
            out.append(f"duplicate {e.kind} edge ({e.src}, {e.dst})")
            continue
        seen.add((e.src, e.dst, e.kind))
        if e.kind == "cell":
            if e.lut_id is None:
                out.append(f"cell edge ({e.src}, {e.dst}): missing lut_id")
            elif e.lut_id not in graph.luts:
                out.append(f"cell edge ({e.src}, {e.dst}): dangling lut_id {e.lut_id!r}")
            cell_touched[e.src] = "fanin"
            cell_touched[e.dst] = "fanout"
        elif e.lut_id is not None:
            out.append(f"{e.kind} edge ({e.src}, {e.dst}): lut_id on non-cell edge")
        if e.kind == "net":
            net_pairs.add((e.src, e.dst))
        elif e.kind == "net_inv":
            inv_pairs.add((e.src, e.dst))
        if e.kind in ("cell", "net"):
            incoming_timing[e.dst] += 1
            outgoing_timing[e.src] += 1

    for u, v in sorted(net_pairs):
        if (v, u) not in inv_pairs:
            out.append(f"missing net_inv mirror for edge ({u}, {v})")
    for v, u in sorted(inv_pairs):
        if (u, v) not in net_pairs:
            out.append(f"net_inv edge ({v}, {u}) has no net edge to mirror")

    for e in graph.edges:
        if e.kind != "cell" or not (0 <= e.src < n and 0 <= e.dst < n):
            continue
        if not graph.nodes[e.src].is_fanin or not graph.nodes[e.dst].is_fanout:
            out.append(f"cell edge ({e.src}, {e.dst}) must go fan-in -> fan-out")

    for node in graph.nodes:
        nid = node.id
        if not (0 <= nid < n):
            continue
        role = cell_touched.get(nid)
        if role is not None and node.is_fanin == node.is_fanout:
            out.append(f"node {nid}: cell-connected pin must set exactly one of is_fanin/is_fanout")
        if node.is_primary_input and incoming_timing[nid] > 0:
            out.append(f"node {nid}: primary input has incoming cell/net edges")
        if node.is_primary_output and outgoing_timing[nid] > 0:
            out.append(f"node {nid}: primary output has outgoing cell/net edges")

    cycle = find_cycle(graph)
    if cycle is not None:
        arcs = ", ".join(f"({u}->{v})" for u, v in cycle)
        out.append(f"cycle over cell/net edges through {arcs}")
    return out


def find_cycle(graph: CircuitGraph) -> list[tuple[int, int]] | None:
    """Return one cycle over cell+net edges as an edge list, or None."""
    n = len(graph.nodes)
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in graph.edges:
        if e.kind in ("cell", "net") and 0 <= e.src < n and 0 <= e.dst < n:
            adj[e.src].append(e.dst)
    color = [0] * n  # 0 unvisited, 1 on stack, 2 done
    parent = [-1] * n
    for start in range(n):
        if color[start] != 0:
            continue
        stack = [(start, iter(adj[start]))]
        color[start] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(adj[nxt])))
                    advanced = True
                    break
                if color[nxt] == 1:
                    cyc = [(node, nxt)]
                    cur = node
                    while cur != nxt:
                        cyc.append((parent[cur], cur))
                        cur = parent[cur]
                    cyc.reverse()
                    return cyc
            if not advanced:
                color[node] = 2
                stack.pop()
    return None


def check(graph: CircuitGraph) -> CircuitGraph:
    """Raise CircuitError on the first validation report, else pass through."""
    report = validate(graph)
    if report:
        raise CircuitError("; ".join(report))
    return graph


def _node_to_doc(node: NodeRecord) -> dict:
    return {
        "id": node.id,
        "is_primary_input": node.is_primary_input,
        "is_primary_output": node.is_primary_output,
        "is_fanin": node.is_fanin,
        "is_fanout": node.is_fanout,
        "features": list(node.features),
    }


def _edge_to_doc(edge: EdgeRecord) -> dict:
    doc = {"src": edge.src, "dst": edge.dst, "kind": edge.kind, "features": list(edge.features)}
    if edge.lut_id is not None:
        doc["lut_id"] = edge.lut_id
    return doc


def serialize_circuit(graph: CircuitGraph) -> str:
    """Canonical JSON text; identical graphs always produce identical bytes."""
    doc = {
        "format_version": FORMAT_VERSION,
        "name": graph.name,
        "feature_schema": list(graph.feature_schema),
        "nodes": [_node_to_doc(nd) for nd in graph.nodes],
        "edges": [_edge_to_doc(e) for e in graph.edges],
        "luts": {
            lut_id: {
                "rows": list(lut.row_axis),
                "cols": list(lut.col_axis),
                "delay": [list(r) for r in lut.delay_table],
                "slew": [list(r) for r in lut.slew_table],
            }
            for lut_id, lut in sorted(graph.luts.items())
        },
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise CircuitError(f"malformed document: {where} missing key {key!r}")
    return doc[key]


def parse_circuit(data: bytes | str) -> CircuitGraph:
    """Parse and fully validate a circuit document; rejects, never repairs."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise CircuitError(f"malformed document: {exc}") from exc
    if not isinstance(doc, dict):
        raise CircuitError("malformed document: top level is not an object")

    name = _require(doc, "name", "document")
    schema = tuple(_require(doc, "feature_schema", "document"))
    nodes = []
    for pos, nd in enumerate(_require(doc, "nodes", "document")):
        where = f"node at position {pos}"
        nodes.append(
            NodeRecord(
                id=int(_require(nd, "id", where)),
                is_primary_input=bool(nd.get("is_primary_input", False)),
                is_primary_output=bool(nd.get("is_primary_output", False)),
                is_fanin=bool(nd.get("is_fanin", False)),
                is_fanout=bool(nd.get("is_fanout", False)),
                features=tuple(float(v) for v in _require(nd, "features", where)),
            )
        )
    edges = []
    for pos, ed in enumerate(_require(doc, "edges", "document")):
        where = f"edge at position {pos}"
        edges.append(
            EdgeRecord(
                src=int(_require(ed, "src", where)),
                dst=int(_require(ed, "dst", where)),
                kind=str(_require(ed, "kind", where)),
                features=tuple(float(v) for v in ed.get("features", [])),
                lut_id=ed.get("lut_id"),
            )
        )
    luts = {}
    for lut_id, ld in _require(doc, "luts", "document").items():
        where = f"lut {lut_id!r}"
        luts[str(lut_id)] = Lut(
            row_axis=tuple(float(v) for v in _require(ld, "rows", where)),
            col_axis=tuple(float(v) for v in _require(ld, "cols", where)),
            delay_table=tuple(tuple(float(v) for v in row) for row in _require(ld, "delay", where)),
            slew_table=tuple(tuple(float(v) for v in row) for row in _require(ld, "slew", where)),
        )
    graph = CircuitGraph(name=str(name), nodes=tuple(nodes), edges=tuple(edges), luts=luts, feature_schema=schema)
    return check(graph)


def load_circuit(path) -> CircuitGraph:
    with open(path, "rb") as fh:
        return parse_circuit(fh.read())
