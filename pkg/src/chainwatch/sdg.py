"""Dependence graphs and source-to-sink query matching.

Graph file grammar (newline-delimited JSON, blank lines ignored):

* ``{"node": <id>, "kind": "<kind>"}`` with optional ``"call": {...}`` holding
  an instruction record (trace grammar); statement nodes normally carry one.
* ``{"edge": [<src>, <dst>], "label": "<label>"}``.

Node kinds: statement, entry, actual_in, formal_in, formal_out, actual_out.
Edge labels: control, data, call, param_in, param_out.  Call edges must run
statement -> entry, param_in edges actual_in -> formal_in, and param_out edges
formal_out -> actual_out; violations are load-time errors, as are edges with
unknown endpoints.

A query asks for dataflow from a call matching a *source* template to a call
matching a *sink* template, where a template matches on api_name + category +
package.  Matching walks edges labelled data/param_in/param_out/call and
returns, per (source node, sink node) pair, the instruction sequence of the
statement nodes along one path that passes through as few statement nodes as
possible.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .fingerprints import Fingerprint
from .trace import InstructionCall, TraceError, parse_trace_record
from .vocab import Vocabularies

NODE_KINDS = ("statement", "entry", "actual_in", "formal_in", "formal_out", "actual_out")
EDGE_LABELS = ("control", "data", "call", "param_in", "param_out")
FLOW_LABELS = frozenset({"data", "call", "param_in", "param_out"})

# label -> required (source kind, destination kind); None = unconstrained
_ENDPOINT_RULES = {
    "call": ("statement", "entry"),
    "param_in": ("actual_in", "formal_in"),
    "param_out": ("formal_out", "actual_out"),
}


class SdgError(ValueError):
    """Graph file is malformed or violates a structural rule."""


class DanglingEdge(SdgError):
    pass


class IllegalEdgeLabel(SdgError):
    pass


class MissingRoleAnnotation(SdgError):
    """Fingerprint lacks the source/sink roles needed to form a query."""


@dataclass(frozen=True)
class SdgNode:
    node_id: int
    kind: str
    call: InstructionCall | None = None


@dataclass
class Sdg:
    nodes: dict[int, SdgNode]
    edges: list[tuple[int, int, str]]

    def out_edges(self, label_set: frozenset[str]) -> dict[int, list[int]]:
        adj: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for src, dst, label in self.edges:
            if label in label_set:
                adj[src].append(dst)
        for nid in adj:
            adj[nid] = sorted(set(adj[nid]))
        return adj


def load_sdg(path: str | Path, vocabs: Vocabularies) -> Sdg:
    path = Path(path)
    nodes: dict[int, SdgNode] = {}
    raw_edges: list[tuple[int, int, str, int]] = []

    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        where = f"{path} line {lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SdgError(f"{where}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise SdgError(f"{where}: expected a JSON object")

        if "node" in obj:
            node_id = obj["node"]
            if not isinstance(node_id, int) or isinstance(node_id, bool):
                raise SdgError(f"{where}: node id must be an integer")
            if node_id in nodes:
                raise SdgError(f"{where}: duplicate node id {node_id}")
            kind = obj.get("kind")
            if kind not in NODE_KINDS:
                raise SdgError(f"{where}: unknown node kind {kind!r}")
            call = None
            if "call" in obj and obj["call"] is not None:
                if not isinstance(obj["call"], dict):
                    raise SdgError(f"{where}: node call payload must be an object")
                try:
                    call = parse_trace_record(json.dumps(obj["call"]), vocabs)
                except TraceError as exc:
                    raise SdgError(f"{where}: bad call payload: {exc}") from exc
            unknown = set(obj) - {"node", "kind", "call"}
            if unknown:
                raise SdgError(f"{where}: unexpected node key(s): {sorted(unknown)}")
            nodes[node_id] = SdgNode(node_id=node_id, kind=kind, call=call)
        elif "edge" in obj:
            pair = obj["edge"]
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or any(not isinstance(p, int) or isinstance(p, bool) for p in pair)
            ):
                raise SdgError(f"{where}: edge must be a [src, dst] integer pair")
            label = obj.get("label")
            if label not in EDGE_LABELS:
                raise IllegalEdgeLabel(f"{where}: unknown edge label {label!r}")
            unknown = set(obj) - {"edge", "label"}
            if unknown:
                raise SdgError(f"{where}: unexpected edge key(s): {sorted(unknown)}")
            raw_edges.append((pair[0], pair[1], label, lineno))
        else:
            raise SdgError(f"{where}: line is neither a node nor an edge")

    edges = []
    for src, dst, label, lineno in raw_edges:
        where = f"{path} line {lineno}"
        if src not in nodes or dst not in nodes:
            raise DanglingEdge(f"{where}: edge ({src}, {dst}) references an unknown node")
        rule = _ENDPOINT_RULES.get(label)
        if rule is not None:
            want_src, want_dst = rule
            got = (nodes[src].kind, nodes[dst].kind)
            if got != (want_src, want_dst):
                raise IllegalEdgeLabel(
                    f"{where}: {label} edge must run {want_src} -> {want_dst}, got {got[0]} -> {got[1]}"
                )
        edges.append((src, dst, label))

    return Sdg(nodes=nodes, edges=edges)


@dataclass(frozen=True)
class VulnQuery:
    """Source and sink call templates lowered from one fingerprint."""

    exploit_id: int
    sources: tuple[InstructionCall, ...]
    sinks: tuple[InstructionCall, ...]


def lower_fingerprint(fp: Fingerprint) -> VulnQuery:
    sources = tuple(t for t, r in zip(fp.templates, fp.roles) if r == "source")
    sinks = tuple(t for t, r in zip(fp.templates, fp.roles) if r == "sink")
    if not sources or not sinks:
        raise MissingRoleAnnotation(
            f"exploit {fp.exploit_id}: need at least one source and one sink role"
        )
    return VulnQuery(exploit_id=fp.exploit_id, sources=sources, sinks=sinks)


def template_matches(call: InstructionCall | None, template: InstructionCall) -> bool:
    """Template match compares api_name, category and package only."""
    return (
        call is not None
        and call.api_name == template.api_name
        and call.category == template.category
        and call.package == template.package
    )


def _statement_cost(node: SdgNode) -> int:
    # Cost counts exactly what gets emitted: statement nodes carrying a call.
    return 1 if node.kind == "statement" and node.call is not None else 0


def _min_statement_paths(sdg: Sdg, start: int, adj: dict[int, list[int]]):
    """0/1-BFS from ``start``: distance = statement nodes entered after start.

    Neighbor lists are sorted and a node's parent is fixed on first (strict)
    improvement, so reconstructed paths are deterministic.
    """
    dist = {nid: None for nid in sdg.nodes}
    parent: dict[int, int] = {}
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            cost = _statement_cost(sdg.nodes[v])
            cand = dist[u] + cost
            if dist[v] is None or cand < dist[v]:
                dist[v] = cand
                parent[v] = u
                if cost == 0:
                    queue.appendleft(v)
                else:
                    queue.append(v)
    return dist, parent


def _reconstruct(parent: dict[int, int], start: int, end: int) -> list[int]:
    path = [end]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def match_query_detailed(
    sdg: Sdg, query: VulnQuery
) -> list[tuple[int, int, tuple[InstructionCall, ...]]]:
    """Per-pair flow witnesses: (source node, sink node, instruction sequence).

    One entry per (source node, sink node) pair joined by a qualifying path,
    ordered by (source id, sink id).  The sequence lists the instructions of
    the statement nodes along a path chosen to pass through as few
    instruction-carrying statements as possible.
    """
    source_nodes = sorted(
        nid
        for nid, node in sdg.nodes.items()
        if any(template_matches(node.call, t) for t in query.sources)
    )
    sink_nodes = sorted(
        nid
        for nid, node in sdg.nodes.items()
        if any(template_matches(node.call, t) for t in query.sinks)
    )
    if not source_nodes or not sink_nodes:
        return []

    adj = sdg.out_edges(FLOW_LABELS)
    witnesses = []
    for s in source_nodes:
        dist, parent = _min_statement_paths(sdg, s, adj)
        for k in sink_nodes:
            if k == s or dist[k] is None:
                continue
            path = _reconstruct(parent, s, k)
            seq = tuple(
                sdg.nodes[nid].call
                for nid in path
                if sdg.nodes[nid].kind == "statement" and sdg.nodes[nid].call is not None
            )
            if seq:
                witnesses.append((s, k, seq))
    return witnesses


def match_query(sdg: Sdg, query: VulnQuery) -> list[tuple[InstructionCall, ...]]:
    """Flow witness sequences, duplicates removed keeping first occurrence."""
    sequences: list[tuple[InstructionCall, ...]] = []
    seen = set()
    for _, _, seq in match_query_detailed(sdg, query):
        if seq not in seen:
            seen.add(seq)
            sequences.append(seq)
    return sequences
