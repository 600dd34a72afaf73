"""Independent reference implementations the tests compare against.

Everything here is written from the behavioral contracts alone and avoids the
production code paths: the chain matcher works on raw call equality instead of
encoded vectors, the graph oracle enumerates simple paths with networkx, and
the scalar helpers use plain Python arithmetic.
"""

from __future__ import annotations

import math

import networkx as nx

from chainwatch.sdg import FLOW_LABELS, Sdg, VulnQuery, template_matches
from chainwatch.trace import InstructionCall


class NaiveChainMatcher:
    """Per-exploit pointer scan over exact call equality.

    Every exploit is checked on every fed call.  A call equal to the exploit's
    next expected template advances it; completing the chain records an
    (exploit_id, offset) alarm and rewinds to the start.
    """

    def __init__(self, chains: dict[int, list[InstructionCall]]):
        self.chains = {e: list(c) for e, c in chains.items()}
        self.position = {e: 0 for e in chains}
        self.alarms: list[tuple[int, int]] = []

    def feed(self, call: InstructionCall, offset: int) -> None:
        for e in sorted(self.chains):
            if call == self.chains[e][self.position[e]]:
                self.position[e] += 1
                if self.position[e] == len(self.chains[e]):
                    self.alarms.append((e, offset))
                    self.position[e] = 0

    def run(self, calls, skip_names=frozenset()) -> list[tuple[int, int]]:
        for offset, call in enumerate(calls):
            if call.api_name in skip_names:
                continue
            self.feed(call, offset)
        return self.alarms


def brute_force_flows(sdg: Sdg, query: VulnQuery):
    """All qualifying flows by exhaustive simple-path enumeration.

    Returns {(source_node, sink_node): set of minimal emitted sequences},
    where a sequence is the tuple of instructions on statement nodes along a
    path over data/call/param_in/param_out edges, and minimality is by number
    of instruction-carrying statement nodes.  Only usable on small graphs.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(sdg.nodes)
    for src, dst, label in sdg.edges:
        if label in FLOW_LABELS:
            graph.add_edge(src, dst)

    sources = [
        nid for nid, node in sdg.nodes.items()
        if any(template_matches(node.call, t) for t in query.sources)
    ]
    sinks = [
        nid for nid, node in sdg.nodes.items()
        if any(template_matches(node.call, t) for t in query.sinks)
    ]

    def emitted(path):
        return tuple(
            sdg.nodes[n].call
            for n in path
            if sdg.nodes[n].kind == "statement" and sdg.nodes[n].call is not None
        )

    flows = {}
    for s in sources:
        for k in sinks:
            if s == k or not graph.has_node(s) or not graph.has_node(k):
                continue
            sequences = [emitted(p) for p in nx.all_simple_paths(graph, s, k)]
            sequences = [seq for seq in sequences if seq]
            if not sequences:
                continue
            best = min(len(seq) for seq in sequences)
            flows[(s, k)] = {seq for seq in sequences if len(seq) == best}
    return flows


def scalar_metrics(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    """Accuracy/precision/recall/F1 from first principles, zero-safe."""
    total = tp + fp + tn + fn
    acc = (tp + tn) / total if total else 0.0
    prec = tp / (tp + fp) if (tp + fp) else 0.0
    rec = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = 2 * prec * rec / (prec + rec) if (prec + rec) else 0.0
    return {"accuracy": acc, "precision": prec, "recall": rec, "f1": f1}


def straight_line_forward(x, w1, b1, w2, b2, w3, b3):
    """The three-layer forward pass as explicit Python loops and math.exp."""
    h1 = []
    for i in range(len(b1)):
        s = b1[i]
        for j in range(len(x)):
            s += w1[i][j] * x[j]
        h1.append(s if s > 0 else 0.0)
    h2 = []
    for i in range(len(b2)):
        s = b2[i]
        for j in range(len(h1)):
            s += w2[i][j] * h1[j]
        h2.append(s if s > 0 else 0.0)
    y = []
    for i in range(len(b3)):
        s = b3[i]
        for j in range(len(h2)):
            s += w3[i][j] * h2[j]
        y.append(1.0 / (1.0 + math.exp(-s)))
    return y
