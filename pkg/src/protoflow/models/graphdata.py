"""Materialized graph reading of a store snapshot.

Collects live nodes and edges (EXISTS resolution non-absent) with their
resolved property maps.  An edge is live only while both endpoints are; the
store versions structure and properties independently, so this is where the
two recombine into an adjacency view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..store import EXISTS


@dataclass
class GraphView:
    nodes: dict[str, dict] = field(default_factory=dict)
    node_schema: dict[str, str] = field(default_factory=dict)
    edges: dict[tuple[str, str, str], dict] = field(default_factory=dict)

    @classmethod
    def from_snapshot(cls, snapshot) -> "GraphView":
        nodes: dict[str, dict] = {}
        schemas: dict[str, str] = {}
        edge_exists: set[tuple[str, str, str]] = set()
        edge_props: dict[tuple[str, str, str], dict] = {}
        for key, value in snapshot.items():
            if key.entity[0] == "n":
                node_id = key.entity[1]
                if key.prop == EXISTS:
                    nodes.setdefault(node_id, {})
                    schemas[node_id] = value
                else:
                    nodes.setdefault(node_id, {})[key.prop] = value
            else:
                edge = key.entity[1:]
                if key.prop == EXISTS:
                    edge_exists.add(edge)
                else:
                    edge_props.setdefault(edge, {})[key.prop] = value
        live_nodes = {n: p for n, p in nodes.items() if n in schemas}
        edges = {
            e: edge_props.get(e, {})
            for e in edge_exists
            if e[0] in live_nodes and e[1] in live_nodes
        }
        view = cls(nodes=live_nodes, edges=edges)
        view.node_schema = {n: schemas[n] for n in live_nodes}
        return view

    def out_edges(self, weighted: bool = False) -> dict[str, list]:
        adjacency: dict[str, list] = {n: [] for n in self.nodes}
        for (src, dst, slot), props in sorted(self.edges.items()):
            if weighted:
                adjacency[src].append((dst, float(props.get("weight", 1.0))))
            else:
                adjacency[src].append((dst, props))
        return adjacency

    def undirected_neighbors(self) -> dict[str, list[str]]:
        adjacency: dict[str, set] = {n: set() for n in self.nodes}
        for src, dst, _slot in self.edges:
            adjacency[src].add(dst)
            adjacency[dst].add(src)
        return {n: sorted(peers) for n, peers in adjacency.items()}

    def degrees(self) -> dict[str, int]:
        degree = {n: 0 for n in self.nodes}
        for src, dst, _slot in self.edges:
            degree[src] += 1
            degree[dst] += 1
        return degree


def as_graph_view(source) -> GraphView:
    if isinstance(source, GraphView):
        return source
    return GraphView.from_snapshot(source)
