"""Independent oracles the tests check the engine against.

Everything here is deliberately brute force and shares no code with the
implementation paths it verifies: linear scans instead of bisect, dense
matrix iteration instead of message passing, Bellman-Ford instead of the
scheduled traversal, union-find instead of label propagation.
"""

from __future__ import annotations

import numpy as np


def resolve_scan(history, probe):
    """Linear scan: value of the max version <= probe, None if absent."""
    best = None
    for version, value in history:
        if version <= probe and (best is None or version > best[0]):
            best = (version, value)
    if best is None:
        return None
    from protoflow.store import TOMBSTONE

    return None if best[1] is TOMBSTONE else best[1]


def pagerank_power(vertex_ids, weighted_adj, iterations, damping):
    """Dense power iteration with uniform dangling redistribution."""
    ids = sorted(vertex_ids)
    index = {vid: i for i, vid in enumerate(ids)}
    n = len(ids)
    matrix = np.zeros((n, n))
    for src, edges in weighted_adj.items():
        total = sum(w for _dst, w in edges)
        for dst, w in edges:
            matrix[index[src], index[dst]] += w / total
    dangling = np.array([1.0 if not weighted_adj.get(vid) else 0.0 for vid in ids])
    ranks = np.full(n, 1.0 / n)
    for _ in range(iterations):
        mass = float(dangling @ ranks)
        ranks = (1.0 - damping) / n + damping * (matrix.T @ ranks + mass / n)
    return {vid: float(ranks[index[vid]]) for vid in ids}


def bellman_ford(vertex_ids, weighted_adj, source):
    dist = {source: 0.0}
    for _ in range(len(vertex_ids)):
        changed = False
        for src, edges in weighted_adj.items():
            if src not in dist:
                continue
            for dst, w in edges:
                candidate = dist[src] + w
                if candidate < dist.get(dst, float("inf")):
                    dist[dst] = candidate
                    changed = True
        if not changed:
            break
    return dist


def union_find_labels(vertex_ids, edges):
    """Min vertex id per weakly connected component."""
    parent = {vid: vid for vid in vertex_ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    components: dict = {}
    for vid in vertex_ids:
        components.setdefault(find(vid), []).append(vid)
    labels = {}
    for members in components.values():
        smallest = min(members)
        for vid in members:
            labels[vid] = smallest
    return labels


def sequential_group_by(records, map_fn, reduce_fn):
    """In-order group-by-key evaluation; returns sorted (key, output) pairs."""
    groups: dict = {}
    for record in records:
        for key, value in map_fn(record):
            groups.setdefault(key, []).append(value)
    pairs = []
    for key in sorted(groups):
        for out in reduce_fn(key, groups[key]):
            pairs.append((key, out))
    return pairs


def flatten_schema_walk(registry, tag):
    """Brute-force parent-chain union walk over the registry internals."""
    chain = []
    node = registry._nodes.get(tag) or registry._links.get(tag)
    while node is not None:
        chain.append(node)
        node = (
            (registry._nodes.get(node.parent) or registry._links.get(node.parent))
            if node.parent is not None
            else None
        )
    fields: list = []
    slots: list = []
    for node in reversed(chain):
        fields.extend(node.fields)
        slots.extend(getattr(node, "link_slots", ()))
    return tuple(fields), tuple(slots)


def neighbor_groups_scan(graph_view):
    """Edge-scan grouping: every live vertex with in+out neighbor entries."""
    groups = {vid: [] for vid in graph_view.nodes}
    for (src, dst, slot), props in sorted(graph_view.edges.items()):
        groups[src].append((dst, dict(graph_view.nodes[dst]), dict(props)))
        groups[dst].append((src, dict(graph_view.nodes[src]), dict(props)))
    for entries in groups.values():
        entries.sort(key=lambda e: e[0])
    return groups
