"""Asynchronous shortest-path traversal with pluggable input scheduling.

Relax messages carry their tentative distance as scheduler-visible priority
metadata.  Under the priority policy a worker always processes its smallest
queued distance, which on a single worker is exactly Dijkstra's order; under
FIFO it degenerates to label correcting.  Distances only ever decrease, so
the result is exact under either policy; the scheduler changes the amount
of work, never the answer.
"""

from __future__ import annotations

from ..dataflow import (
    EGRESS,
    INGRESS,
    INTERNAL,
    PRIORITY,
    Protocol,
    ProtocolRegistry,
    VertexSpec,
    build,
    run,
)
from ..errors import EngineError
from ..util import stable_hash
from .graphdata import as_graph_view


class NegativeWeight(EngineError):
    pass


class UnknownSource(EngineError):
    pass


def _worker_of(vertex_id: str, workers: int) -> str:
    return f"sp.w{stable_hash(vertex_id) % workers}"


def _ingress_handler(ctx, payload, meta) -> None:
    state = ctx.state
    if payload == ["__end__"]:
        return
    workers = state["workers"]
    adj = payload["adj"]
    shards: list[dict] = [{} for _ in range(workers)]
    for vid in sorted(adj):
        shards[stable_hash(vid) % workers][vid] = adj[vid]
    for index, shard in enumerate(shards):
        ctx.emit_to(f"sp.w{index}", ["init", shard], {"priority": -1.0})
    source = payload["source"]
    ctx.emit_to(_worker_of(source, workers), ["relax", source, 0.0], {"priority": 0.0})


def _worker_handler(ctx, payload, meta) -> None:
    state = ctx.state
    if payload[0] == "init":
        state["adj"] = payload[1]
        return
    _kind, vid, distance = payload
    state["relax_steps"] += 1
    best = state["dist"].get(vid)
    if best is not None and best <= distance:
        return
    state["dist"][vid] = distance
    for dst, weight in state["adj"].get(vid, []):
        candidate = distance + weight
        ctx.emit_to(
            _worker_of(dst, state["workers"]),
            ["relax", dst, candidate],
            {"priority": candidate},
        )


def _worker_idle(ctx) -> None:
    state = ctx.state
    if state["flushed"] or "adj" not in state:
        return
    state["flushed"] = True
    pairs = sorted(state["dist"].items())
    ctx.emit_to("sp.out", ["result", [[vid, value] for vid, value in pairs]])


def _egress_handler(ctx, payload, meta) -> None:
    state = ctx.state
    state["parts"].extend((vid, value) for vid, value in payload[1])
    state["received"] += 1
    if state["received"] == state["workers"]:
        for vid, value in sorted(state["parts"]):
            ctx.output({"vertex": vid, "value": value})


def register_traversal_protocols(registry: ProtocolRegistry | None = None) -> ProtocolRegistry:
    registry = registry or ProtocolRegistry()
    registry.register_protocol(
        Protocol(
            name="sp",
            handler=_worker_handler,
            init_state=lambda vid, init: dict(init, dist={}, relax_steps=0, flushed=False),
            input_scheduler=PRIORITY,
            on_idle=_worker_idle,
            sample_payloads=(["relax", "a", 1.5],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="sp.ingress",
            handler=_ingress_handler,
            init_state=lambda vid, init: dict(init or {}),
            sample_payloads=(["__end__"],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="sp.egress",
            handler=_egress_handler,
            init_state=lambda vid, init: {"parts": [], "received": 0, "workers": init["workers"]},
            sample_payloads=(["result", [["a", 0.0]]],),
        )
    )
    return registry


def build_traversal_graph(workers: int, scheduler: str = PRIORITY):
    registry = register_traversal_protocols()
    vertices = [
        VertexSpec("sp.in", "sp.ingress", INGRESS, init={"workers": workers}),
        VertexSpec("sp.out", "sp.egress", EGRESS, init={"workers": workers}),
    ]
    edges = []
    for i in range(workers):
        wid = f"sp.w{i}"
        vertices.append(
            VertexSpec(
                wid,
                "sp",
                INTERNAL,
                init={"index": i, "workers": workers},
                input_scheduler=scheduler,
            )
        )
        edges.append(("sp.in", wid))
        edges.append((wid, "sp.out"))
        for j in range(workers):
            edges.append((wid, f"sp.w{j}"))
    return build(registry=registry, vertices=vertices, edges=edges)


def sssp(source_data, source: str, scheduler: str = PRIORITY, workers: int = 1, seed: int = 0):
    """Exact non-negative shortest distances from ``source``.

    Returns (distance map, run result); unreachable vertices are absent from
    the map.  The run result's worker states carry ``relax_steps`` counters
    for scheduler comparisons.
    """
    gv = as_graph_view(source_data)
    if source not in gv.nodes:
        raise UnknownSource(f"source vertex {source!r} is not live in the snapshot")
    adj = {}
    for vid, edges in gv.out_edges(weighted=True).items():
        for dst, weight in edges:
            if weight < 0:
                raise NegativeWeight(f"edge {vid}->{dst} has weight {weight}")
        adj[vid] = [[dst, weight] for dst, weight in edges]
    graph = build_traversal_graph(workers, scheduler)
    result = run(graph, [{"adj": adj, "source": source}], seed=seed)
    distances = {record["vertex"]: record["value"] for record in result.outputs}
    steps = sum(
        state.get("relax_steps", 0)
        for state in result.states.values()
        if isinstance(state, dict)
    )
    return distances, result, steps
