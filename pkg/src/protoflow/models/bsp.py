"""Vertex-centric BSP model as a protocol on the dataflow runtime.

The graph is sharded across worker vertices wired all-to-all (including a
self queue).  Data messages carry their superstep number as coordination
metadata and are buffered until the barrier for that superstep completes;
the barrier is a done marker sent on every outgoing queue after a worker
finishes a superstep.  Per-queue FIFO guarantees all of a superstep's data
precedes the marker, so no counting is needed.  Done markers also carry a
quiescence flag (all local vertices halted, nothing sent); when every flag
of a superstep is true the computation has terminated and workers emit
their shard results.

Floating point reductions (message sums, the dangling-mass aggregator) run
over canonically sorted pairs with math.fsum, so results are bit-identical
regardless of worker count or scheduling seed.
"""

from __future__ import annotations

import math
from collections import defaultdict

from ..dataflow import EGRESS, INGRESS, INTERNAL, Protocol, ProtocolRegistry, VertexSpec, build, run
from ..errors import EngineError
from ..util import stable_hash
from .graphdata import as_graph_view


class EmptyGraph(EngineError):
    pass


def shard_of(vertex_id: str, workers: int) -> int:
    return stable_hash(vertex_id) % workers


# -- vertex programs ---------------------------------------------------------


class BspVertex:
    """Compute-facing view of one graph vertex during a superstep."""

    def __init__(self, vid, value, superstep, messages, out_edges, n, aggregated, params):
        self.id = vid
        self.value = value
        self.superstep = superstep
        self.messages = messages  # sorted (sender, value) pairs
        self.out_edges = out_edges  # (dst, weight) pairs
        self.n_vertices = n
        self.aggregated = aggregated
        self.params = params
        self.sends: list[tuple[str, object]] = []
        self.agg: list = []
        self.halted = False

    def send(self, dst: str, value) -> None:
        self.sends.append((dst, value))

    def aggregate(self, value) -> None:
        self.agg.append(value)

    def vote_to_halt(self) -> None:
        self.halted = True


def _pagerank_compute(v: BspVertex) -> None:
    damping = v.params["damping"]
    iterations = v.params["iterations"]
    if v.superstep == 0:
        v.value = 1.0 / v.n_vertices
    else:
        incoming = math.fsum(value for _sender, value in v.messages)
        v.value = (1.0 - damping) / v.n_vertices + damping * (
            incoming + v.aggregated / v.n_vertices
        )
    if v.superstep < iterations:
        if v.out_edges:
            weight_sum = math.fsum(w for _dst, w in v.out_edges)
            for dst, w in v.out_edges:
                v.send(dst, v.value * (w / weight_sum))
        else:
            v.aggregate(v.value)  # dangling mass, redistributed uniformly
    else:
        v.vote_to_halt()


def _wcc_compute(v: BspVertex) -> None:
    if v.superstep == 0:
        v.value = v.id
        for dst, _w in v.out_edges:
            v.send(dst, v.value)
    else:
        best = min((value for _sender, value in v.messages), default=v.value)
        if best < v.value:
            v.value = best
            for dst, _w in v.out_edges:
                v.send(dst, v.value)
    v.vote_to_halt()


BSP_ALGORITHMS = {
    "pagerank": _pagerank_compute,
    "wcc": _wcc_compute,
}


# -- protocol ---------------------------------------------------------------


def _batch_output(emissions):
    """Output scheduler: merge one step's data emissions per destination."""
    batched: dict[tuple[str, int], list] = {}
    ordered = []
    for dst, payload, meta in emissions:
        if isinstance(payload, list) and payload and payload[0] == "data":
            slot = (dst, meta["s"])
            if slot in batched:
                batched[slot].append(payload[1:])
                continue
            batch: list = [payload[1:]]
            batched[slot] = batch
            ordered.append((dst, ["batch", batch], meta))
        else:
            ordered.append((dst, payload, meta))
    return ordered


def _worker_init(vertex_id, init):
    state = dict(init)
    state.update(
        vertices={},
        halted={},
        adj={},
        order=[],
        n=0,
        superstep=0,
        buffers=defaultdict(dict),
        agg=defaultdict(list),
        done_count=defaultdict(int),
        done_quiet=defaultdict(lambda: True),
        finished=False,
        merged_messages=0,
    )
    return state


def _worker_peers(state) -> list[str]:
    return [f"bsp.w{i}" for i in range(state["workers"])]


def _run_superstep(ctx, state) -> None:
    s = state["superstep"]
    buffered = state["buffers"].pop(s, {})
    agg_pairs = state["agg"].pop(s, [])
    aggregated = math.fsum(value for _vid, value in sorted(agg_pairs))
    compute = BSP_ALGORITHMS[state["algorithm"]]
    sends: list[tuple[str, str, object]] = []
    new_agg: list = []
    for vid in state["order"]:
        if state["halted"][vid] and vid not in buffered:
            continue
        state["halted"][vid] = False
        messages = sorted(buffered.get(vid, []))
        vctx = BspVertex(
            vid,
            state["vertices"][vid],
            s,
            messages,
            state["adj"].get(vid, []),
            state["n"],
            aggregated,
            state["params"],
        )
        compute(vctx)
        state["vertices"][vid] = vctx.value
        state["halted"][vid] = vctx.halted
        sends.extend((dst, vid, value) for dst, value in vctx.sends)
        new_agg.extend((vid, value) for value in vctx.agg)
    for dst, src, value in sends:
        target = f"bsp.w{shard_of(dst, state['workers'])}"
        ctx.emit_to(target, ["data", dst, src, value], {"s": s + 1})
    if new_agg:
        for peer in _worker_peers(state):
            ctx.emit_to(peer, ["agg", sorted(new_agg)], {"s": s + 1})
    quiet = not sends and all(state["halted"].values())
    for peer in _worker_peers(state):
        ctx.emit_to(peer, ["done", quiet], {"s": s})


def _maybe_advance(ctx, state) -> None:
    while not state["finished"] and state["done_count"][state["superstep"]] == state["workers"]:
        s = state["superstep"]
        if state["done_quiet"][s]:
            state["finished"] = True
            pairs = sorted(state["vertices"].items())
            ctx.emit_to("bsp.out", ["result", [[vid, value] for vid, value in pairs]])
            return
        state["superstep"] = s + 1
        _run_superstep(ctx, state)


def _worker_handler(ctx, payload, meta) -> None:
    state = ctx.state
    kind = payload[0]
    if kind == "init":
        shard = payload[1]
        state["vertices"] = {vid: value for vid, value in shard["vertices"]}
        state["halted"] = {vid: False for vid in state["vertices"]}
        state["adj"] = {vid: [tuple(e) for e in edges] for vid, edges in shard["adj"].items()}
        state["order"] = sorted(state["vertices"])
        state["n"] = shard["n"]
        state["algorithm"] = shard["algorithm"]
        state["params"] = shard["params"]
        _run_superstep(ctx, state)
        _maybe_advance(ctx, state)
    elif kind == "batch":
        bucket = state["buffers"][meta["s"]]
        state["merged_messages"] += len(payload[1]) - 1
        for dst, src, value in payload[1]:
            bucket.setdefault(dst, []).append((src, value))
    elif kind == "data":
        state["buffers"][meta["s"]].setdefault(payload[1], []).append(
            (payload[2], payload[3])
        )
    elif kind == "agg":
        state["agg"][meta["s"]].extend((vid, value) for vid, value in payload[1])
    elif kind == "done":
        state["done_count"][meta["s"]] += 1
        if not payload[1]:
            state["done_quiet"][meta["s"]] = False
        _maybe_advance(ctx, state)


def _ingress_handler(ctx, payload, meta) -> None:
    state = ctx.state
    if payload == ["__end__"]:
        if state.get("edges") is not None:
            _start_from_edges(ctx, state)
        return
    if isinstance(payload, list) and payload and payload[0] == "edge":
        state.setdefault("edges", []).append(payload[1:])
        return
    _start_job(ctx, state, payload["graph"], payload["algorithm"], payload["params"])


def _start_from_edges(ctx, state) -> None:
    values: dict[str, object] = {}
    adj: dict[str, list] = {}
    for src, dst, weight in state["edges"]:
        values.setdefault(src, None)
        values.setdefault(dst, None)
        adj.setdefault(src, []).append([dst, weight])
    for entries in adj.values():
        entries.sort()
    graph = {"values": values, "adj": adj}
    _start_job(ctx, state, graph, state["algorithm"], state["params"])


def _start_job(ctx, state, graph, algorithm, params) -> None:
    workers = state["workers"]
    values = graph["values"]
    adj = graph["adj"]
    shards: list[dict] = [
        {"vertices": [], "adj": {}, "n": len(values), "algorithm": algorithm, "params": params}
        for _ in range(workers)
    ]
    for vid in sorted(values):
        shard = shards[shard_of(vid, workers)]
        shard["vertices"].append([vid, values[vid]])
        shard["adj"][vid] = adj.get(vid, [])
    for index, shard in enumerate(shards):
        ctx.emit_to(f"bsp.w{index}", ["init", shard])


def _egress_handler(ctx, payload, meta) -> None:
    state = ctx.state
    if payload[0] != "result":
        return
    state["parts"].extend((vid, value) for vid, value in payload[1])
    state["received"] += 1
    if state["received"] == state["workers"]:
        for vid, value in sorted(state["parts"]):
            ctx.output({"vertex": vid, "value": value})


def register_bsp_protocols(registry: ProtocolRegistry | None = None) -> ProtocolRegistry:
    registry = registry or ProtocolRegistry()
    registry.register_protocol(
        Protocol(
            name="bsp",
            handler=_worker_handler,
            init_state=_worker_init,
            output_scheduler=_batch_output,
            sample_payloads=(["data", "a", "b", 0.5], ["done", True]),
        )
    )
    registry.register_protocol(
        Protocol(
            name="bsp.ingress",
            handler=_ingress_handler,
            init_state=lambda vid, init: dict(init or {}),
            accepts="weighted-edges",
            sample_payloads=(["edge", "a", "b", 1.0],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="bsp.egress",
            handler=_egress_handler,
            init_state=lambda vid, init: {"parts": [], "received": 0, "workers": init["workers"]},
            sample_payloads=(["result", [["a", 1.0]]],),
        )
    )
    return registry


def build_bsp_graph(
    workers: int,
    algorithm: str | None = None,
    params: dict | None = None,
    registry: ProtocolRegistry | None = None,
):
    registry = register_bsp_protocols(registry)
    ingress_init = {"workers": workers}
    if algorithm is not None:
        ingress_init.update(algorithm=algorithm, params=params or {})
    vertices = [
        VertexSpec("bsp.in", "bsp.ingress", INGRESS, init=ingress_init),
        VertexSpec("bsp.out", "bsp.egress", EGRESS, init={"workers": workers}),
    ]
    edges = []
    for i in range(workers):
        wid = f"bsp.w{i}"
        vertices.append(VertexSpec(wid, "bsp", INTERNAL, init={"index": i, "workers": workers}))
        edges.append(("bsp.in", wid))
        edges.append((wid, "bsp.out"))
        for j in range(workers):
            edges.append((wid, f"bsp.w{j}"))
    return build(registry=registry, vertices=vertices, edges=edges)


def run_bsp(source, algorithm: str, params: dict, workers: int = 1, seed: int = 0):
    gv = as_graph_view(source)
    if not gv.nodes:
        raise EmptyGraph("no live vertices in the snapshot")
    if algorithm == "wcc":
        adj = {
            vid: [[peer, 1.0] for peer in peers]
            for vid, peers in gv.undirected_neighbors().items()
        }
    else:
        adj = {vid: [[dst, w] for dst, w in edges] for vid, edges in gv.out_edges(weighted=True).items()}
    job = {
        "graph": {"values": {vid: None for vid in gv.nodes}, "adj": adj},
        "algorithm": algorithm,
        "params": params,
    }
    graph = build_bsp_graph(workers)
    result = run(graph, [job], seed=seed)
    values = {record["vertex"]: record["value"] for record in result.outputs}
    return values, result


def pagerank(source, iterations: int, damping: float, workers: int = 1, seed: int = 0):
    """n synchronous update rounds; dangling mass redistributed uniformly."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if not 0.0 < damping < 1.0:
        raise ValueError("damping must be in (0, 1)")
    values, result = run_bsp(
        source, "pagerank", {"iterations": iterations, "damping": damping}, workers, seed
    )
    return values, result


def wcc(source, workers: int = 1, seed: int = 0):
    """Label every vertex with the smallest vertex id in its weak component."""
    return run_bsp(source, "wcc", {}, workers, seed)
