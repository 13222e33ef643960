"""MapReduce as a protocol: mappers, hash shuffle, grouping reducers.

Every key/value pair is tagged with its source record index and emission
index, and reducers sort value lists by those tags before reducing, so the
result equals the sequential group-by-key evaluation regardless of how the
shuffle interleaves.  End-of-input markers cascade ingress -> mappers ->
reducers -> egress; a reducer flushes once it holds a marker from every
mapper.
"""

from __future__ import annotations

from ..dataflow import (
    EGRESS,
    INGRESS,
    INTERNAL,
    Protocol,
    ProtocolRegistry,
    VertexSpec,
    build,
    run,
)
from ..util import stable_hash


def wordcount_map(record) -> list:
    return [(word, 1) for word in str(record).split()]


def wordcount_reduce(key, values) -> list:
    return [sum(values)]


def edge_weight_map(record) -> list:
    src, dst = str(record).split()[:2]
    return [(f"{src} {dst}", 1)]


def edge_weight_reduce(key, values) -> list:
    return [sum(values)]


MR_OPERATIONS = {
    "wordcount": (wordcount_map, wordcount_reduce),
    "edge_weights": (edge_weight_map, edge_weight_reduce),
}


def register_mapreduce_protocols(
    map_fn,
    reduce_fn,
    mappers: int,
    reducers: int,
    registry: ProtocolRegistry | None = None,
    format_output=None,
    emits: str | None = None,
) -> ProtocolRegistry:
    registry = registry or ProtocolRegistry()
    format_output = format_output or (lambda key, value: {"key": key, "value": value})

    def ingress_handler(ctx, payload, meta):
        state = ctx.state
        if payload == ["__end__"]:
            for i in range(mappers):
                ctx.emit_to(f"mr.m{i}", ["eof"])
            return
        index = state["next"]
        state["next"] += 1
        ctx.emit_to(f"mr.m{index % mappers}", ["rec", index, payload])

    def mapper_handler(ctx, payload, meta):
        if payload[0] == "eof":
            for j in range(reducers):
                ctx.emit_to(f"mr.r{j}", ["eof"])
            return
        _kind, index, record = payload
        for emission, (key, value) in enumerate(map_fn(record)):
            target = f"mr.r{stable_hash(str(key)) % reducers}"
            ctx.emit_to(target, ["kv", key, value, index, emission])
        ctx.emit_event("record_mapped", index)

    def reducer_handler(ctx, payload, meta):
        state = ctx.state
        if payload[0] == "kv":
            _kind, key, value, index, emission = payload
            state["groups"].setdefault(key, []).append((index, emission, value))
            return
        state["eofs"] += 1
        if state["eofs"] != mappers:
            return
        for key in sorted(state["groups"]):
            values = [v for _i, _j, v in sorted(state["groups"][key])]
            for out in reduce_fn(key, values):
                ctx.emit_to("mr.out", ["out", key, out])
        ctx.emit_to("mr.out", ["eof"])

    def egress_handler(ctx, payload, meta):
        state = ctx.state
        if payload[0] == "out":
            ctx.output(format_output(payload[1], payload[2]))
            return
        state["eofs"] += 1
        if state["eofs"] == reducers:
            ctx.output(["__end__"])

    registry.register_protocol(
        Protocol(
            name="mr.ingress",
            handler=ingress_handler,
            init_state=lambda vid, init: {"next": 0},
            sample_payloads=(["__end__"],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="mr.map",
            handler=mapper_handler,
            init_state=lambda vid, init: {},
            sample_payloads=(["rec", 0, "a b"],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="mr.reduce",
            handler=reducer_handler,
            init_state=lambda vid, init: {"groups": {}, "eofs": 0},
            sample_payloads=(["kv", "a", 1, 0, 0],),
        )
    )
    registry.register_protocol(
        Protocol(
            name="mr.egress",
            handler=egress_handler,
            init_state=lambda vid, init: {"eofs": 0},
            confluent=True,
            emits=emits,
            sample_payloads=(["out", "a", 2],),
        )
    )
    return registry


def build_mapreduce_graph(
    map_fn,
    reduce_fn,
    mappers: int = 2,
    reducers: int = 2,
    registry: ProtocolRegistry | None = None,
    format_output=None,
    emits: str | None = None,
):
    registry = register_mapreduce_protocols(
        map_fn, reduce_fn, mappers, reducers, registry, format_output, emits
    )
    vertices = [
        VertexSpec("mr.in", "mr.ingress", INGRESS),
        VertexSpec("mr.out", "mr.egress", EGRESS),
    ]
    edges = []
    for i in range(mappers):
        vertices.append(VertexSpec(f"mr.m{i}", "mr.map", INTERNAL))
        edges.append(("mr.in", f"mr.m{i}"))
        for j in range(reducers):
            edges.append((f"mr.m{i}", f"mr.r{j}"))
    for j in range(reducers):
        vertices.append(VertexSpec(f"mr.r{j}", "mr.reduce", INTERNAL))
        edges.append((f"mr.r{j}", "mr.out"))
    return build(registry=registry, vertices=vertices, edges=edges)


def mapreduce(inputs, map_fn, reduce_fn, reducers: int = 2, mappers: int = 2, seed: int = 0):
    """Run the job to quiescence; output pairs sorted by key, then value."""
    if isinstance(map_fn, str):
        map_fn, reduce_fn = MR_OPERATIONS[map_fn]
    graph = build_mapreduce_graph(map_fn, reduce_fn, mappers=mappers, reducers=reducers)
    result = run(graph, list(inputs), seed=seed)
    pairs = [
        (record["key"], record["value"])
        for record in result.outputs
        if isinstance(record, dict)
    ]
    return sorted(pairs), result


def wordcount(lines, reducers: int = 2, seed: int = 0) -> dict:
    pairs, _result = mapreduce(lines, wordcount_map, wordcount_reduce, reducers=reducers, seed=seed)
    return dict(pairs)
