"""Protocol dataflow runtime.

A dataflow is a directed graph of stateful vertices exchanging immutable
messages through queues; each directed edge is one queue with exactly one
upstream vertex.  Boundary vertices encapsulate external records into
messages (ingress) and decapsulate them to external consumers (egress);
cycles among internal vertices are allowed, since iteration needs them.

A protocol supplies the message codec and the per-vertex step semantics,
plus default input/output scheduler policies.  One message is consumed per
step: the input scheduler picks exactly one queued message, the handler
runs, and the output scheduler may reorder or batch that step's emissions.

Each vertex carries a Lamport clock: before the handler runs the clock
advances to max(clock, message timestamp) + 1, and every emission of the
step is stamped with the post-update clock.  Send/receive events (and any
protocol-defined events) are recorded with their timestamps; delivery to
observers orders events by (timestamp, vertex, event id), which extends any
registered causal relation consistent with the clocks.

There is no central scheduler: the only progress rule is that a vertex with
a non-empty input queue may step, and the event loop picks among ready
vertices using nothing but the run's seed.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import EngineError

INGRESS = "INGRESS"
INTERNAL = "INTERNAL"
EGRESS = "EGRESS"

FIFO = "fifo"
PRIORITY = "priority"

END = ["__end__"]  # end-of-input record appended to every external feed


class NoIngress(EngineError):
    pass


class NoEgress(EngineError):
    pass


class DanglingQueue(EngineError):
    pass


class UnknownProtocol(EngineError):
    pass


class DuplicateProtocol(EngineError):
    pass


class CodecSelfTestFailed(EngineError):
    pass


class IncompatibleStitch(EngineError):
    pass


class StepBudgetExceeded(EngineError):
    pass


class HandlerFault(EngineError):
    def __init__(self, vertex: str, cause: BaseException) -> None:
        super().__init__(f"vertex {vertex!r}: {cause!r}")
        self.vertex = vertex
        self.cause = cause


class NotPartialOrder(EngineError):
    pass


# -- codecs -----------------------------------------------------------------


@dataclass(frozen=True)
class Codec:
    name: str
    encode: Callable[[Any], str]
    decode: Callable[[str], Any]


def _json_encode(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


JSON_CODEC = Codec("json", _json_encode, json.loads)


def default_priority(meta: dict):
    return meta.get("priority", 0)


# -- protocol registry --------------------------------------------------------


@dataclass(frozen=True)
class Protocol:
    """Message format plus vertex-step semantics."""

    name: str
    handler: Callable  # (ctx, payload, meta) -> None
    init_state: Callable = lambda vertex_id, init: init
    codec: Codec = JSON_CODEC
    input_scheduler: str = FIFO
    output_scheduler: Callable | None = None  # (emissions) -> emissions
    priority_key: Callable = default_priority
    sample_payloads: tuple = ()
    accepts: str | None = None  # payload shape consumed by this protocol's ingress
    emits: str | None = None  # payload shape produced by this protocol's egress
    confluent: bool = False
    on_idle: Callable | None = None  # (ctx) -> None, called at global quiescence


class ProtocolRegistry:
    def __init__(self) -> None:
        self.protocols: dict[str, Protocol] = {}
        self.relations: dict[str, Callable] = {}

    def register_protocol(self, protocol: Protocol) -> None:
        if protocol.name in self.protocols:
            raise DuplicateProtocol(protocol.name)
        for sample in protocol.sample_payloads:
            wire = protocol.codec.encode(sample)
            back = protocol.codec.decode(wire)
            if back != sample:
                raise CodecSelfTestFailed(
                    f"{protocol.name}: {sample!r} round-tripped to {back!r}"
                )
        self.protocols[protocol.name] = protocol
        self.relations[protocol.name] = happened_before

    def register_causal_relation(self, protocol_id: str, relation: Callable) -> None:
        if protocol_id not in self.protocols:
            raise UnknownProtocol(protocol_id)
        self.relations[protocol_id] = relation

    def get(self, name: str) -> Protocol:
        if name not in self.protocols:
            raise UnknownProtocol(name)
        return self.protocols[name]


# -- graph ---------------------------------------------------------------------


@dataclass(frozen=True)
class VertexSpec:
    id: str
    protocol: str
    role: str = INTERNAL
    init: Any = None
    input_scheduler: str | None = None  # overrides the protocol default


@dataclass
class DataflowGraph:
    vertices: dict[str, VertexSpec]
    edges: list[tuple[str, str]]
    registry: ProtocolRegistry
    out_edges: dict[str, list[str]] = field(default_factory=dict)
    in_edges: dict[str, list[str]] = field(default_factory=dict)

    def role_of(self, vertex_id: str) -> str:
        return self.vertices[vertex_id].role


def build(spec: dict | None = None, *, registry: ProtocolRegistry, vertices=None, edges=None) -> DataflowGraph:
    """Validate and assemble a dataflow graph.

    Accepts either a JSON-style description (``{"vertices": [...], "edges":
    [...]}`` with ``from``/``to`` edge records) or explicit VertexSpec/edge
    lists.
    """
    if spec is not None:
        vertices = [
            VertexSpec(
                id=v["id"],
                protocol=v["protocol"],
                role=v.get("role", INTERNAL),
                init=v.get("init"),
                input_scheduler=v.get("input_scheduler"),
            )
            for v in spec["vertices"]
        ]
        edges = [(e["from"], e["to"]) for e in spec["edges"]]
    vertex_map: dict[str, VertexSpec] = {}
    for vertex in vertices:
        if vertex.id in vertex_map:
            raise DanglingQueue(f"duplicate vertex id {vertex.id!r}")
        if vertex.role not in (INGRESS, INTERNAL, EGRESS):
            raise DanglingQueue(f"vertex {vertex.id!r} has unknown role {vertex.role!r}")
        registry.get(vertex.protocol)  # raises UnknownProtocol
        vertex_map[vertex.id] = vertex
    if not any(v.role == INGRESS for v in vertex_map.values()):
        raise NoIngress("graph declares no ingress vertex")
    if not any(v.role == EGRESS for v in vertex_map.values()):
        raise NoEgress("graph declares no egress vertex")
    seen = set()
    out_edges: dict[str, list[str]] = {v: [] for v in vertex_map}
    in_edges: dict[str, list[str]] = {v: [] for v in vertex_map}
    for src, dst in edges or []:
        if src not in vertex_map or dst not in vertex_map:
            raise DanglingQueue(f"edge {src!r}->{dst!r} references a missing vertex")
        if (src, dst) in seen:
            raise DanglingQueue(f"duplicate queue {src!r}->{dst!r}")
        if vertex_map[src].role == EGRESS:
            raise DanglingQueue(f"egress vertex {src!r} cannot feed a queue")
        if vertex_map[dst].role == INGRESS:
            raise DanglingQueue(f"ingress vertex {dst!r} cannot read a queue")
        seen.add((src, dst))
        out_edges[src].append(dst)
        in_edges[dst].append(src)
    return DataflowGraph(
        vertices=vertex_map,
        edges=list(edges or []),
        registry=registry,
        out_edges=out_edges,
        in_edges=in_edges,
    )


def compose(g1: DataflowGraph, g2: DataflowGraph, stitching) -> DataflowGraph:
    """Stitch egress vertices of g1 onto ingress vertices of g2.

    Stitched boundary vertices become internal relays; everything else keeps
    its role.  With empty stitching this is a disjoint union.
    """
    if g1.registry is not g2.registry:
        raise IncompatibleStitch("graphs use different protocol registries")
    overlap = set(g1.vertices) & set(g2.vertices)
    if overlap:
        raise IncompatibleStitch(f"vertex ids collide: {sorted(overlap)}")
    converted: dict[str, str] = {}
    extra_edges = []
    for egress_id, ingress_id in stitching:
        if egress_id not in g1.vertices or g1.vertices[egress_id].role != EGRESS:
            raise IncompatibleStitch(f"{egress_id!r} is not an egress of the first graph")
        if ingress_id not in g2.vertices or g2.vertices[ingress_id].role != INGRESS:
            raise IncompatibleStitch(f"{ingress_id!r} is not an ingress of the second graph")
        emits = g1.registry.get(g1.vertices[egress_id].protocol).emits
        accepts = g2.registry.get(g2.vertices[ingress_id].protocol).accepts
        if emits is None or accepts is None or emits != accepts:
            raise IncompatibleStitch(
                f"{egress_id!r} emits {emits!r} but {ingress_id!r} accepts {accepts!r}"
            )
        converted[egress_id] = INTERNAL
        converted[ingress_id] = INTERNAL
        extra_edges.append((egress_id, ingress_id))
    vertices = []
    for graph in (g1, g2):
        for vertex in graph.vertices.values():
            role = converted.get(vertex.id, vertex.role)
            vertices.append(
                VertexSpec(vertex.id, vertex.protocol, role, vertex.init, vertex.input_scheduler)
            )
    edges = list(g1.edges) + list(g2.edges) + extra_edges
    vertex_map = {v.id: v for v in vertices}
    out_edges: dict[str, list[str]] = {v: [] for v in vertex_map}
    in_edges: dict[str, list[str]] = {v: [] for v in vertex_map}
    for src, dst in edges:
        out_edges[src].append(dst)
        in_edges[dst].append(src)
    if not any(v.role == INGRESS for v in vertices):
        raise NoIngress("composed graph has no external ingress")
    if not any(v.role == EGRESS for v in vertices):
        raise NoEgress("composed graph has no external egress")
    return DataflowGraph(
        vertices=vertex_map,
        edges=edges,
        registry=g1.registry,
        out_edges=out_edges,
        in_edges=in_edges,
    )


# -- messages and events -----------------------------------------------------


@dataclass(frozen=True)
class Message:
    id: int
    protocol: str
    payload: str  # wire form, per the sender protocol's codec
    meta: dict
    timestamp: int


@dataclass(frozen=True)
class CausalEvent:
    event_id: int
    vertex: str
    protocol: str
    kind: str  # recv | send | protocol-defined
    timestamp: int
    step: int
    message_id: int | None = None
    detail: Any = None

    def to_record(self) -> dict:
        record = {
            "event": self.event_id,
            "vertex": self.vertex,
            "T": self.timestamp,
            "kind": self.kind,
        }
        if self.message_id is not None:
            record["message"] = self.message_id
        return record


def happened_before(e1: CausalEvent, e2: CausalEvent) -> bool:
    """Default causal relation: per-vertex step order plus message send/recv."""
    if e1.vertex == e2.vertex:
        return e1.step < e2.step
    return (
        e1.kind == "send"
        and e2.kind == "recv"
        and e1.message_id is not None
        and e1.message_id == e2.message_id
    )


# -- runtime ------------------------------------------------------------------


class _InputPool:
    """All queued messages of one vertex, selectable by the input scheduler."""

    def __init__(self, mode: str, priority_key) -> None:
        self.mode = mode
        self.priority_key = priority_key
        self.fifo: deque = deque()
        self.heap: list = []

    def push(self, arrival: int, message: Message) -> None:
        if self.mode == PRIORITY:
            heapq.heappush(self.heap, (self.priority_key(message.meta), arrival, message))
        else:
            self.fifo.append((arrival, message))

    def pop(self) -> Message:
        if self.mode == PRIORITY:
            return heapq.heappop(self.heap)[2]
        return self.fifo.popleft()[1]

    def __len__(self) -> int:
        return len(self.heap) if self.mode == PRIORITY else len(self.fifo)


class VertexRuntime:
    def __init__(self, spec: VertexSpec, protocol: Protocol) -> None:
        self.id = spec.id
        self.role = spec.role
        self.protocol = protocol
        self.state = protocol.init_state(spec.id, spec.init)
        self.clock = 0
        self.step_count = 0
        mode = spec.input_scheduler or protocol.input_scheduler
        self.pool = _InputPool(mode, protocol.priority_key)


class VertexContext:
    """Handler-facing facade: emissions, external output, custom events."""

    def __init__(self, runner: "_Runner", vertex: VertexRuntime) -> None:
        self._runner = runner
        self._vertex = vertex
        self.emissions: list[tuple[str, Any, dict]] = []
        self.records: list = []
        self.events: list[tuple[str, Any]] = []

    @property
    def vertex_id(self) -> str:
        return self._vertex.id

    @property
    def state(self):
        return self._vertex.state

    @property
    def out_neighbors(self) -> list[str]:
        return self._runner.graph.out_edges[self._vertex.id]

    def emit_to(self, dst: str, payload, meta: dict | None = None) -> None:
        if dst not in self._runner.graph.out_edges[self._vertex.id]:
            raise DanglingQueue(f"{self._vertex.id!r} has no queue to {dst!r}")
        self.emissions.append((dst, payload, dict(meta or {})))

    def emit(self, port: int, payload, meta: dict | None = None) -> None:
        neighbors = self._runner.graph.out_edges[self._vertex.id]
        if port >= len(neighbors):
            raise DanglingQueue(f"{self._vertex.id!r} has no output port {port}")
        self.emissions.append((neighbors[port], payload, dict(meta or {})))

    def output(self, record) -> None:
        """External output, or downstream encapsulation when stitched."""
        if self._runner.graph.out_edges[self._vertex.id]:
            for dst in self._runner.graph.out_edges[self._vertex.id]:
                self.emissions.append((dst, record, {}))
        else:
            self.records.append(record)

    def emit_event(self, kind: str, detail=None) -> None:
        self.events.append((kind, detail))


@dataclass
class RunResult:
    outputs: list
    trace: list[CausalEvent]
    vertex_steps: Counter
    edge_messages: Counter
    states: dict
    steps: int

    def trace_lines(self) -> list[str]:
        return [json.dumps(e.to_record(), sort_keys=True) for e in self.trace]


def _pick_ready(ready: list[str], rng: random.Random) -> str:
    """The runtime's single scheduling decision point: seed-driven only."""
    return ready[rng.randrange(len(ready))]


class _Runner:
    def __init__(self, graph: DataflowGraph, seed: int, step_budget: int) -> None:
        self.graph = graph
        self.rng = random.Random(seed)
        self.step_budget = step_budget
        self.vertices = {
            vid: VertexRuntime(spec, graph.registry.get(spec.protocol))
            for vid, spec in graph.vertices.items()
        }
        self.order = sorted(self.vertices)
        self.trace: list[CausalEvent] = []
        self.outputs: list = []
        self.edge_messages: Counter = Counter()
        self.arrival = 0
        self.next_message_id = 0
        self.next_event_id = 0
        self.steps = 0

    def _event(self, vertex: VertexRuntime, kind: str, message_id=None, detail=None) -> None:
        self.trace.append(
            CausalEvent(
                event_id=self.next_event_id,
                vertex=vertex.id,
                protocol=vertex.protocol.name,
                kind=kind,
                timestamp=vertex.clock,
                step=vertex.step_count,
                message_id=message_id,
                detail=detail,
            )
        )
        self.next_event_id += 1

    def feed_external(self, vertex_id: str, record) -> None:
        vertex = self.vertices[vertex_id]
        wire = vertex.protocol.codec.encode(record)
        message = Message(
            id=self.next_message_id,
            protocol=vertex.protocol.name,
            payload=wire,
            meta={},
            timestamp=0,
        )
        self.next_message_id += 1
        vertex.pool.push(self.arrival, message)
        self.arrival += 1

    def _dispatch_emissions(self, vertex: VertexRuntime, ctx: VertexContext) -> None:
        emissions = ctx.emissions
        if vertex.protocol.output_scheduler is not None:
            emissions = vertex.protocol.output_scheduler(emissions)
        for dst, payload, meta in emissions:
            wire = vertex.protocol.codec.encode(payload)
            message = Message(
                id=self.next_message_id,
                protocol=vertex.protocol.name,
                payload=wire,
                meta=meta,
                timestamp=vertex.clock,
            )
            self.next_message_id += 1
            self._event(vertex, "send", message_id=message.id)
            self.vertices[dst].pool.push(self.arrival, message)
            self.arrival += 1
            self.edge_messages[(vertex.id, dst)] += 1
        for kind, detail in ctx.events:
            self._event(vertex, kind, detail=detail)
        self.outputs.extend(ctx.records)

    def step_vertex(self, vertex: VertexRuntime) -> None:
        message = vertex.pool.pop()
        vertex.clock = max(vertex.clock, message.timestamp) + 1
        vertex.step_count += 1
        self.steps += 1
        self._event(vertex, "recv", message_id=message.id)
        ctx = VertexContext(self, vertex)
        try:
            payload = vertex.protocol.codec.decode(message.payload)
            vertex.protocol.handler(ctx, payload, message.meta)
        except EngineError:
            raise
        except Exception as exc:  # protocol bug: abort the run, name the vertex
            raise HandlerFault(vertex.id, exc) from exc
        self._dispatch_emissions(vertex, ctx)

    def idle_sweep(self) -> bool:
        """Give each vertex one flush opportunity at global quiescence."""
        emitted = False
        for vid in self.order:
            vertex = self.vertices[vid]
            hook = vertex.protocol.on_idle
            if hook is None:
                continue
            ctx = VertexContext(self, vertex)
            try:
                hook(ctx)
            except EngineError:
                raise
            except Exception as exc:
                raise HandlerFault(vertex.id, exc) from exc
            if ctx.emissions or ctx.records or ctx.events:
                vertex.clock += 1
                vertex.step_count += 1
                self._dispatch_emissions(vertex, ctx)
                emitted = True
        return emitted

    def run_to_quiescence(self) -> None:
        while True:
            ready = [vid for vid in self.order if len(self.vertices[vid].pool)]
            if not ready:
                if self.idle_sweep():
                    continue
                return
            if self.steps >= self.step_budget:
                raise StepBudgetExceeded(
                    f"budget {self.step_budget} exhausted with {len(ready)} ready vertices"
                )
            self.step_vertex(self.vertices[_pick_ready(ready, self.rng)])


def run(
    graph: DataflowGraph,
    inputs,
    seed: int = 0,
    step_budget: int = 10**6,
) -> RunResult:
    """Drive the graph on the given external records until quiescence.

    ``inputs`` is a list of records for a single-ingress graph, or a list of
    ``(ingress_id, record)`` pairs.  An END record is appended to every fed
    ingress after its inputs.  Identical (graph, inputs, seed) produce an
    identical trace and outputs.
    """
    runner = _Runner(graph, seed, step_budget)
    ingress_ids = [vid for vid, v in graph.vertices.items() if v.role == INGRESS]
    fed: list[str] = []
    for item in inputs:
        if isinstance(item, tuple) and len(item) == 2 and item[0] in graph.vertices:
            target, record = item
        else:
            if len(ingress_ids) != 1:
                raise NoIngress(
                    "records must be addressed as (ingress, record) pairs when "
                    "the graph has multiple ingress vertices"
                )
            target, record = ingress_ids[0], item
        if graph.vertices[target].role != INGRESS:
            raise NoIngress(f"{target!r} is not an ingress vertex")
        runner.feed_external(target, record)
        if target not in fed:
            fed.append(target)
    for target in fed:
        runner.feed_external(target, END)
    runner.run_to_quiescence()
    return RunResult(
        outputs=[record for record in runner.outputs if record != END],
        trace=runner.trace,
        vertex_steps=Counter(
            {vid: v.step_count for vid, v in runner.vertices.items() if v.step_count}
        ),
        edge_messages=runner.edge_messages,
        states={vid: v.state for vid, v in runner.vertices.items()},
        steps=runner.steps,
    )


# -- event delivery -----------------------------------------------------------


def deliver_events(
    trace: list[CausalEvent],
    observer: Callable[[CausalEvent], bool] | None = None,
    registry: ProtocolRegistry | None = None,
    check_limit: int = 1000,
) -> list[CausalEvent]:
    """Total delivery order extending the registered causal relations.

    Events are ordered by (timestamp, vertex, event id); concurrent events
    tie-break deterministically.  The registered relation of each protocol is
    spot-checked for irreflexivity, sampled transitivity, and consistency
    with the delivery order; violations raise NotPartialOrder.
    """
    events = [e for e in trace if observer is None or observer(e)]
    delivered = sorted(events, key=lambda e: (e.timestamp, e.vertex, e.event_id))
    relations = registry.relations if registry is not None else {}
    position = {e.event_id: i for i, e in enumerate(delivered)}

    def relation_for(e1: CausalEvent, e2: CausalEvent):
        if e1.protocol == e2.protocol and e1.protocol in relations:
            return relations[e1.protocol]
        return happened_before

    for event in delivered:
        if relation_for(event, event)(event, event):
            raise NotPartialOrder(f"event {event.event_id} relates to itself")

    if len(delivered) <= check_limit:
        pairs = [(a, b) for a in delivered for b in delivered if a is not b]
    else:
        rng = random.Random(0xC0FFEE)
        pairs = [
            (delivered[rng.randrange(len(delivered))], delivered[rng.randrange(len(delivered))])
            for _ in range(check_limit * check_limit // 10)
        ]
    related = []
    for e1, e2 in pairs:
        if e1 is e2:
            continue
        if relation_for(e1, e2)(e1, e2):
            related.append((e1, e2))
            if position[e1.event_id] >= position[e2.event_id]:
                raise NotPartialOrder(
                    f"related pair ({e1.event_id} -> {e2.event_id}) is not honored "
                    f"by timestamps T={e1.timestamp},{e2.timestamp}"
                )
    rng = random.Random(0xFACADE)
    sample = related if len(related) <= 200 else rng.sample(related, 200)
    for e1, e2 in sample:
        for e3 in (delivered[:50] if len(delivered) > 50 else delivered):
            rel23 = relation_for(e2, e3)
            rel13 = relation_for(e1, e3)
            if e3 is not e1 and e3 is not e2 and rel23(e2, e3) and not rel13(e1, e3):
                raise NotPartialOrder(
                    f"transitivity violated on ({e1.event_id},{e2.event_id},{e3.event_id})"
                )
    return delivered


def graph_from_file(path: str, registry: ProtocolRegistry) -> DataflowGraph:
    with open(path, "r", encoding="utf-8") as handle:
        return build(json.load(handle), registry=registry)


def _identity_handler(ctx, payload, meta) -> None:
    if payload == END:
        if ctx.out_neighbors:
            for dst in ctx.out_neighbors:
                ctx.emit_to(dst, payload)
        return
    if ctx.out_neighbors:
        for dst in ctx.out_neighbors:
            ctx.emit_to(dst, payload)
    else:
        ctx.output(payload)


def identity_graph(registry: ProtocolRegistry | None = None) -> DataflowGraph:
    """ingress -> relay -> egress pass-through, used by tests and the CLI."""
    registry = registry or ProtocolRegistry()
    if "identity" not in registry.protocols:
        registry.register_protocol(
            Protocol(
                name="identity",
                handler=_identity_handler,
                init_state=lambda vid, init: None,
                confluent=True,
                sample_payloads=([1, 2], "text", {"a": 1}),
            )
        )
    return build(
        registry=registry,
        vertices=[
            VertexSpec("id.in", "identity", INGRESS),
            VertexSpec("id.relay", "identity", INTERNAL),
            VertexSpec("id.out", "identity", EGRESS),
        ],
        edges=[("id.in", "id.relay"), ("id.relay", "id.out")],
    )
