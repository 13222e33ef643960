"""Asynchronous mutation dispatch and snapshot progress tracking.

The ingest node assigns each mutation a (epoch, seq) version and dispatches
it to the data node owning the target entity.  A mutation of epoch e may be
dispatched as soon as its target has sealed every epoch < e; there is no
global barrier, so mutations from different epochs can be in flight at once.
Mutations that are not yet safe stay DEFERRED at the ingest node and are
released when the target's seal announcement is observed.

Seal announcements travel through a single totally ordered announcement log
standing in for a consensus (Paxos-style) protocol: every observer replays
the same sequence and therefore computes the same global progress, which is
the minimum sealed epoch across all data nodes.

Epoch boundaries come from explicit epoch_close markers in the input stream;
the close notification broadcast to each data node carries the number of
epoch-e mutations routed to it, so a node can seal e exactly when its own
epoch-e work is applied (nodes routed nothing seal on the marker alone).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EngineError
from .schema import SchemaRegistry, SchemaVersionTag
from .store import EXISTS, TOMBSTONE, DataKey, Version

DISPATCHED = "DISPATCHED"
DEFERRED = "DEFERRED"


class EpochRegression(EngineError):
    pass


class UnknownSchema(EngineError):
    pass


class UnknownTarget(EngineError):
    pass


class OutOfOrderSeal(EngineError):
    pass


class UnappliedMutations(EngineError):
    pass


class StreamEnded(EngineError):
    pass


@dataclass(frozen=True)
class Mutation:
    version: Version
    op: str
    cells: tuple  # ((DataKey, value-or-TOMBSTONE), ...)
    anchor: str


@dataclass
class PendingMutation:
    mutation: Mutation
    target: int
    state: str = DEFERRED  # DISPATCHED | DEFERRED


@dataclass(frozen=True)
class SealAnnouncement:
    index: int
    node: int
    epoch: int


class ConsensusLog:
    """Totally ordered seal-announcement log (simulated consensus)."""

    def __init__(self) -> None:
        self.entries: list[SealAnnouncement] = []

    def append(self, node: int, epoch: int) -> SealAnnouncement:
        entry = SealAnnouncement(len(self.entries), node, epoch)
        self.entries.append(entry)
        return entry

    @staticmethod
    def progress_at_prefix(entries, nodes) -> int | None:
        """Global progress computed from a log prefix: min sealed over nodes."""
        sealed: dict[int, int | None] = {n: None for n in nodes}
        for entry in entries:
            sealed[entry.node] = entry.epoch
        values = list(sealed.values())
        if any(v is None for v in values):
            return None
        return min(values)


class ProgressTable:
    """Per-node sealed epochs as known to one observer."""

    def __init__(self, nodes) -> None:
        self.sealed: dict[int, int | None] = {n: None for n in nodes}

    def observe(self, node: int, epoch: int) -> None:
        if node not in self.sealed:
            raise UnknownTarget(f"node {node} is not a data node")
        current = self.sealed[node]
        if current is None or epoch > current:
            self.sealed[node] = epoch

    def sealed_of(self, node: int) -> int | None:
        if node not in self.sealed:
            raise UnknownTarget(f"node {node} is not a data node")
        return self.sealed[node]

    def global_progress(self) -> int | None:
        values = list(self.sealed.values())
        if not values or any(v is None for v in values):
            return None
        return min(values)


def dispatch(pending: PendingMutation, progress: ProgressTable) -> str:
    """Safety rule: dispatch iff the target sealed every epoch < the mutation's."""
    epoch = pending.mutation.version.epoch
    sealed = progress.sealed_of(pending.target)
    if epoch == 0 or (sealed is not None and sealed >= epoch - 1):
        pending.state = DISPATCHED
        return DISPATCHED
    pending.state = DEFERRED
    return DEFERRED


class DataNodeProgress:
    """Seal bookkeeping for one data node."""

    def __init__(self, node: int) -> None:
        self.node = node
        self.sealed: int | None = None
        self.expected: dict[int, int] = {}
        self.applied: dict[int, int] = {}

    def record_close(self, epoch: int, expected: int) -> None:
        self.expected[epoch] = expected

    def record_apply(self, epoch: int) -> None:
        self.applied[epoch] = self.applied.get(epoch, 0) + 1

    def seal_local(self, epoch: int) -> None:
        previous = -1 if self.sealed is None else self.sealed
        if epoch != previous + 1:
            raise OutOfOrderSeal(
                f"node {self.node}: cannot seal {epoch} with sealed={self.sealed}"
            )
        if epoch not in self.expected:
            raise UnappliedMutations(
                f"node {self.node}: epoch {epoch} not closed by the ingest node"
            )
        if self.applied.get(epoch, 0) != self.expected[epoch]:
            raise UnappliedMutations(
                f"node {self.node}: epoch {epoch} has "
                f"{self.applied.get(epoch, 0)}/{self.expected[epoch]} applied"
            )
        self.sealed = epoch

    def try_seal(self) -> list[int]:
        """Seal every epoch whose close arrived and whose work is applied."""
        sealed_now = []
        while True:
            nxt = 0 if self.sealed is None else self.sealed + 1
            if nxt not in self.expected:
                break
            if self.applied.get(nxt, 0) != self.expected[nxt]:
                break
            self.sealed = nxt
            sealed_now.append(nxt)
        return sealed_now


class IngestNode:
    """Assigns versions, routes mutations, and holds back unsafe dispatches."""

    def __init__(self, registry: SchemaRegistry, place, nodes) -> None:
        self.registry = registry
        self.place = place  # anchor string -> data node id
        self.progress = ProgressTable(nodes)
        self.current_epoch = 0
        self.next_seq = 0
        self.node_schemas: dict[str, SchemaVersionTag] = {}
        self.epoch_counts: dict[int, int] = {}
        self.deferred: dict[int, dict[int, list[PendingMutation]]] = {}
        self.stream_ended = False

    # -- record -> versioned mutation ---------------------------------

    def ingest(self, record: dict) -> PendingMutation:
        epoch = record["epoch"]
        if epoch != self.current_epoch:
            raise EpochRegression(
                f"record for epoch {epoch}, current epoch is {self.current_epoch}"
            )
        cells, anchor = self._build_cells(record)
        version = Version(self.current_epoch, self.next_seq)
        self.next_seq += 1
        mutation = Mutation(version=version, op=record["op"], cells=cells, anchor=anchor)
        target = self.place(anchor)
        if target not in self.progress.sealed:
            raise UnknownTarget(f"partition map routed {anchor!r} to unknown node {target}")
        self.epoch_counts[target] = self.epoch_counts.get(target, 0) + 1
        return PendingMutation(mutation=mutation, target=target)

    def _build_cells(self, record: dict):
        op = record["op"]
        props = record.get("props", {})
        if op in ("add_node", "update_node", "del_node"):
            node_id = record["id"]
            if op == "add_node":
                tag = SchemaVersionTag.parse(record["schema"])
                if not self.registry.is_declared(tag):
                    raise UnknownSchema(f"schema {tag} not declared")
                violations = self.registry.validate_payload(tag, props)
                if violations:
                    v = violations[0]
                    raise UnknownSchema(
                        f"payload for {node_id!r} does not match {tag}: "
                        f"{v.kind} field {v.field!r}"
                    )
                self.node_schemas[node_id] = tag
                cells = [(DataKey.node(node_id, EXISTS), str(tag))]
                cells += [(DataKey.node(node_id, k), v) for k, v in sorted(props.items())]
            elif op == "update_node":
                tag = self.node_schemas.get(node_id)
                if tag is None:
                    raise UnknownSchema(f"update of undeclared node {node_id!r}")
                violations = self.registry.validate_partial(tag, props)
                if violations:
                    v = violations[0]
                    raise UnknownSchema(
                        f"update of {node_id!r} does not match {tag}: "
                        f"{v.kind} field {v.field!r}"
                    )
                cells = [(DataKey.node(node_id, k), v) for k, v in sorted(props.items())]
            else:
                self.node_schemas.pop(node_id, None)
                cells = [(DataKey.node(node_id, EXISTS), TOMBSTONE)]
            return tuple(cells), node_id
        src, dst, slot = record["src"], record["dst"], record["slot"]
        if op == "add_edge":
            link = self.registry.latest_link_schema(slot)
            if link is not None:
                violations = self.registry.validate_payload(link.tag, props)
                if violations:
                    v = violations[0]
                    raise UnknownSchema(
                        f"edge props do not match {link.tag}: {v.kind} field {v.field!r}"
                    )
            cells = [(DataKey.edge(src, dst, slot, EXISTS), True)]
            cells += [(DataKey.edge(src, dst, slot, k), v) for k, v in sorted(props.items())]
        elif op == "update_edge":
            cells = [(DataKey.edge(src, dst, slot, k), v) for k, v in sorted(props.items())]
        else:  # del_edge
            cells = [(DataKey.edge(src, dst, slot, EXISTS), TOMBSTONE)]
        return tuple(cells), src

    def close_epoch(self) -> dict[int, int]:
        """Close the current epoch; returns per-node expected mutation counts."""
        counts = {node: self.epoch_counts.get(node, 0) for node in self.progress.sealed}
        self.current_epoch += 1
        self.next_seq = 0
        self.epoch_counts = {}
        return counts

    # -- dispatch and deferral ----------------------------------------

    def try_dispatch(self, pending: PendingMutation) -> str:
        state = dispatch(pending, self.progress)
        if state == DEFERRED:
            per_node = self.deferred.setdefault(pending.target, {})
            per_node.setdefault(pending.mutation.version.epoch, []).append(pending)
        return state

    def observe_seal(self, node: int, epoch: int) -> list[PendingMutation]:
        """Update the progress view; release deferred mutations now safe."""
        self.progress.observe(node, epoch)
        sealed = self.progress.sealed_of(node)
        released: list[PendingMutation] = []
        per_node = self.deferred.get(node)
        if per_node:
            eligible = sorted(e for e in per_node if e <= (sealed or 0) + 1)
            for e in eligible:
                for pending in per_node.pop(e):
                    pending.state = DISPATCHED
                    released.append(pending)
        return released

    def deferred_count(self) -> int:
        return sum(
            len(batch) for per_node in self.deferred.values() for batch in per_node.values()
        )


class SnapshotGate:
    """Pending snapshot requests resolved as global progress advances."""

    def __init__(self) -> None:
        self.pending: list[Version] = []

    def request(self, version: Version, progress: int | None) -> bool:
        """True when the snapshot is already available, else queue it."""
        if progress is not None and version.epoch <= progress:
            return True
        self.pending.append(version)
        return False

    def ready(self, progress: int | None) -> list[Version]:
        if progress is None:
            return []
        served = [v for v in self.pending if v.epoch <= progress]
        self.pending = [v for v in self.pending if v.epoch > progress]
        return served

    def end_of_stream(self, progress: int | None) -> list[Version]:
        """Requests that can never be satisfied once the stream has closed."""
        unserved = list(self.pending)
        self.pending = []
        return unserved
