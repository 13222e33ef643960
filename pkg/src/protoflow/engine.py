"""The simulated cluster engine: ingestion, coherence, jobs, metrics.

One ingest actor, one tracker actor holding the ordered announcement log,
and M data machines exchange messages over the simulated network.  The
ingest actor paces through the mutation stream, versions and routes records,
and defers dispatches that would outrun a target's seal progress.  Data
machines apply mutations through the replica manager (service rate: one
inbox message per tick), seal epochs when their counted work is done, and
announce seals through the tracker.

Jobs launch as soon as the consensus log shows their snapshot's epoch is
sealed globally, which can be while later epochs are still ingesting; the
append-only store makes the captured snapshot immutable either way.
Partition migrations are deferred while a partition has mutations in
flight, so a mutation's routing decision never goes stale.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field

from . import streamio
from .dataflow import StepBudgetExceeded, identity_graph, run as dataflow_run
from .models.bsp import pagerank as bsp_pagerank, wcc as bsp_wcc
from .models.graphdata import GraphView
from .models.joinview import DeltaLog, StructuralDelta
from .models.mapreduce import wordcount as mr_wordcount
from .models.temporal import temporal_series
from .models.traversal import sssp as async_sssp
from .replica import ReplicaManager
from .schema import NodeSchema, SchemaRegistry, parse_declaration
from .sim import (
    Network,
    SimConfig,
    SimTrace,
    check_dispatch_safety,
    check_monotone_reads,
    check_single_primary,
    seeded_order,
)
from .store import EXISTS, TOMBSTONE, DataKey, SnapshotNotAvailable, Version
from .tracker import (
    DISPATCHED,
    ConsensusLog,
    DataNodeProgress,
    IngestNode,
    StreamEnded,
    UnknownTarget,
)
from .util import stable_hash
from .views import SourceUnavailable, ViewCatalog, default_operators

TRACKER = "tracker"
INGEST = "ingest"

_DELTA_OPS = {
    "add_node": "node_add",
    "del_node": "node_del",
    "add_edge": "edge_add",
    "update_edge": "edge_update",
    "del_edge": "edge_del",
}


class DictSnapshot:
    """Immutable captured snapshot: DataKey -> value."""

    def __init__(self, watermark: Version, data: dict) -> None:
        self.watermark = watermark
        self._data = dict(data)

    def resolve(self, key: DataKey):
        return self._data.get(key)

    def items(self):
        for key in sorted(self._data, key=DataKey.to_string):
            yield key, self._data[key]

    def as_dict(self) -> dict:
        return {key.to_string(): value for key, value in self.items()}

    def export_lines(self) -> list[str]:
        import json

        return [
            json.dumps({"key": key.to_string(), "value": value}, sort_keys=True)
            for key, value in self.items()
        ]


@dataclass
class SimResult:
    outputs: list
    trace: SimTrace
    metrics: dict
    trace_hash: str
    engine: "Engine"
    pipelined: bool = False


class Engine:
    def __init__(self, config: SimConfig) -> None:
        self.config = config
        machines = list(range(config.machines))
        self.machines = machines
        self.registry = SchemaRegistry()
        self.rm = ReplicaManager(
            machines=config.machines,
            partitions=config.partitions,
            alpha=config.alpha,
            beta=config.beta,
            swap_ratio=config.swap_ratio,
            swap_windows=config.swap_windows,
            gc_windows=config.gc_windows,
            max_moves=config.max_moves,
            movable=self._movable,
        )
        self.ingest = IngestNode(self.registry, self.rm.place_anchor, machines)
        self.node_progress = {m: DataNodeProgress(m) for m in machines}
        self.log = ConsensusLog()
        self.network = Network(config)
        self.trace = SimTrace()
        self.rng = random.Random(config.seed)
        self.inboxes: dict = {m: deque() for m in machines}
        self.inboxes[TRACKER] = deque()
        self.inboxes[INGEST] = deque()
        self.delta_log = DeltaLog()
        self.in_flight_by_pid: Counter = Counter()
        self.operators = default_operators()
        self.views = ViewCatalog(self._view_provider, self.operators, config.partitions)
        self.tick = 0
        self.seal_ticks: list[dict] = []
        self.raw_records: list[dict] = []
        self.job: dict | None = None
        self.job_outputs: list | None = None
        self.job_dataflow: dict = {}
        self.stream_done = False

    # -- wiring helpers -----------------------------------------------------

    def _movable(self, pid: int, target: int) -> bool:
        return self.in_flight_by_pid.get(pid, 0) == 0

    def global_progress(self) -> int | None:
        return ConsensusLog.progress_at_prefix(self.log.entries, self.machines)

    def _view_provider(self, version: Version) -> dict:
        progress = self.global_progress()
        if progress is None or version.epoch > progress:
            raise SnapshotNotAvailable(f"epoch {version.epoch} is not sealed globally")
        for pid in range(self.config.partitions):
            floor = self.rm.primary_store(pid).compaction_floor
            if floor is not None and version < floor:
                raise SourceUnavailable(
                    f"snapshot {version} compacted away (floor {floor})"
                )
        return self.global_snapshot(version).as_dict()

    # -- snapshots ----------------------------------------------------------

    def global_snapshot(self, version: Version) -> DictSnapshot:
        """Merged resolution over all partition primaries (no access stats)."""
        data: dict = {}
        for pid in range(self.config.partitions):
            store = self.rm.primary_store(pid)
            for key in store.keys():
                value = store.resolve(key, version)
                if value is not None:
                    data[key] = value
        return DictSnapshot(version, data)

    def snapshot_provider(self, version: Version) -> DictSnapshot:
        progress = self.global_progress()
        if progress is None or version.epoch > progress:
            raise SnapshotNotAvailable(f"epoch {version.epoch} is not sealed globally")
        return self.global_snapshot(version)

    def await_snapshot(self, version: Version) -> DictSnapshot:
        """Post-run form: the stream has ended, so unsealed means never."""
        progress = self.global_progress()
        if progress is None or version.epoch > progress:
            raise StreamEnded(
                f"stream ended with global progress {progress}, "
                f"epoch {version.epoch} will never seal"
            )
        return self.global_snapshot(version)

    def read_graph(self, version: Version) -> GraphView:
        """Snapshot read routed through replica coherence (drives stats)."""
        data: dict = {}
        for pid in range(self.config.partitions):
            store = self.rm.primary_store(pid)
            for key in sorted(store.keys(), key=DataKey.to_string):
                reader = stable_hash("reader:" + key.anchor) % self.config.machines
                capped = self.rm.read_version_cap(key.anchor, version)
                value = self.rm.coherent_read(reader, key, capped)
                entry = store.resolve_entry(key, capped)
                self.trace.record(
                    self.tick,
                    "read",
                    machine=reader,
                    key=key.to_string(),
                    version=str(entry[0]) if entry else None,
                )
                if value is not None:
                    data[key] = value
                self._maybe_roll_window()
        return GraphView.from_snapshot(DictSnapshot(version, data))

    def _maybe_roll_window(self) -> None:
        if self.rm.events_in_window >= self.config.window:
            summary = self.rm.run_window_ops()
            self.trace.record(self.tick, "window", index=summary["window"])
            for move in summary["swaps"]:
                self.trace.record(
                    self.tick, "swap",
                    partition=move["partition"], **{"from": move["from"], "to": move["to"]},
                )
            for move in summary["rebalance_moves"]:
                self.trace.record(
                    self.tick, "rebalance_move",
                    partition=move["partition"], **{"from": move["from"], "to": move["to"]},
                )
            if summary["gc_collected"]:
                self.trace.record(self.tick, "gc", collected=summary["gc_collected"])

    # -- actors -------------------------------------------------------------

    def _send_mutation(self, pending) -> None:
        mutation = pending.mutation
        self.trace.record(
            self.tick,
            "dispatch",
            version=str(mutation.version),
            epoch=mutation.version.epoch,
            target=pending.target,
            partition=self.rm.partition_of(mutation.anchor),
        )
        self.network.send(
            self.tick, INGEST, pending.target, {"kind": "mutation", "pending": pending}
        )

    def _ingest_record(self, record: dict) -> None:
        self.raw_records.append(record)
        if "kind" in record:
            decl = parse_declaration(record)
            if isinstance(decl, NodeSchema):
                self.registry.declare_node_schema(decl)
            else:
                self.registry.declare_link_schema(decl)
            self.trace.record(self.tick, "declare", tag=str(decl.tag))
            return
        if record["op"] == "epoch_close":
            epoch = record["epoch"]
            counts = self.ingest.close_epoch()
            for machine in self.machines:
                self.trace.record(
                    self.tick, "close", epoch=epoch, node=machine, expected=counts[machine]
                )
                self.network.send(
                    self.tick,
                    INGEST,
                    machine,
                    {"kind": "close", "epoch": epoch, "expected": counts[machine]},
                )
            return
        pending = self.ingest.ingest(record)
        pid = self.rm.partition_of(pending.mutation.anchor)
        self.in_flight_by_pid[pid] += 1
        if self.ingest.try_dispatch(pending) == DISPATCHED:
            self._send_mutation(pending)
        else:
            self.trace.record(
                self.tick,
                "defer",
                version=str(pending.mutation.version),
                epoch=pending.mutation.version.epoch,
                target=pending.target,
            )

    def _append_delta(self, mutation) -> None:
        op = _DELTA_OPS.get(mutation.op)
        if op is None or not mutation.cells:
            return
        entity = mutation.cells[0][0].entity
        if entity[0] == "n":
            entity = (entity[1],)
        else:
            entity = entity[1:]
        props = {
            key.prop: value
            for key, value in mutation.cells
            if key.prop != EXISTS and value is not TOMBSTONE
        }
        self.delta_log.insert(
            StructuralDelta(mutation.version, op, entity, props)
        )

    def _apply_mutation(self, machine: int, pending) -> None:
        mutation = pending.mutation
        pid = self.rm.partition_of(mutation.anchor)
        for key, value in mutation.cells:
            self.rm.coherent_write(machine, key, mutation.version, value)
        while self.rm.propagations:
            prop = self.rm.propagations.popleft()
            self.network.send(self.tick, machine, prop.machine, {"kind": "prop", "prop": prop})
        self._append_delta(mutation)
        self.node_progress[machine].record_apply(mutation.version.epoch)
        self.in_flight_by_pid[pid] -= 1
        self.trace.record(
            self.tick,
            "apply",
            node=machine,
            version=str(mutation.version),
            epoch=mutation.version.epoch,
            partition=pid,
        )
        self._try_seal(machine)

    def _try_seal(self, machine: int) -> None:
        for epoch in self.node_progress[machine].try_seal():
            self.trace.record(self.tick, "seal_local", node=machine, epoch=epoch)
            self.network.send(
                self.tick, machine, TRACKER, {"kind": "seal", "node": machine, "epoch": epoch}
            )

    def _machine_step(self, machine: int) -> None:
        inbox = self.inboxes[machine]
        if not inbox:
            return
        message = inbox.popleft()
        kind = message["kind"]
        if kind == "mutation":
            self._apply_mutation(machine, message["pending"])
        elif kind == "close":
            self.node_progress[machine].record_close(message["epoch"], message["expected"])
            self._try_seal(machine)
        elif kind == "prop":
            self.rm.apply_propagation(message["prop"])

    def _tracker_step(self) -> None:
        inbox = self.inboxes[TRACKER]
        while inbox:
            message = inbox.popleft()
            entry = self.log.append(message["node"], message["epoch"])
            self.seal_ticks.append(
                {"node": message["node"], "epoch": message["epoch"], "tick": self.tick}
            )
            self.trace.record(
                self.tick, "log_append", index=entry.index, node=entry.node, epoch=entry.epoch
            )
            self.network.send(
                self.tick, TRACKER, INGEST,
                {"kind": "log", "node": entry.node, "epoch": entry.epoch},
            )

    def _ingest_inbox_step(self) -> None:
        inbox = self.inboxes[INGEST]
        while inbox:
            message = inbox.popleft()
            released = self.ingest.observe_seal(message["node"], message["epoch"])
            for pending in released:
                self.trace.record(
                    self.tick,
                    "release",
                    version=str(pending.mutation.version),
                    target=pending.target,
                )
                self._send_mutation(pending)

    # -- jobs ------------------------------------------------------------------

    def _job_epoch(self) -> int | None:
        job = self.job
        if job is None or job["kind"] in ("identity", "none"):
            return None
        if job["kind"] == "temporal":
            return Version.parse(job["to"]).epoch
        return Version.parse(job["at"]).epoch

    def _job_ready(self) -> bool:
        epoch = self._job_epoch()
        if epoch is None:
            return False
        progress = self.global_progress()
        return progress is not None and progress >= epoch

    def _launch_job(self) -> None:
        job = self.job
        kind = job["kind"]
        self.trace.record(self.tick, "job_start", job=kind)
        seed = self.config.seed
        workers = self.config.machines
        if kind == "identity":
            result = dataflow_run(identity_graph(), list(self.raw_records), seed=seed)
            self.job_outputs = result.outputs
        elif kind == "pagerank":
            gv = self.read_graph(Version.parse(job["at"]))
            values, result = bsp_pagerank(
                gv, job.get("iterations", 20), job.get("damping", 0.85), workers, seed
            )
            self.job_outputs = [
                {"vertex": vid, "value": value} for vid, value in sorted(values.items())
            ]
        elif kind == "wcc":
            gv = self.read_graph(Version.parse(job["at"]))
            values, result = bsp_wcc(gv, workers, seed)
            self.job_outputs = [
                {"vertex": vid, "value": value} for vid, value in sorted(values.items())
            ]
        elif kind == "sssp":
            gv = self.read_graph(Version.parse(job["at"]))
            distances, result, _steps = async_sssp(
                gv, job["source"], job.get("scheduler", "priority"), workers, seed
            )
            self.job_outputs = [
                {"vertex": vid, "value": value} for vid, value in sorted(distances.items())
            ]
        elif kind == "wordcount":
            gv = self.read_graph(Version.parse(job["at"]))
            lines = []
            for vid in sorted(gv.nodes):
                for prop in sorted(gv.nodes[vid]):
                    if isinstance(gv.nodes[vid][prop], str):
                        lines.append(gv.nodes[vid][prop])
            counts = mr_wordcount(lines, seed=seed)
            result = None
            self.job_outputs = [
                {"vertex": word, "value": count} for word, count in sorted(counts.items())
            ]
        elif kind == "temporal":
            series = temporal_series(
                self.snapshot_provider,
                job.get("algo", "degree"),
                Version.parse(job["from"]),
                Version.parse(job["to"]),
                job.get("stride", 1),
            )
            result = None
            self.job_outputs = [
                {"version": str(version), "digest": digest} for version, digest in series
            ]
        elif kind == "none":
            result = None
            self.job_outputs = []
        else:
            raise ValueError(f"unknown job kind {kind!r}")
        if result is not None:
            self.job_dataflow = {
                "edge_messages": {f"{s}->{d}": n for (s, d), n in result.edge_messages.items()},
                "vertex_steps": dict(result.vertex_steps),
            }
        self.trace.record(self.tick, "job_done", job=kind)

    # -- main loop ---------------------------------------------------------------

    def run(self, stream_lines, job: dict | None = None) -> SimResult:
        self.job = job
        records = streamio.parse_stream(stream_lines)
        pending_record = None
        job_launched = job is None

        while True:
            if self.tick > self.config.step_budget:
                raise StepBudgetExceeded(f"simulation exceeded {self.config.step_budget} ticks")
            for dst, message in self.network.deliver_due(self.tick):
                if dst not in self.inboxes:
                    raise UnknownTarget(str(dst))
                self.inboxes[dst].append(message)
            self._ingest_inbox_step()
            if not self.stream_done:
                for _ in range(self.config.ingest_rate):
                    try:
                        _lineno, record = next(records)
                    except StopIteration:
                        self.stream_done = True
                        break
                    self._ingest_record(record)
            for machine in seeded_order(self.machines, self.rng):
                self._machine_step(machine)
            self._tracker_step()
            if not job_launched and self._job_ready():
                self._launch_job()
                job_launched = True
            drained = (
                self.stream_done
                and not len(self.network)
                and all(not inbox for inbox in self.inboxes.values())
                and self.ingest.deferred_count() == 0
            )
            if drained:
                if not job_launched:
                    if self.job["kind"] in ("identity", "none"):
                        self._launch_job()
                        job_launched = True
                    else:
                        raise StreamEnded(
                            f"stream ended with global progress {self.global_progress()}, "
                            f"epoch {self._job_epoch()} will never seal"
                        )
                break
            self.tick += 1

        safety = check_dispatch_safety(self.trace)
        check_single_primary(self.trace, self.config.partitions, self.config.machines)
        check_monotone_reads(self.trace)
        return SimResult(
            outputs=self.job_outputs if self.job_outputs is not None else [],
            trace=self.trace,
            metrics=self.metrics(),
            trace_hash=self.trace.hash(),
            engine=self,
            pipelined=safety["pipelined"],
        )

    def metrics(self) -> dict:
        return {
            "ticks": self.tick,
            "replica": self.rm.metrics(),
            "seal_ticks": self.seal_ticks,
            "global_progress": self.global_progress(),
            "dataflow": self.job_dataflow,
            "deferred_total": self.trace and len(self.trace.of_kind("defer")),
        }


def simulate(config: SimConfig, stream_lines, job: dict | None = None) -> SimResult:
    """One full run: ingest the stream, run the job, check trace monitors."""
    engine = Engine(config)
    return engine.run(stream_lines, job)
