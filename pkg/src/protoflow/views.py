"""Lineage-addressed immutable materialized views.

A view is named by the content hash of the computation that produced it: a
DAG of snapshot sources and operator applications.  Structurally identical
lineages share one materialization.  Operators must be deterministic (they
pass a two-run equality self-test at registration), which is what makes a
lost partition recoverable by replaying the lineage and keeping the lost
partition's keys.  Views are string-keyed maps partitioned by the same
stable hash the replica manager uses.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EngineError
from .store import EXISTS, Version, VersionedStore
from .util import content_hash, stable_hash

MATERIALIZED = "MATERIALIZED"
LOST = "LOST"


class UnknownOperator(EngineError):
    pass


class PartitionLost(EngineError):
    pass


class SourceUnavailable(EngineError):
    pass


class NondeterministicOperator(EngineError):
    pass


# -- lineage -----------------------------------------------------------------


@dataclass(frozen=True)
class SourceLineage:
    version: Version


@dataclass(frozen=True)
class ApplyLineage:
    op: str
    args: tuple
    params: tuple = ()  # sorted (key, value) pairs

    @classmethod
    def of(cls, op: str, *args, **params) -> "ApplyLineage":
        return cls(op, tuple(args), tuple(sorted(params.items())))


def lineage_to_obj(node) -> object:
    if isinstance(node, SourceLineage):
        return {"source": str(node.version)}
    return {
        "op": node.op,
        "args": [lineage_to_obj(arg) for arg in node.args],
        "params": [list(p) for p in node.params],
    }


def lineage_id(node) -> str:
    return content_hash(lineage_to_obj(node))


def lineage_sources(node) -> list[Version]:
    if isinstance(node, SourceLineage):
        return [node.version]
    found = []
    for arg in node.args:
        found.extend(lineage_sources(arg))
    return found


def lineage_operators(node) -> set[str]:
    if isinstance(node, SourceLineage):
        return set()
    ops = {node.op}
    for arg in node.args:
        ops |= lineage_operators(arg)
    return ops


# -- operators -----------------------------------------------------------------


class OperatorRegistry:
    def __init__(self) -> None:
        self.operators: dict = {}

    def register(self, name: str, fn, samples) -> None:
        """Register a deterministic operator; samples feed the two-run test."""
        if name in self.operators:
            raise ValueError(f"operator {name!r} already registered")
        for args, params in samples:
            first = fn([dict(a) for a in args], dict(params))
            second = fn([dict(a) for a in args], dict(params))
            if first != second:
                raise NondeterministicOperator(
                    f"operator {name!r} produced differing outputs on a sample"
                )
        self.operators[name] = fn

    def get(self, name: str):
        if name not in self.operators:
            raise UnknownOperator(name)
        return self.operators[name]


def _op_identity(args, params):
    return dict(args[0])


def _op_filter_prefix(args, params):
    prefix = params["prefix"]
    return {k: v for k, v in args[0].items() if k.startswith(prefix)}


def _op_scale(args, params):
    factor = params["factor"]
    return {
        k: v * factor
        for k, v in args[0].items()
        if isinstance(v, (int, float)) and not isinstance(v, bool)
    }


def _op_merge(args, params):
    merged: dict = {}
    for arg in args:
        merged.update(arg)
    return merged


def _op_degree_count(args, params):
    """Per-node live-edge counts over snapshot-export keys."""
    degree: dict[str, int] = {}
    for key, value in args[0].items():
        parts = key.split("|")
        if parts[0] != "e" or parts[-1] != EXISTS or value is not True:
            continue
        src, dst = parts[1], parts[2]
        degree[src] = degree.get(src, 0) + 1
        degree[dst] = degree.get(dst, 0) + 1
    return degree


def default_operators() -> OperatorRegistry:
    registry = OperatorRegistry()
    sample_map = {"a": 1, "b": 2, "e|u|v|s|" + EXISTS: True}
    registry.register("identity", _op_identity, [(({"x": 1},), {})])
    registry.register("filter_prefix", _op_filter_prefix, [((sample_map,), {"prefix": "a"})])
    registry.register("scale", _op_scale, [((sample_map,), {"factor": 2})])
    registry.register("merge", _op_merge, [(({"a": 1}, {"b": 2}), {})])
    registry.register("degree_count", _op_degree_count, [((sample_map,), {})])
    return registry


# -- catalog -----------------------------------------------------------------


@dataclass
class MaterializedView:
    view_id: str
    lineage: object
    partitions: dict  # pid -> {key: value}
    status: dict  # pid -> MATERIALIZED | LOST


class ViewCatalog:
    def __init__(self, snapshot_provider, operators: OperatorRegistry, partitions: int = 64):
        self.snapshot_provider = snapshot_provider  # Version -> {key: value}
        self.operators = operators
        self.partitions = partitions
        self.views: dict[str, MaterializedView] = {}

    def partition_of(self, key: str) -> int:
        return stable_hash(key) % self.partitions

    def _evaluate(self, node) -> dict:
        if isinstance(node, SourceLineage):
            return dict(self.snapshot_provider(node.version))
        fn = self.operators.get(node.op)
        args = [self._evaluate(arg) for arg in node.args]
        return fn(args, dict(node.params))

    def define(self, lineage) -> str:
        """Materialize (or reuse) the view for this lineage; returns its id."""
        for op in sorted(lineage_operators(lineage)):
            self.operators.get(op)  # raises UnknownOperator before any work
        view_id = lineage_id(lineage)
        if view_id in self.views:
            return view_id
        full = self._evaluate(lineage)
        partitions: dict[int, dict] = {pid: {} for pid in range(self.partitions)}
        for key, value in full.items():
            partitions[self.partition_of(key)][key] = value
        self.views[view_id] = MaterializedView(
            view_id=view_id,
            lineage=lineage,
            partitions=partitions,
            status={pid: MATERIALIZED for pid in range(self.partitions)},
        )
        return view_id

    def _view(self, view_id: str) -> MaterializedView:
        if view_id not in self.views:
            raise UnknownOperator(f"no view with id {view_id}")
        return self.views[view_id]

    def read(self, view_id: str, key: str):
        view = self._view(view_id)
        pid = self.partition_of(key)
        if view.status[pid] == LOST:
            raise PartitionLost(f"view {view_id[:12]} partition {pid} is lost")
        return view.partitions[pid].get(key)

    def lose_partition(self, view_id: str, pid: int) -> None:
        """Failure injection: drop one partition's contents."""
        view = self._view(view_id)
        view.partitions[pid] = {}
        view.status[pid] = LOST

    def recover(self, view_id: str, pid: int) -> None:
        """Replay the lineage and keep the lost partition's keys."""
        view = self._view(view_id)
        if view.status[pid] == MATERIALIZED:
            return
        full = self._evaluate(view.lineage)
        view.partitions[pid] = {
            key: value for key, value in full.items() if self.partition_of(key) == pid
        }
        view.status[pid] = MATERIALIZED

    def export_lines(self, view_id: str) -> list[str]:
        import json

        view = self._view(view_id)
        lost = [pid for pid, status in view.status.items() if status == LOST]
        if lost:
            raise PartitionLost(f"view {view_id[:12]} partitions {lost} are lost")
        merged: dict = {}
        for part in view.partitions.values():
            merged.update(part)
        lines = [json.dumps({"lineage": view_id})]
        lines += [
            json.dumps({"key": key, "value": merged[key]}, sort_keys=True)
            for key in sorted(merged)
        ]
        return lines


def store_snapshot_provider(store: VersionedStore, progress=None):
    """Provider over a single store, honoring seal progress and compaction."""
    from .store import SnapshotNotAvailable

    def provider(version: Version) -> dict:
        if progress is not None:
            sealed = progress()
            if sealed is None or version.epoch > sealed:
                raise SnapshotNotAvailable(
                    f"epoch {version.epoch} is not sealed globally"
                )
        if store.compaction_floor is not None and version < store.compaction_floor:
            raise SourceUnavailable(
                f"snapshot {version} compacted away (floor {store.compaction_floor})"
            )
        return store.snapshot(version).as_dict()

    return provider
