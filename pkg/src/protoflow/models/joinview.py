"""Join view: incrementally maintained adjacency for join-group-by.

The view keeps node liveness, edge liveness, and last-wins edge property
maps as of a watermark version, plus consumes a log of structural deltas to
roll forward.  The defining property is that refreshing with the deltas up
to a version equals rebuilding the view from the snapshot at that version;
property maps survive delete/re-add cycles exactly like store resolution
does (property cells version independently of the EXISTS marker).
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass, field

from ..errors import EngineError
from ..store import Version
from .graphdata import GraphView, as_graph_view


class ViewBehindSnapshot(EngineError):
    pass


class DeltaGap(EngineError):
    pass


@dataclass(frozen=True)
class StructuralDelta:
    version: Version
    op: str  # node_add | node_del | edge_add | edge_del | edge_update
    entity: tuple  # (node_id,) or (src, dst, slot)
    props: dict = field(default_factory=dict)


class DeltaLog:
    """Version-ordered log of adjacency-affecting mutations."""

    def __init__(self) -> None:
        self.entries: list[StructuralDelta] = []
        self.compacted_floor: Version | None = None

    def append(self, delta: StructuralDelta) -> None:
        if self.entries and delta.version <= self.entries[-1].version:
            raise DeltaGap(
                f"delta {delta.version} appended after {self.entries[-1].version}"
            )
        self.entries.append(delta)

    def insert(self, delta: StructuralDelta) -> None:
        """Version-ordered insert for feeds that apply out of version order."""
        from bisect import insort

        insort(self.entries, delta, key=lambda d: d.version)

    def compact(self, before: Version) -> int:
        versions = [d.version for d in self.entries]
        cut = bisect_right(versions, before)
        del self.entries[:cut]
        if self.compacted_floor is None or before > self.compacted_floor:
            self.compacted_floor = before
        return cut

    def between(self, lo: Version, hi: Version) -> list[StructuralDelta]:
        """Deltas with lo < version <= hi."""
        if self.compacted_floor is not None and lo < self.compacted_floor and hi > lo:
            raise DeltaGap(
                f"log compacted through {self.compacted_floor}, need deltas above {lo}"
            )
        return [d for d in self.entries if lo < d.version <= hi]

    @staticmethod
    def delta_for(op: str, record_entity: tuple, version: Version, props: dict | None):
        return StructuralDelta(version, op, record_entity, dict(props or {}))


@dataclass
class JoinView:
    watermark: Version
    node_live: set = field(default_factory=set)
    edge_live: set = field(default_factory=set)  # (src, dst, slot)
    edge_props: dict = field(default_factory=dict)  # last-wins merged maps

    @classmethod
    def build(cls, snapshot) -> "JoinView":
        gv = as_graph_view(snapshot)
        view = cls(watermark=snapshot.watermark)
        view.node_live = set(gv.nodes)
        view.edge_live = set(gv.edges)
        view.edge_props = {e: dict(p) for e, p in gv.edges.items()}
        return view

    def apply_delta(self, delta: StructuralDelta) -> None:
        if delta.op == "node_add":
            self.node_live.add(delta.entity[0])
        elif delta.op == "node_del":
            self.node_live.discard(delta.entity[0])
        elif delta.op == "edge_add":
            self.edge_live.add(delta.entity)
            merged = self.edge_props.setdefault(delta.entity, {})
            merged.update(delta.props)
        elif delta.op == "edge_update":
            self.edge_props.setdefault(delta.entity, {}).update(delta.props)
        elif delta.op == "edge_del":
            self.edge_live.discard(delta.entity)

    def adjacency(self) -> dict[str, list]:
        """Live per-vertex adjacency: out and in entries for live endpoints."""
        adjacency: dict[str, list] = {n: [] for n in sorted(self.node_live)}
        for src, dst, slot in sorted(self.edge_live):
            if src not in self.node_live or dst not in self.node_live:
                continue
            props = self.edge_props.get((src, dst, slot), {})
            adjacency[src].append(("out", dst, slot, dict(props)))
            adjacency[dst].append(("in", src, slot, dict(props)))
        for entries in adjacency.values():
            entries.sort(key=lambda e: (e[1], e[2], e[0]))
        return adjacency

    def export(self) -> dict:
        return {
            "watermark": str(self.watermark),
            "nodes": sorted(self.node_live),
            "edges": [
                [list(e), dict(sorted(self.edge_props.get(e, {}).items()))]
                for e in sorted(self.edge_live)
            ],
        }


def refresh_join_view(view: JoinView, target: Version, log: DeltaLog) -> JoinView:
    """Roll the view forward to ``target`` by replaying the delta log."""
    if target == view.watermark:
        return view
    if target < view.watermark:
        raise ValueError(f"cannot refresh backwards from {view.watermark} to {target}")
    for delta in log.between(view.watermark, target):
        view.apply_delta(delta)
    view.watermark = target
    return view


def join_group_by(snapshot, view: JoinView, log: DeltaLog | None = None) -> dict:
    """Group every live vertex with its neighbors as of the snapshot.

    Returns vertex -> list of (neighbor id, neighbor value map, edge props);
    isolated live vertices map to an empty list.  The view is refreshed to
    the snapshot watermark first when it lags.
    """
    target = snapshot.watermark
    if view.watermark < target:
        if log is None:
            raise ViewBehindSnapshot(
                f"view at {view.watermark} behind snapshot {target}, no delta log"
            )
        try:
            refresh_join_view(view, target, log)
        except DeltaGap as exc:
            raise ViewBehindSnapshot(str(exc)) from exc
    gv = GraphView.from_snapshot(snapshot)
    groups: dict[str, list] = {}
    for vertex, entries in view.adjacency().items():
        groups[vertex] = [
            (nbr, dict(gv.nodes.get(nbr, {})), props)
            for _direction, nbr, _slot, props in entries
        ]
    return groups
