"""Multi-version key-value substrate for graph entities.

Every data item owns a totally ordered history of versions; a snapshot at
watermark ``v`` resolves each key to the value of its largest stored version
``<= v``.  Histories are append-only per key (strictly increasing versions),
which makes captured snapshots immutable for free.

The formula reads "max version <= v" over the versions *present for the key*:
that is the only reading under which the resolved value is defined, and the
one this module implements.  Deletions are modelled with tombstones; a key
resolving to a tombstone is reported as absent.
"""

from __future__ import annotations

import json
from bisect import bisect_right, insort
from dataclasses import dataclass

from .errors import EngineError

EXISTS = "__exists__"


class NonMonotonicVersion(EngineError):
    pass


class SnapshotNotAvailable(EngineError):
    pass


class _Tombstone:
    def __repr__(self) -> str:
        return "TOMBSTONE"


TOMBSTONE = _Tombstone()


@dataclass(frozen=True, order=True)
class Version:
    epoch: int
    seq: int

    def __str__(self) -> str:
        return f"{self.epoch}:{self.seq}"

    @classmethod
    def parse(cls, text: str) -> "Version":
        epoch, _, seq = text.partition(":")
        return cls(int(epoch), int(seq) if seq else 0)

    @classmethod
    def end_of_epoch(cls, epoch: int) -> "Version":
        return cls(epoch, 2**62)


@dataclass(frozen=True, order=True)
class DataKey:
    """Addressable cell: a node/edge entity plus one property name.

    ``entity`` is ``("n", node_id)`` or ``("e", src, dst, slot)``; ``prop`` is
    a field name or the structural EXISTS marker.  The anchor (node id, or a
    directed edge's source) is what placement hashes on, so a node and its
    out-edges co-locate.
    """

    entity: tuple
    prop: str

    @classmethod
    def node(cls, node_id: str, prop: str = EXISTS) -> "DataKey":
        return cls(("n", node_id), prop)

    @classmethod
    def edge(cls, src: str, dst: str, slot: str, prop: str = EXISTS) -> "DataKey":
        return cls(("e", src, dst, slot), prop)

    @property
    def anchor(self) -> str:
        return self.entity[1]

    def to_string(self) -> str:
        return "|".join((*self.entity, self.prop))

    @classmethod
    def from_string(cls, text: str) -> "DataKey":
        parts = text.split("|")
        return cls(tuple(parts[:-1]), parts[-1])


class VersionedStore:
    """Append-only multi-version store over DataKeys."""

    def __init__(self) -> None:
        self._cells: dict[DataKey, tuple[list[Version], list]] = {}
        self.compaction_floor: Version | None = None

    def apply(self, key: DataKey, version: Version, value) -> None:
        versions, values = self._cells.setdefault(key, ([], []))
        if versions and version <= versions[-1]:
            raise NonMonotonicVersion(
                f"{key.to_string()}: {version} <= last applied {versions[-1]}"
            )
        versions.append(version)
        values.append(value)

    def resolve(self, key: DataKey, v: Version):
        """Value of the largest stored version <= v, or None when absent."""
        cell = self._cells.get(key)
        if cell is None:
            return None
        versions, values = cell
        i = bisect_right(versions, v)
        if i == 0:
            return None
        value = values[i - 1]
        return None if value is TOMBSTONE else value

    def resolve_entry(self, key: DataKey, v: Version):
        """(version, value) of the resolution, value None for tombstones."""
        cell = self._cells.get(key)
        if cell is None:
            return None
        versions, values = cell
        i = bisect_right(versions, v)
        if i == 0:
            return None
        value = values[i - 1]
        return versions[i - 1], (None if value is TOMBSTONE else value)

    def snapshot(self, v: Version) -> "SnapshotHandle":
        return SnapshotHandle(self, v)

    def compact(self, keep_at_or_below: Version) -> int:
        """Drop history no resolve at or above the watermark can observe."""
        dropped = 0
        empty_keys = []
        for key, (versions, values) in self._cells.items():
            i = bisect_right(versions, keep_at_or_below)
            if i == 0:
                continue
            # the entry at i-1 is the resolution at the watermark; a tombstone
            # there resolves to absent, which losing the entry also yields
            cut = i if values[i - 1] is TOMBSTONE else i - 1
            if cut:
                del versions[:cut]
                del values[:cut]
                dropped += cut
            if not versions:
                empty_keys.append(key)
        for key in empty_keys:
            del self._cells[key]
        if self.compaction_floor is None or keep_at_or_below > self.compaction_floor:
            self.compaction_floor = keep_at_or_below
        return dropped

    def keys(self):
        return self._cells.keys()

    def max_version(self) -> Version | None:
        latest = None
        for versions, _ in self._cells.values():
            if versions and (latest is None or versions[-1] > latest):
                latest = versions[-1]
        return latest

    def key_count(self) -> int:
        return len(self._cells)

    def history(self, key: DataKey) -> list[tuple[Version, object]]:
        cell = self._cells.get(key)
        if cell is None:
            return []
        return list(zip(cell[0], cell[1]))

    def clone(self) -> "VersionedStore":
        other = VersionedStore()
        for key, (versions, values) in self._cells.items():
            other._cells[key] = (list(versions), list(values))
        other.compaction_floor = self.compaction_floor
        return other

    def merge_from(self, other: "VersionedStore") -> None:
        """Adopt any history entries present in ``other`` but not here."""
        for key, (versions, values) in other._cells.items():
            mine_v, mine_val = self._cells.setdefault(key, ([], []))
            for version, value in zip(versions, values):
                if version not in mine_v:
                    insort(mine_v, version)
                    mine_val.insert(mine_v.index(version), value)


class SnapshotHandle:
    """Repeatable view of the store at a fixed watermark.

    Later mutations carry strictly larger versions, so re-iterating a handle
    always yields the same contents.
    """

    def __init__(self, store, watermark: Version) -> None:
        self.store = store
        self.watermark = watermark

    def resolve(self, key: DataKey):
        return self.store.resolve(key, self.watermark)

    def items(self):
        for key in sorted(self.store.keys(), key=DataKey.to_string):
            value = self.store.resolve(key, self.watermark)
            if value is not None:
                yield key, value

    def export_lines(self) -> list[str]:
        return [
            json.dumps({"key": key.to_string(), "value": value}, sort_keys=True)
            for key, value in self.items()
        ]

    def as_dict(self) -> dict[str, object]:
        return {key.to_string(): value for key, value in self.items()}
