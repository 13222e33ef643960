"""Partition placement, replica coherence, migration, and replica GC.

Partitions are placed by stable hash of an entity's anchor; each partition
has exactly one PRIMARY machine and any number of SECONDARY replicas built
on demand by reads.  Writes execute at the primary and propagate to the
secondaries (single-writer update propagation; the append-only store makes
update ordering trivial).  An invalidation-style protocol is left as a
config stub (``coherence_mode``), only ``propagate`` is implemented.

Access statistics are collected per window of read events.  At window
boundaries the manager can swap a partition's primary towards the machine
generating most of its reads, greedily rebalance against a two-factor cost
(load imbalance plus remote-access ratio), and collect idle secondaries.
Write applications are routed by the ingest path and are deliberately not
counted as accesses: statistics measure read locality.
"""

from __future__ import annotations

from collections import Counter, deque
from dataclasses import dataclass

from .errors import EngineError
from .store import DataKey, Version, VersionedStore
from .util import stable_hash

PRIMARY = "PRIMARY"
SECONDARY = "SECONDARY"
VALID = "VALID"
INVALID = "INVALID"
SWAPPED = "SWAPPED"
HOLD = "HOLD"


class NotPrimary(EngineError):
    pass


@dataclass
class ReplicaState:
    partition: int
    machine: int
    role: str
    status: str
    applied_up_to: Version | None


@dataclass(frozen=True)
class Propagation:
    machine: int
    partition: int
    key: DataKey
    version: Version
    value: object


@dataclass(frozen=True)
class Migration:
    partition: int
    source: int
    target: int
    reason: str  # swap | rebalance


class ReplicaManager:
    def __init__(
        self,
        machines: int,
        partitions: int = 64,
        alpha: float = 1.0,
        beta: float = 1.0,
        swap_ratio: float = 2.0,
        swap_windows: int = 2,
        gc_windows: int = 3,
        max_moves: int | None = None,
        movable=None,
        coherence_mode: str = "propagate",
    ) -> None:
        self.machines = machines
        self.partitions = partitions
        self.alpha = alpha
        self.beta = beta
        self.swap_ratio = swap_ratio
        self.swap_windows = swap_windows
        self.gc_windows = gc_windows
        self.max_moves = max_moves if max_moves is not None else max(1, partitions // 4)
        self.movable = movable or (lambda pid, machine: True)
        self.coherence_mode = coherence_mode

        self.owners = [p % machines for p in range(partitions)]
        self.map_version = 0
        self.replicas: dict[tuple[int, int], ReplicaState] = {}
        self.stores: dict[tuple[int, int], VersionedStore] = {}
        self.primary_last: dict[int, Version | None] = {}
        for pid in range(partitions):
            owner = self.owners[pid]
            self.replicas[(pid, owner)] = ReplicaState(pid, owner, PRIMARY, VALID, None)
            self.stores[(pid, owner)] = VersionedStore()
            self.primary_last[pid] = None

        self.accesses: Counter = Counter()  # (pid, machine) -> reads this window
        self.remote_fetches: Counter = Counter()
        self.events_in_window = 0
        self.history: deque = deque(maxlen=max(swap_windows, gc_windows) + 2)
        self.propagations: deque[Propagation] = deque()
        self.window_summaries: list[dict] = []
        self.totals = Counter()

    # -- placement ------------------------------------------------------

    def partition_of(self, anchor: str) -> int:
        return stable_hash(anchor) % self.partitions

    def place(self, key: DataKey) -> int:
        return self.owners[self.partition_of(key.anchor)]

    def place_anchor(self, anchor: str) -> int:
        return self.owners[self.partition_of(anchor)]

    def primary_store(self, pid: int) -> VersionedStore:
        return self.stores[(pid, self.owners[pid])]

    # -- coherence --------------------------------------------------------

    def coherent_write(self, machine: int, key: DataKey, version: Version, value) -> None:
        pid = self.partition_of(key.anchor)
        owner = self.owners[pid]
        if machine != owner:
            raise NotPrimary(
                f"write for partition {pid} sent to {machine}, primary is {owner}"
            )
        self.stores[(pid, owner)].apply(key, version, value)
        self.primary_last[pid] = version
        for (p, m), rep in self.replicas.items():
            if p == pid and rep.role == SECONDARY:
                rep.status = INVALID
                self.propagations.append(Propagation(m, pid, key, version, value))

    def apply_propagation(self, prop: Propagation) -> None:
        rep = self.replicas.get((prop.partition, prop.machine))
        if rep is None or rep.role != SECONDARY:
            return  # replica collected or promoted since the write
        if rep.applied_up_to is not None and prop.version <= rep.applied_up_to:
            return  # a fresher clone already includes this write
        self.stores[(prop.partition, prop.machine)].apply(prop.key, prop.version, prop.value)
        rep.applied_up_to = prop.version
        rep.status = VALID if prop.version == self.primary_last[prop.partition] else INVALID

    def drain_propagations(self) -> int:
        count = 0
        while self.propagations:
            self.apply_propagation(self.propagations.popleft())
            count += 1
        return count

    def coherent_read(self, machine: int, key: DataKey, v: Version):
        pid = self.partition_of(key.anchor)
        owner = self.owners[pid]
        self.accesses[(pid, machine)] += 1
        self.events_in_window += 1
        if machine == owner:
            return self.stores[(pid, owner)].resolve(key, v)
        rep = self.replicas.get((pid, machine))
        if (
            rep is not None
            and rep.status == VALID
            and rep.applied_up_to is not None
            and rep.applied_up_to >= v
        ):
            return self.stores[(pid, machine)].resolve(key, v)
        # remote fetch; install a secondary replica of the partition locally
        self.remote_fetches[(pid, machine)] += 1
        self.totals["remote_fetches"] += 1
        value = self.stores[(pid, owner)].resolve(key, v)
        self.stores[(pid, machine)] = self.stores[(pid, owner)].clone()
        self.replicas[(pid, machine)] = ReplicaState(
            pid, machine, SECONDARY, VALID, self.primary_last[pid]
        )
        return value

    def read_version_cap(self, anchor: str, v: Version) -> Version:
        """Clamp a read version to the partition's last written version.

        Resolution is unchanged (no versions exist above the last write), and
        the clamped version lets caught-up replicas serve reads issued at
        watermarks far beyond the partition's own history.
        """
        last = self.primary_last[self.partition_of(anchor)]
        if last is None or last >= v:
            return v
        return last

    # -- migration ---------------------------------------------------------

    def _migrate_primary(self, pid: int, target: int, reason: str) -> Migration:
        source = self.owners[pid]
        fresh = self.stores[(pid, source)].clone()
        self.stores[(pid, target)] = fresh
        # install the new primary before retiring the old; one map bump
        self.replicas[(pid, target)] = ReplicaState(
            pid, target, PRIMARY, VALID, self.primary_last[pid]
        )
        old = self.replicas[(pid, source)]
        old.role = SECONDARY
        old.status = VALID
        old.applied_up_to = self.primary_last[pid]
        self.owners[pid] = target
        self.map_version += 1
        return Migration(pid, source, target, reason)

    def maybe_swap(self, pid: int):
        """Swap the primary to a machine that dominated recent access windows."""
        if len(self.history) < self.swap_windows:
            return HOLD
        windows = list(self.history)[-self.swap_windows :]
        owner = self.owners[pid]
        candidates: Counter = Counter()
        for machine in range(self.machines):
            if machine == owner:
                continue
            qualifies = True
            total = 0
            for window in windows:
                own = window["accesses"].get((pid, owner), 0)
                theirs = window["accesses"].get((pid, machine), 0)
                if theirs == 0 or theirs < self.swap_ratio * own or theirs <= own:
                    qualifies = False
                    break
                total += theirs
            if qualifies:
                candidates[machine] = total
        if not candidates:
            return HOLD
        best = min(candidates, key=lambda m: (-candidates[m], m))
        if not self.movable(pid, best):
            return HOLD
        migration = self._migrate_primary(pid, best, "swap")
        self.totals["swaps"] += 1
        return (SWAPPED, migration)

    # -- cost model and rebalance -------------------------------------------

    def loads(self) -> list[int]:
        loads = [0] * self.machines
        for pid in range(self.partitions):
            loads[self.owners[pid]] += self.stores[(pid, self.owners[pid])].key_count()
        return loads

    def _window_accesses(self) -> Counter:
        if self.history:
            return self.history[-1]["accesses"]
        return Counter()

    @staticmethod
    def _imbalance(loads) -> float:
        mean = sum(loads) / len(loads)
        if mean == 0:
            return 0.0
        return (max(loads) - min(loads)) / mean

    def cost(self, accesses: Counter | None = None, owners=None) -> float:
        accesses = self._window_accesses() if accesses is None else accesses
        owners = self.owners if owners is None else owners
        loads = [0] * self.machines
        for pid in range(self.partitions):
            loads[owners[pid]] += self.stores[(pid, self.owners[pid])].key_count()
        total = sum(accesses.values())
        remote = sum(
            count for (pid, machine), count in accesses.items() if machine != owners[pid]
        )
        ratio = remote / total if total else 0.0
        return self.alpha * self._imbalance(loads) + self.beta * ratio

    def rebalance(self) -> list[Migration]:
        """Greedy descent on the two-factor cost; stops at a local minimum."""
        accesses = self._window_accesses()
        migrations: list[Migration] = []
        part_keys = [
            self.stores[(pid, self.owners[pid])].key_count()
            for pid in range(self.partitions)
        ]
        acc_by_pid: dict[int, dict[int, int]] = {}
        for (pid, machine), count in accesses.items():
            acc_by_pid.setdefault(pid, {})[machine] = count
        total_acc = sum(accesses.values())

        loads = [0] * self.machines
        for pid in range(self.partitions):
            loads[self.owners[pid]] += part_keys[pid]
        remote = sum(
            count
            for (pid, machine), count in accesses.items()
            if machine != self.owners[pid]
        )

        def cost_of(loads_, remote_) -> float:
            ratio = remote_ / total_acc if total_acc else 0.0
            return self.alpha * self._imbalance(loads_) + self.beta * ratio

        current = cost_of(loads, remote)
        while len(migrations) < self.max_moves:
            best = None
            for pid in range(self.partitions):
                owner = self.owners[pid]
                per_machine = acc_by_pid.get(pid, {})
                for machine in range(self.machines):
                    if machine == owner or not self.movable(pid, machine):
                        continue
                    loads[owner] -= part_keys[pid]
                    loads[machine] += part_keys[pid]
                    trial_remote = (
                        remote + per_machine.get(owner, 0) - per_machine.get(machine, 0)
                    )
                    trial = cost_of(loads, trial_remote)
                    loads[owner] += part_keys[pid]
                    loads[machine] -= part_keys[pid]
                    if trial < current - 1e-12 and (best is None or trial < best[0]):
                        best = (trial, pid, machine, trial_remote)
            if best is None:
                break
            current, pid, machine, remote = best
            loads[self.owners[pid]] -= part_keys[pid]
            loads[machine] += part_keys[pid]
            migrations.append(self._migrate_primary(pid, machine, "rebalance"))
            self.totals["rebalance_moves"] += 1
        return migrations

    # -- replica collection ---------------------------------------------------

    def gc_replicas(self) -> int:
        """Drop secondaries idle for the last gc_windows completed windows."""
        if len(self.history) < self.gc_windows:
            return 0
        windows = list(self.history)[-self.gc_windows :]
        collected = []
        for (pid, machine), rep in self.replicas.items():
            if rep.role != SECONDARY:
                continue
            if self.accesses.get((pid, machine), 0) > 0:
                continue  # served in the current window
            if any(w["accesses"].get((pid, machine), 0) > 0 for w in windows):
                continue
            collected.append((pid, machine))
        for key in collected:
            del self.replicas[key]
            del self.stores[key]
        self.totals["gc_collected"] += len(collected)
        return len(collected)

    # -- windows and metrics -----------------------------------------------

    def end_window(self) -> dict:
        loads = self.loads()
        total = sum(self.accesses.values())
        remote = sum(self.remote_fetches.values())
        summary = {
            "window": len(self.window_summaries),
            "events": self.events_in_window,
            "cost": self.cost(self.accesses),
            "loads": loads,
            "remote_ratio": (remote / total) if total else 0.0,
            "map_version": self.map_version,
        }
        self.history.append(
            {"accesses": Counter(self.accesses), "remote": Counter(self.remote_fetches)}
        )
        self.window_summaries.append(summary)
        self.accesses = Counter()
        self.remote_fetches = Counter()
        self.events_in_window = 0
        return summary

    def run_window_ops(self) -> dict:
        """Roll the window, then swap, rebalance, and collect."""
        summary = self.end_window()
        swaps = []
        for pid in range(self.partitions):
            outcome = self.maybe_swap(pid)
            if outcome != HOLD:
                swaps.append(outcome[1])
        migrations = self.rebalance()
        collected = self.gc_replicas()
        summary["swaps"] = [
            {"partition": m.partition, "from": m.source, "to": m.target} for m in swaps
        ]
        summary["rebalance_moves"] = [
            {"partition": m.partition, "from": m.source, "to": m.target}
            for m in migrations
        ]
        summary["gc_collected"] = collected
        return summary

    def metrics(self) -> dict:
        return {
            "windows": self.window_summaries,
            "totals": dict(self.totals),
            "map_version": self.map_version,
            "loads": self.loads(),
            "replica_count": len(self.replicas),
        }
