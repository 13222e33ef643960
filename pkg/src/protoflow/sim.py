"""Deterministic multi-machine simulation substrate.

Machines exchange messages over FIFO links with configurable per-hop
latency inside a tick-driven event loop; every run of (config, stream, job)
replays to the identical trace.  Trace monitors re-derive the core safety
invariants from the recorded events after every run: dispatch safety (no
epoch-e application before the node sealed e-1), single-primary ownership
across migrations, and per-machine monotone reads.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field

from .errors import EngineError
from .util import canonical_json


class MonitorViolation(EngineError):
    pass


@dataclass
class SimConfig:
    machines: int = 1
    link_latency: int = 1
    seed: int = 0
    step_budget: int = 1_000_000
    partitions: int = 64
    alpha: float = 1.0
    beta: float = 1.0
    swap_ratio: float = 2.0
    window: int = 256
    swap_windows: int = 2
    gc_windows: int = 3
    max_moves: int | None = None
    ingest_rate: int = 4  # stream records read per tick
    link_latency_overrides: dict = field(default_factory=dict)  # (src, dst) -> ticks

    def __post_init__(self) -> None:
        if self.machines < 1:
            raise ValueError("machines must be >= 1")
        for name in ("link_latency", "step_budget", "partitions", "window",
                     "swap_windows", "gc_windows", "ingest_rate"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("alpha", "beta", "swap_ratio"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def latency(self, src, dst) -> int:
        return self.link_latency_overrides.get((src, dst), self.link_latency)


class Network:
    """FIFO links: constant per-link latency plus send-order tie-breaks."""

    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.heap: list = []
        self.seq = 0

    def send(self, tick: int, src, dst, message: dict) -> None:
        arrive = tick + self.config.latency(src, dst)
        heapq.heappush(self.heap, (arrive, self.seq, dst, message))
        self.seq += 1

    def deliver_due(self, tick: int):
        due = []
        while self.heap and self.heap[0][0] <= tick:
            _arrive, _seq, dst, message = heapq.heappop(self.heap)
            due.append((dst, message))
        return due

    def __len__(self) -> int:
        return len(self.heap)


class SimTrace:
    def __init__(self) -> None:
        self.events: list[dict] = []

    def record(self, tick: int, kind: str, **fields) -> None:
        event = {"tick": tick, "kind": kind}
        event.update(fields)
        self.events.append(event)

    def lines(self) -> list[str]:
        return [canonical_json(e) for e in self.events]

    def hash(self) -> str:
        digest = hashlib.sha256()
        for line in self.lines():
            digest.update(line.encode("utf-8"))
            digest.update(b"\n")
        return digest.hexdigest()

    def of_kind(self, *kinds) -> list[dict]:
        return [e for e in self.events if e["kind"] in kinds]


def seeded_order(items, rng: random.Random) -> list:
    order = sorted(items)
    rng.shuffle(order)
    return order


# -- trace monitors -----------------------------------------------------------


def check_dispatch_safety(trace: SimTrace) -> dict:
    """No epoch-e mutation applies at a node that has not sealed epochs < e.

    Also reports whether cross-epoch pipelining occurred: two mutations of
    different epochs simultaneously in flight (dispatched, not yet applied).
    """
    sealed: dict = {}
    in_flight: dict[str, int] = {}  # version string -> epoch
    pipelined = False
    for event in trace.events:
        kind = event["kind"]
        if kind == "seal_local":
            sealed[event["node"]] = event["epoch"]
        elif kind == "dispatch":
            in_flight[event["version"]] = event["epoch"]
            if len(set(in_flight.values())) > 1:
                pipelined = True
        elif kind == "apply":
            node, epoch = event["node"], event["epoch"]
            have = sealed.get(node)
            if epoch > 0 and (have is None or have < epoch - 1):
                raise MonitorViolation(
                    f"tick {event['tick']}: node {node} applied epoch {epoch} "
                    f"mutation with sealed={have}"
                )
            in_flight.pop(event["version"], None)
    return {"pipelined": pipelined}


def check_single_primary(trace: SimTrace, partitions: int, machines: int) -> None:
    """Migrations must form a consistent single-owner chain per partition."""
    owners = {pid: pid % machines for pid in range(partitions)}
    for event in trace.events:
        if event["kind"] in ("swap", "rebalance_move"):
            pid = event["partition"]
            if owners[pid] != event["from"]:
                raise MonitorViolation(
                    f"tick {event['tick']}: partition {pid} migrated from "
                    f"{event['from']} but owner was {owners[pid]}"
                )
            owners[pid] = event["to"]


def check_monotone_reads(trace: SimTrace) -> None:
    """A machine never resolves an older version of a key than before."""
    last_seen: dict = {}
    for event in trace.events:
        if event["kind"] != "read" or event.get("version") is None:
            continue
        slot = (event["machine"], event["key"])
        version = tuple(int(p) for p in event["version"].split(":"))
        previous = last_seen.get(slot)
        if previous is not None and version < previous:
            raise MonitorViolation(
                f"tick {event['tick']}: machine {event['machine']} read "
                f"{event['key']} at {version} after {previous}"
            )
        last_seen[slot] = version
