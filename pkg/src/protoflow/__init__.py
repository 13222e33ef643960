"""protoflow: a deterministic simulated engine for dynamic graph computing.

Versioned schemas and data, epoch-sealed snapshots with asynchronous
dispatch, replica coherence with cost-driven placement, lineage-recoverable
views, and a protocol dataflow runtime hosting BSP, asynchronous traversal,
and MapReduce models, all inside one seeded single-process simulation.
"""

from .engine import DictSnapshot, Engine, SimResult, simulate
from .errors import EngineError
from .schema import SchemaRegistry, SchemaVersionTag
from .sim import SimConfig, SimTrace
from .store import EXISTS, TOMBSTONE, DataKey, Version, VersionedStore
from .tracker import ConsensusLog, IngestNode

__all__ = [
    "ConsensusLog",
    "DataKey",
    "DictSnapshot",
    "Engine",
    "EngineError",
    "EXISTS",
    "IngestNode",
    "SchemaRegistry",
    "SchemaVersionTag",
    "SimConfig",
    "SimResult",
    "SimTrace",
    "TOMBSTONE",
    "Version",
    "VersionedStore",
    "simulate",
]

__version__ = "0.1.0"
