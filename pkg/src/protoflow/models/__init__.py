from .bsp import EmptyGraph, pagerank, wcc
from .graphdata import GraphView, as_graph_view
from .joinview import (
    DeltaGap,
    DeltaLog,
    JoinView,
    StructuralDelta,
    ViewBehindSnapshot,
    join_group_by,
    refresh_join_view,
)
from .mapreduce import MR_OPERATIONS, mapreduce, wordcount
from .temporal import temporal_series
from .traversal import NegativeWeight, UnknownSource, sssp

__all__ = [
    "DeltaGap",
    "DeltaLog",
    "EmptyGraph",
    "GraphView",
    "JoinView",
    "MR_OPERATIONS",
    "NegativeWeight",
    "StructuralDelta",
    "UnknownSource",
    "ViewBehindSnapshot",
    "as_graph_view",
    "join_group_by",
    "mapreduce",
    "pagerank",
    "refresh_join_view",
    "sssp",
    "temporal_series",
    "wcc",
    "wordcount",
]
