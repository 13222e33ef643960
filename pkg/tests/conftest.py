from __future__ import annotations

import json
import random

import pytest

from protoflow.models.graphdata import GraphView
from protoflow.store import Version


def make_random_graph(n: int, avg_deg: int, seed: int, max_weight: float = 10.0) -> GraphView:
    rng = random.Random(seed)
    nodes = {f"v{i:03d}": {} for i in range(n)}
    ids = sorted(nodes)
    edges = {}
    for src in ids:
        for _ in range(avg_deg):
            dst = rng.choice(ids)
            if dst != src:
                edges[(src, dst, "e")] = {"weight": round(rng.uniform(0.1, max_weight), 3)}
    return GraphView(nodes=nodes, edges=edges)


def mutation_line(epoch: int, op: str, **fields) -> str:
    record = {"epoch": epoch, "op": op}
    record.update(fields)
    return json.dumps(record)


def simple_schema_lines() -> list[str]:
    return [
        json.dumps({"kind": "node", "name": "item", "version": 1,
                    "fields": [["label", "string"], ["rank", "integer"]]}),
    ]


@pytest.fixture
def end_of(request):
    return lambda epoch: Version.end_of_epoch(epoch)
