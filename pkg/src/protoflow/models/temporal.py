"""Snapshot series over epochs: per-epoch digests and degree deltas.

Answers "who gains the most edges this epoch" style queries by running an
algorithm on each strided epoch-end snapshot and digesting the change
against the previous sample.
"""

from __future__ import annotations

import json

from ..store import Version
from .graphdata import GraphView

TEMPORAL_ALGORITHMS = ("degree",)


def degree_digest(epoch: int, gv: GraphView, previous: dict) -> tuple[dict, dict]:
    degrees = gv.degrees()
    gains = {vid: deg - previous.get(vid, 0) for vid, deg in degrees.items()}
    top_gainer = None
    top_gain = 0
    for vid in sorted(gains):
        if gains[vid] > top_gain:
            top_gainer, top_gain = vid, gains[vid]
    top = sorted(degrees.items(), key=lambda item: (-item[1], item[0]))[:5]
    digest = {
        "epoch": epoch,
        "vertices": len(gv.nodes),
        "edges": len(gv.edges),
        "top_gainer": top_gainer,
        "gain": top_gain,
        "top_degrees": [[vid, deg] for vid, deg in top],
    }
    return digest, degrees


def temporal_series(snapshot_provider, algo: str, from_version: Version, to_version: Version, stride: int = 1):
    """Digest list for each strided epoch in [from.epoch, to.epoch].

    ``snapshot_provider`` maps a Version to a snapshot handle and raises
    SnapshotNotAvailable when the epoch never sealed.
    """
    if algo not in TEMPORAL_ALGORITHMS:
        raise ValueError(f"unknown temporal algorithm {algo!r}")
    if from_version > to_version:
        raise ValueError("from version must not exceed to version")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    series = []
    previous: dict = {}
    for epoch in range(from_version.epoch, to_version.epoch + 1, stride):
        watermark = Version.end_of_epoch(epoch)
        snapshot = snapshot_provider(watermark)
        gv = GraphView.from_snapshot(snapshot)
        digest, previous = degree_digest(epoch, gv, previous)
        series.append((watermark, digest))
    return series


def series_lines(series) -> list[str]:
    return [
        json.dumps({"version": str(version), "digest": digest}, sort_keys=True)
        for version, digest in series
    ]
