"""Synthetic mutation-stream generators.

Three families: a citation graph that evolves its schema mid-stream (a new
school node type appears and authors gain a version with a belongs_to link),
preferential attachment, and random churn with node/edge deletion.  Every
generator is a pure function of its parameters and seed, emits epoch-ordered
JSON lines with schema declarations inline, and returns a manifest of what
it planted so tests and experiments can check detection.
"""

from __future__ import annotations

import json
import random

KINDS = ("citation-growth", "preferential-attachment", "random-churn")


def _line(record: dict) -> str:
    return json.dumps(record, sort_keys=True)


def citation_growth(
    epochs: int = 3,
    seed: int = 0,
    authors_per_epoch: int = 3,
    papers_per_epoch: int = 4,
    planted_epoch: int | None = None,
    planted_gain: int = 6,
) -> tuple[list[str], dict]:
    """Author/paper/school graph; one author is planted as top edge-gainer."""
    rng = random.Random(seed)
    if planted_epoch is None:
        planted_epoch = max(0, epochs - 1) if epochs else None
    school_epoch = min(2, max(0, epochs - 1)) if epochs else None
    lines = [
        _line({"kind": "node", "name": "author", "version": 1,
               "fields": [["name", "string"]]}),
        _line({"kind": "node", "name": "paper", "version": 1,
               "fields": [["title", "string"]]}),
    ]
    authors: list[str] = []
    papers: list[str] = []
    schools: list[str] = []
    edge_set: set[tuple[str, str, str]] = set()
    gains: dict[int, dict[str, int]] = {}
    planted_vertex = None

    def add_edge(epoch: int, src: str, dst: str, slot: str) -> bool:
        if (src, dst, slot) in edge_set:
            return False
        edge_set.add((src, dst, slot))
        epoch_gains = gains[epoch]
        epoch_gains[src] = epoch_gains.get(src, 0) + 1
        epoch_gains[dst] = epoch_gains.get(dst, 0) + 1
        lines.append(_line({"epoch": epoch, "op": "add_edge", "src": src, "dst": dst,
                            "slot": slot, "props": {}}))
        return True

    for epoch in range(epochs):
        gains[epoch] = {}
        if epoch == school_epoch:
            lines.append(_line({"kind": "node", "name": "school", "version": 1,
                                "fields": [["name", "string"]]}))
            lines.append(_line({"kind": "node", "name": "author", "version": 2,
                                "parent": 1, "fields": [],
                                "links": [{"slot": "belongs_to", "target": "school@1"}]}))
            for i in range(2):
                school = f"s{len(schools)}"
                schools.append(school)
                lines.append(_line({"epoch": epoch, "op": "add_node", "id": school,
                                    "schema": "school@1",
                                    "props": {"name": f"School {i}"}}))
        evolved = school_epoch is not None and epoch >= school_epoch
        author_schema = "author@2" if evolved else "author@1"
        new_authors = []
        for _ in range(authors_per_epoch):
            author = f"a{len(authors)}"
            authors.append(author)
            new_authors.append(author)
            lines.append(_line({"epoch": epoch, "op": "add_node", "id": author,
                                "schema": author_schema,
                                "props": {"name": f"Author {author}"}}))
            if evolved and schools:
                add_edge(epoch, author, rng.choice(schools), "belongs_to")
        for _ in range(papers_per_epoch):
            paper = f"p{len(papers)}"
            papers.append(paper)
            lines.append(_line({"epoch": epoch, "op": "add_node", "id": paper,
                                "schema": "paper@1",
                                "props": {"title": f"Paper {paper}"}}))
            for writer in rng.sample(authors, min(2, len(authors))):
                add_edge(epoch, writer, paper, "wrote")
            if len(papers) > 1:
                add_edge(epoch, paper, rng.choice(papers[:-1]), "cites")
        if epoch == planted_epoch and new_authors and papers:
            planted_vertex = rng.choice(new_authors)
            epoch_gains = gains[epoch]
            baseline = max(
                (g for v, g in epoch_gains.items() if v != planted_vertex), default=0
            )
            needed = baseline + planted_gain - epoch_gains.get(planted_vertex, 0)
            added = 0
            for target in papers:
                if added >= needed:
                    break
                if add_edge(epoch, planted_vertex, target, "wrote"):
                    added += 1
            if added < needed:
                raise ValueError(
                    "not enough papers to plant the top gainer; "
                    "raise papers_per_epoch or lower planted_gain"
                )
        lines.append(_line({"epoch": epoch, "op": "epoch_close"}))

    manifest = {
        "kind": "citation-growth",
        "epochs": epochs,
        "seed": seed,
        "planted_vertex": planted_vertex,
        "planted_epoch": planted_epoch if planted_vertex else None,
        "authors": len(authors),
        "papers": len(papers),
        "schools": len(schools),
    }
    if planted_vertex is not None:
        epoch_gains = gains[planted_epoch]
        top = max(sorted(epoch_gains), key=lambda v: epoch_gains[v])
        assert top == planted_vertex, "planted gainer must dominate its epoch"
    return lines, manifest


def preferential_attachment(
    epochs: int = 3,
    seed: int = 0,
    nodes_per_epoch: int = 10,
    edges_per_node: int = 2,
) -> tuple[list[str], dict]:
    rng = random.Random(seed)
    lines = [
        _line({"kind": "node", "name": "vertex", "version": 1,
               "fields": [["name", "string"]]}),
    ]
    endpoints: list[str] = []  # one entry per edge endpoint: degree-biased urn
    nodes: list[str] = []
    for epoch in range(epochs):
        for _ in range(nodes_per_epoch):
            node = f"v{len(nodes)}"
            nodes.append(node)
            lines.append(_line({"epoch": epoch, "op": "add_node", "id": node,
                                "schema": "vertex@1", "props": {"name": node}}))
            seen = set()
            for _ in range(min(edges_per_node, max(0, len(nodes) - 1))):
                pool = endpoints or [n for n in nodes if n != node]
                target = rng.choice(pool)
                if target == node or (node, target) in seen:
                    continue
                seen.add((node, target))
                weight = round(rng.uniform(0.5, 4.0), 3)
                lines.append(_line({"epoch": epoch, "op": "add_edge", "src": node,
                                    "dst": target, "slot": "link",
                                    "props": {"weight": weight}}))
                endpoints.extend((node, target))
        lines.append(_line({"epoch": epoch, "op": "epoch_close"}))
    manifest = {"kind": "preferential-attachment", "epochs": epochs, "seed": seed,
                "nodes": len(nodes)}
    return lines, manifest


def random_churn(
    epochs: int = 4,
    seed: int = 0,
    ops_per_epoch: int = 25,
) -> tuple[list[str], dict]:
    rng = random.Random(seed)
    lines = [
        _line({"kind": "node", "name": "item", "version": 1,
               "fields": [["label", "string"], ["rank", "integer"]]}),
    ]
    live_nodes: list[str] = []
    live_edges: list[tuple[str, str, str]] = []
    created = 0
    for epoch in range(epochs):
        for _ in range(ops_per_epoch):
            roll = rng.random()
            if roll < 0.35 or len(live_nodes) < 2:
                node = f"n{created}"
                created += 1
                live_nodes.append(node)
                lines.append(_line({"epoch": epoch, "op": "add_node", "id": node,
                                    "schema": "item@1",
                                    "props": {"label": f"L{created}", "rank": created}}))
            elif roll < 0.60:
                src, dst = rng.sample(live_nodes, 2)
                edge = (src, dst, "rel")
                if edge in live_edges:
                    continue
                live_edges.append(edge)
                lines.append(_line({"epoch": epoch, "op": "add_edge", "src": src,
                                    "dst": dst, "slot": "rel",
                                    "props": {"weight": round(rng.uniform(0.1, 9.0), 2)}}))
            elif roll < 0.75 and live_edges:
                src, dst, slot = live_edges.pop(rng.randrange(len(live_edges)))
                lines.append(_line({"epoch": epoch, "op": "del_edge", "src": src,
                                    "dst": dst, "slot": slot}))
            elif roll < 0.90:
                node = rng.choice(live_nodes)
                lines.append(_line({"epoch": epoch, "op": "update_node", "id": node,
                                    "props": {"rank": rng.randrange(1000)}}))
            elif len(live_nodes) > 3:
                node = live_nodes.pop(rng.randrange(len(live_nodes)))
                live_edges = [e for e in live_edges if node not in (e[0], e[1])]
                lines.append(_line({"epoch": epoch, "op": "del_node", "id": node}))
        lines.append(_line({"epoch": epoch, "op": "epoch_close"}))
    manifest = {"kind": "random-churn", "epochs": epochs, "seed": seed,
                "nodes_created": created}
    return lines, manifest


def gen_stream(kind: str, seed: int = 0, **params) -> tuple[list[str], dict]:
    if kind == "citation-growth":
        return citation_growth(seed=seed, **params)
    if kind == "preferential-attachment":
        return preferential_attachment(seed=seed, **params)
    if kind == "random-churn":
        return random_churn(seed=seed, **params)
    raise ValueError(f"unknown stream kind {kind!r}; choose from {KINDS}")
