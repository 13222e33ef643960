"""Mutation stream parsing and validation.

The engine's primary input is a JSON-lines file.  Lines are either schema
declarations (``{"kind": "node"|"link", ...}``) or epoch-stamped mutations:

    {"epoch":0,"op":"add_node","id":"a1","schema":"author@1","props":{"name":"Ada"}}
    {"epoch":0,"op":"add_edge","src":"a1","dst":"p1","slot":"wrote","props":{}}
    {"epoch":0,"op":"del_edge","src":"a1","dst":"p1","slot":"wrote"}
    {"epoch":0,"op":"update_node","id":"a1","props":{"name":"Ada L."}}
    {"epoch":0,"op":"epoch_close"}

Records must be grouped by non-decreasing epoch and epochs advance by +1,
driven by the epoch_close marker; violations are parse-stage errors.
"""

from __future__ import annotations

import json

from . import schema as schema_mod
from .errors import EngineError
from .tracker import EpochRegression, UnknownSchema

MUTATION_OPS = (
    "add_node",
    "update_node",
    "del_node",
    "add_edge",
    "update_edge",
    "del_edge",
    "epoch_close",
)

_REQUIRED = {
    "add_node": ("id", "schema"),
    "update_node": ("id",),
    "del_node": ("id",),
    "add_edge": ("src", "dst", "slot"),
    "update_edge": ("src", "dst", "slot"),
    "del_edge": ("src", "dst", "slot"),
    "epoch_close": (),
}


class ParseError(EngineError):
    pass


def parse_stream(lines):
    """Yield parsed records, enforcing structure and epoch ordering."""
    epoch = 0
    closed_current = False
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"line {lineno}: invalid JSON ({exc})") from None
        if not isinstance(record, dict):
            raise ParseError(f"line {lineno}: expected an object")
        if "kind" in record:
            yield lineno, record
            continue
        op = record.get("op")
        if op not in MUTATION_OPS:
            raise ParseError(f"line {lineno}: unknown op {op!r}")
        for field in _REQUIRED[op]:
            if field not in record:
                raise ParseError(f"line {lineno}: op {op!r} requires {field!r}")
        if "epoch" not in record or not isinstance(record["epoch"], int):
            raise ParseError(f"line {lineno}: missing integer epoch")
        rec_epoch = record["epoch"]
        if closed_current:
            epoch += 1
            closed_current = False
        if rec_epoch != epoch:
            raise EpochRegression(
                f"line {lineno}: record for epoch {rec_epoch}, current epoch is {epoch}"
            )
        if op == "epoch_close":
            closed_current = True
        yield lineno, record


def validate_stream(lines) -> dict:
    """Full validation pass: structure, epoch order, schema conformance.

    Returns summary counts; raises the first error encountered.
    """
    registry = schema_mod.SchemaRegistry()
    node_schemas: dict[str, schema_mod.SchemaVersionTag] = {}
    counts = {"declarations": 0, "mutations": 0, "epochs": 0}
    for lineno, record in parse_stream(lines):
        if "kind" in record:
            decl = schema_mod.parse_declaration(record)
            if isinstance(decl, schema_mod.NodeSchema):
                registry.declare_node_schema(decl)
            else:
                registry.declare_link_schema(decl)
            counts["declarations"] += 1
            continue
        counts["mutations"] += 1
        op = record["op"]
        if op == "epoch_close":
            counts["epochs"] += 1
        elif op == "add_node":
            tag = schema_mod.SchemaVersionTag.parse(record["schema"])
            if not registry.is_declared(tag):
                raise UnknownSchema(f"line {lineno}: schema {tag} not declared")
            violations = registry.validate_payload(tag, record.get("props", {}))
            if violations:
                first = violations[0]
                raise UnknownSchema(
                    f"line {lineno}: payload does not match {tag}: "
                    f"{first.kind} field {first.field!r}"
                )
            node_schemas[record["id"]] = tag
        elif op == "update_node":
            tag = node_schemas.get(record["id"])
            if tag is not None:
                violations = registry.validate_partial(tag, record.get("props", {}))
                if violations:
                    first = violations[0]
                    raise UnknownSchema(
                        f"line {lineno}: update does not match {tag}: "
                        f"{first.kind} field {first.field!r}"
                    )
    return counts


def read_lines(path):
    with open(path, "r", encoding="utf-8") as handle:
        return handle.readlines()
