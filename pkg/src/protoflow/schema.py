"""Registry of versioned, inheritable node and link schemas.

A schema name carries an ordinal version (``author@1``, ``author@2``, ...);
new versions inherit from an older version of the same name, template-style.
The registry is append-only: once declared, a schema never changes, so any
resolution result is stable for the lifetime of the registry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import EngineError

SCALAR_KINDS = ("string", "integer", "float", "boolean")


class DuplicateTag(EngineError):
    pass


class UnknownParent(EngineError):
    pass


class NonContiguousVersion(EngineError):
    pass


class CyclicInheritance(EngineError):
    pass


class DuplicateField(EngineError):
    pass


class UnknownTag(EngineError):
    pass


@dataclass(frozen=True, order=True)
class SchemaVersionTag:
    name: str
    version: int

    def __str__(self) -> str:
        return f"{self.name}@{self.version}"

    @classmethod
    def parse(cls, text: str) -> "SchemaVersionTag":
        name, _, version = text.rpartition("@")
        if not name or not version.isdigit() or int(version) < 1:
            raise UnknownTag(f"malformed schema tag {text!r}")
        return cls(name, int(version))


@dataclass(frozen=True)
class NodeSchema:
    tag: SchemaVersionTag
    fields: tuple[tuple[str, str], ...] = ()
    parent: SchemaVersionTag | None = None
    link_slots: tuple[tuple[str, SchemaVersionTag], ...] = ()


@dataclass(frozen=True)
class LinkSchema:
    tag: SchemaVersionTag
    source: SchemaVersionTag
    target: SchemaVersionTag
    fields: tuple[tuple[str, str], ...] = ()
    parent: SchemaVersionTag | None = None


@dataclass(frozen=True)
class EffectiveSchema:
    """Flattened view of a schema: inherited fields first, own fields last."""

    tag: SchemaVersionTag
    fields: tuple[tuple[str, str], ...]
    link_slots: tuple[tuple[str, SchemaVersionTag], ...]

    def field_kinds(self) -> dict[str, str]:
        return dict(self.fields)


@dataclass
class Violation:
    kind: str  # missing | extra | kind_mismatch
    field: str
    detail: str = ""


def _kind_matches(kind: str, value) -> bool:
    if kind == "string":
        return isinstance(value, str)
    if kind == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "float":
        # integer payloads are acceptable for float fields (JSON idiom)
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "boolean":
        return isinstance(value, bool)
    return False


@dataclass
class SchemaRegistry:
    _nodes: dict[SchemaVersionTag, NodeSchema] = field(default_factory=dict)
    _links: dict[SchemaVersionTag, LinkSchema] = field(default_factory=dict)
    _versions: dict[str, list[int]] = field(default_factory=dict)

    # -- declaration -------------------------------------------------

    def declare_node_schema(self, decl: NodeSchema) -> SchemaVersionTag:
        self._check_tag(decl.tag)
        self._check_parent(decl)
        self._check_fields(decl)
        for slot, target in decl.link_slots:
            if target != decl.tag and target not in self._nodes:
                raise UnknownParent(
                    f"link slot {slot!r} of {decl.tag} targets undeclared {target}"
                )
        self._register(decl.tag)
        self._nodes[decl.tag] = decl
        return decl.tag

    def declare_link_schema(self, decl: LinkSchema) -> SchemaVersionTag:
        self._check_tag(decl.tag)
        self._check_parent(decl)
        self._check_fields(decl)
        for end, which in ((decl.source, "source"), (decl.target, "target")):
            if end not in self._nodes:
                raise UnknownParent(f"{which} {end} of link {decl.tag} not declared")
        self._register(decl.tag)
        self._links[decl.tag] = decl
        return decl.tag

    def _check_tag(self, tag: SchemaVersionTag) -> None:
        if tag in self._nodes or tag in self._links:
            raise DuplicateTag(f"{tag} already declared")
        expected = len(self._versions.get(tag.name, [])) + 1
        if tag.version != expected:
            raise NonContiguousVersion(
                f"{tag}: next version for {tag.name!r} must be {expected}"
            )

    def _check_parent(self, decl) -> None:
        parent = decl.parent
        if parent is None:
            return
        if parent.name != decl.tag.name:
            raise UnknownParent(f"parent {parent} of {decl.tag} has a different name")
        if parent.version >= decl.tag.version:
            raise CyclicInheritance(
                f"parent {parent} of {decl.tag} must have a smaller version"
            )
        if parent not in self._nodes and parent not in self._links:
            raise UnknownParent(f"parent {parent} of {decl.tag} not declared")

    def _check_fields(self, decl) -> None:
        seen: set[str] = set()
        inherited = set()
        if decl.parent is not None:
            inherited = {name for name, _ in self._effective_fields(decl.parent)}
        for name, kind in decl.fields:
            if kind not in SCALAR_KINDS:
                raise DuplicateField(
                    f"{decl.tag}: field {name!r} has unknown kind {kind!r}"
                )
            if name in seen or name in inherited:
                raise DuplicateField(f"{decl.tag}: field {name!r} shadows an earlier one")
            seen.add(name)

    def _register(self, tag: SchemaVersionTag) -> None:
        self._versions.setdefault(tag.name, []).append(tag.version)

    # -- queries -----------------------------------------------------

    def _lookup(self, tag: SchemaVersionTag):
        decl = self._nodes.get(tag) or self._links.get(tag)
        if decl is None:
            raise UnknownTag(f"{tag} not declared")
        return decl

    def _effective_fields(self, tag: SchemaVersionTag) -> list[tuple[str, str]]:
        decl = self._lookup(tag)
        fields: list[tuple[str, str]] = []
        if decl.parent is not None:
            fields.extend(self._effective_fields(decl.parent))
        fields.extend(decl.fields)
        return fields

    def resolve_effective(self, tag: SchemaVersionTag) -> EffectiveSchema:
        decl = self._lookup(tag)
        fields = tuple(self._effective_fields(tag))
        slots: list[tuple[str, SchemaVersionTag]] = []
        chain = []
        node = decl
        while node is not None:
            chain.append(node)
            node = self._lookup(node.parent) if node.parent is not None else None
        for node in reversed(chain):  # ancestor-first
            slots.extend(getattr(node, "link_slots", ()))
        return EffectiveSchema(tag=tag, fields=fields, link_slots=tuple(slots))

    def validate_payload(self, tag: SchemaVersionTag, payload: dict) -> list[Violation]:
        """Full-payload check: the key set must equal the effective field set."""
        effective = self.resolve_effective(tag)
        kinds = effective.field_kinds()
        violations = []
        for name in kinds:
            if name not in payload:
                violations.append(Violation("missing", name))
        for name, value in payload.items():
            if name not in kinds:
                violations.append(Violation("extra", name))
            elif not _kind_matches(kinds[name], value):
                violations.append(
                    Violation("kind_mismatch", name, f"expected {kinds[name]}")
                )
        return violations

    def validate_partial(self, tag: SchemaVersionTag, payload: dict) -> list[Violation]:
        """Subset check used by node updates: unknown keys and kind errors only."""
        kinds = self.resolve_effective(tag).field_kinds()
        violations = []
        for name, value in payload.items():
            if name not in kinds:
                violations.append(Violation("extra", name))
            elif not _kind_matches(kinds[name], value):
                violations.append(
                    Violation("kind_mismatch", name, f"expected {kinds[name]}")
                )
        return violations

    def versions_of(self, name: str) -> list[SchemaVersionTag]:
        return [SchemaVersionTag(name, v) for v in sorted(self._versions.get(name, []))]

    def is_declared(self, tag: SchemaVersionTag) -> bool:
        return tag in self._nodes or tag in self._links

    def has_link_schema(self, name: str) -> bool:
        return any(t.name == name for t in self._links)

    def latest_link_schema(self, name: str) -> LinkSchema | None:
        versions = [t for t in self._links if t.name == name]
        if not versions:
            return None
        return self._links[max(versions, key=lambda t: t.version)]


# -- declaration file format (JSON lines) --------------------------------


def parse_declaration(record: dict):
    """Convert one JSON declaration record into a NodeSchema or LinkSchema."""
    kind = record.get("kind")
    name = record["name"]
    version = int(record["version"])
    tag = SchemaVersionTag(name, version)
    parent = None
    if record.get("parent") is not None:
        parent = SchemaVersionTag(name, int(record["parent"]))
    fields = tuple((f[0], f[1]) for f in record.get("fields", []))
    if kind == "node":
        links = tuple(
            (l["slot"], SchemaVersionTag.parse(l["target"]))
            for l in record.get("links", [])
        )
        return NodeSchema(tag=tag, fields=fields, parent=parent, link_slots=links)
    if kind == "link":
        return LinkSchema(
            tag=tag,
            source=SchemaVersionTag.parse(record["source"]),
            target=SchemaVersionTag.parse(record["target"]),
            fields=fields,
            parent=parent,
        )
    raise UnknownTag(f"declaration kind must be node or link, got {kind!r}")


def declaration_to_record(decl) -> dict:
    record: dict = {
        "kind": "node" if isinstance(decl, NodeSchema) else "link",
        "name": decl.tag.name,
        "version": decl.tag.version,
        "fields": [list(f) for f in decl.fields],
    }
    if decl.parent is not None:
        record["parent"] = decl.parent.version
    if isinstance(decl, NodeSchema):
        record["links"] = [
            {"slot": slot, "target": str(target)} for slot, target in decl.link_slots
        ]
    else:
        record["source"] = str(decl.source)
        record["target"] = str(decl.target)
    return record


def load_declarations(lines) -> SchemaRegistry:
    registry = SchemaRegistry()
    for line in lines:
        line = line.strip()
        if not line:
            continue
        decl = parse_declaration(json.loads(line))
        if isinstance(decl, NodeSchema):
            registry.declare_node_schema(decl)
        else:
            registry.declare_link_schema(decl)
    return registry
