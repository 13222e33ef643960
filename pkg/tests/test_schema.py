from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import flatten_schema_walk
from protoflow.schema import (
    CyclicInheritance,
    DuplicateField,
    DuplicateTag,
    LinkSchema,
    NodeSchema,
    NonContiguousVersion,
    SchemaRegistry,
    SchemaVersionTag,
    UnknownParent,
    UnknownTag,
    load_declarations,
)

AUTHOR1 = SchemaVersionTag("author", 1)
AUTHOR2 = SchemaVersionTag("author", 2)
SCHOOL1 = SchemaVersionTag("school", 1)


def citation_registry() -> SchemaRegistry:
    registry = SchemaRegistry()
    registry.declare_node_schema(NodeSchema(AUTHOR1, fields=(("name", "string"),)))
    registry.declare_node_schema(NodeSchema(SCHOOL1, fields=(("name", "string"),)))
    registry.declare_node_schema(
        NodeSchema(AUTHOR2, parent=AUTHOR1, link_slots=(("belongs_to", SCHOOL1),))
    )
    return registry


def test_declare_returns_tags_in_version_order():
    registry = citation_registry()
    assert registry.versions_of("author") == [AUTHOR1, AUTHOR2]


def test_evolved_version_inherits_fields_and_adds_link_slot():
    registry = citation_registry()
    effective = registry.resolve_effective(AUTHOR2)
    assert effective.fields == (("name", "string"),)
    assert effective.link_slots == (("belongs_to", SCHOOL1),)


def test_schema_without_parent_resolves_to_itself():
    registry = citation_registry()
    effective = registry.resolve_effective(AUTHOR1)
    assert effective.fields == (("name", "string"),)
    assert effective.link_slots == ()


def test_resolve_unknown_tag():
    with pytest.raises(UnknownTag):
        citation_registry().resolve_effective(SchemaVersionTag("ghost", 1))


def test_version_contiguity():
    registry = citation_registry()
    registry.declare_node_schema(NodeSchema(SchemaVersionTag("author", 3), parent=AUTHOR1))
    with pytest.raises(NonContiguousVersion):
        registry.declare_node_schema(NodeSchema(SchemaVersionTag("author", 5)))


def test_duplicate_tag_rejected():
    registry = citation_registry()
    with pytest.raises(DuplicateTag):
        registry.declare_node_schema(NodeSchema(AUTHOR1))


def test_unknown_parent_rejected():
    registry = SchemaRegistry()
    with pytest.raises(NonContiguousVersion):
        registry.declare_node_schema(
            NodeSchema(SchemaVersionTag("x", 2), parent=SchemaVersionTag("x", 1))
        )
    registry.declare_node_schema(NodeSchema(SchemaVersionTag("x", 1)))
    with pytest.raises(UnknownParent):
        registry.declare_node_schema(
            NodeSchema(SchemaVersionTag("y", 1), parent=SchemaVersionTag("z", 1))
        )


def test_parent_version_must_be_smaller():
    registry = SchemaRegistry()
    registry.declare_node_schema(NodeSchema(SchemaVersionTag("x", 1)))
    with pytest.raises(CyclicInheritance):
        registry.declare_node_schema(
            NodeSchema(SchemaVersionTag("x", 2), parent=SchemaVersionTag("x", 2))
        )


def test_field_shadowing_rejected():
    registry = SchemaRegistry()
    registry.declare_node_schema(NodeSchema(SchemaVersionTag("x", 1), fields=(("f", "string"),)))
    with pytest.raises(DuplicateField):
        registry.declare_node_schema(
            NodeSchema(
                SchemaVersionTag("x", 2),
                parent=SchemaVersionTag("x", 1),
                fields=(("f", "integer"),),
            )
        )


def test_self_referencing_link_slot_allowed():
    registry = SchemaRegistry()
    paper = SchemaVersionTag("paper", 1)
    registry.declare_node_schema(
        NodeSchema(paper, fields=(("title", "string"),), link_slots=(("cites", paper),))
    )
    assert registry.resolve_effective(paper).link_slots == (("cites", paper),)


def test_link_schema_requires_declared_endpoints():
    registry = citation_registry()
    wrote = LinkSchema(
        SchemaVersionTag("wrote", 1),
        source=AUTHOR1,
        target=SchemaVersionTag("paper", 1),
    )
    with pytest.raises(UnknownParent):
        registry.declare_link_schema(wrote)


def test_validate_payload_examples():
    registry = citation_registry()
    assert registry.validate_payload(AUTHOR1, {"name": "Ada"}) == []
    missing = registry.validate_payload(AUTHOR1, {})
    assert [v.kind for v in missing] == ["missing"]
    extra = registry.validate_payload(AUTHOR2, {"name": "Ada", "age": 3})
    assert [(v.kind, v.field) for v in extra] == [("extra", "age")]


def test_validate_payload_kind_mismatch():
    registry = citation_registry()
    bad = registry.validate_payload(AUTHOR1, {"name": 7})
    assert [v.kind for v in bad] == ["kind_mismatch"]


def test_versions_of_unknown_name_is_empty():
    assert citation_registry().versions_of("nothing") == []


def test_registry_is_append_only_for_queries():
    registry = citation_registry()
    before = registry.resolve_effective(AUTHOR2)
    registry.declare_node_schema(NodeSchema(SchemaVersionTag("author", 3), parent=AUTHOR2))
    assert registry.resolve_effective(AUTHOR2) == before


def test_load_declarations_jsonl():
    lines = [
        '{"kind":"node","name":"author","version":1,"fields":[["name","string"]]}',
        '{"kind":"node","name":"school","version":1,"fields":[["name","string"]]}',
        '{"kind":"node","name":"author","version":2,"parent":1,"fields":[],'
        '"links":[{"slot":"belongs_to","target":"school@1"}]}',
    ]
    registry = load_declarations(lines)
    effective = registry.resolve_effective(SchemaVersionTag("author", 2))
    assert effective.fields == (("name", "string"),)
    assert effective.link_slots == (("belongs_to", SchemaVersionTag("school", 1)),)


# -- property: resolution equals the brute-force union walk --------------------

_names = st.sampled_from(["alpha", "beta", "gamma"])
_kinds = st.sampled_from(["string", "integer", "float", "boolean"])


@st.composite
def registries(draw):
    registry = SchemaRegistry()
    declared: dict[str, int] = {}
    used_fields: dict[str, set] = {}
    for i in range(draw(st.integers(min_value=1, max_value=8))):
        name = draw(_names)
        version = declared.get(name, 0) + 1
        parent = None
        if version > 1 and draw(st.booleans()):
            parent = SchemaVersionTag(name, draw(st.integers(1, version - 1)))
        n_fields = draw(st.integers(0, 3))
        fields = []
        taken = used_fields.setdefault(name, set())
        for j in range(n_fields):
            field = f"f{i}_{j}"
            taken.add(field)
            fields.append((field, draw(_kinds)))
        registry.declare_node_schema(
            NodeSchema(SchemaVersionTag(name, version), fields=tuple(fields), parent=parent)
        )
        declared[name] = version
    return registry


@given(registries())
@settings(max_examples=60, deadline=None)
def test_resolution_matches_union_walk(registry):
    for name in ("alpha", "beta", "gamma"):
        for tag in registry.versions_of(name):
            effective = registry.resolve_effective(tag)
            fields, slots = flatten_schema_walk(registry, tag)
            assert effective.fields == fields
            assert effective.link_slots == slots


@given(registries(), st.dictionaries(st.sampled_from([f"f{i}_{j}" for i in range(8) for j in range(3)]), st.integers(), max_size=4))
@settings(max_examples=60, deadline=None)
def test_validation_is_exact_field_set_match(registry, payload):
    for name in ("alpha", "beta", "gamma"):
        for tag in registry.versions_of(name):
            fields, _ = flatten_schema_walk(registry, tag)
            kinds = dict(fields)
            expected_ok = set(payload) == set(kinds) and all(
                kinds[k] == "integer" for k in payload
            )
            violations = registry.validate_payload(tag, payload)
            assert (violations == []) == expected_ok
