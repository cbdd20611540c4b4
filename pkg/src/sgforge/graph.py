"""Scene-graph data model: object instances, attribute pairs, relation triples.

A graph holds object instances (identity by id, never by label), a set of
(object_id, attribute) pairs, and a set of (subject_id, predicate, object_id)
triples. Tuple extraction flattens a graph to label-level tuples for scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import DanglingReferenceError, EmptyLabelError


def canonical_words(text: str) -> list[str]:
    """Lowercase and split on whitespace. Never raises."""
    return text.lower().split()


def canonicalize_label(raw: str) -> str:
    """Normalize a label: lowercase, collapse whitespace runs, trim.

    Raises EmptyLabelError if nothing remains.
    """
    words = canonical_words(raw)
    if not words:
        raise EmptyLabelError(f"label is empty after canonicalization: {raw!r}")
    return " ".join(words)


@dataclass(frozen=True)
class ObjectInstance:
    """One mention of an object. Two instances may share a label."""

    id: int
    label: str


@dataclass(frozen=True)
class SceneGraph:
    """Validated scene graph. Immutable; construct via build_graph()."""

    objects: tuple[ObjectInstance, ...] = ()
    attributes: tuple[tuple[int, str], ...] = ()
    relations: tuple[tuple[int, str, int], ...] = ()

    @property
    def self_relations(self) -> tuple[tuple[int, str, int], ...]:
        """Relations whose subject and object are the same instance (kept, flagged)."""
        return tuple(r for r in self.relations if r[0] == r[2])

    def is_empty(self) -> bool:
        return not (self.objects or self.attributes or self.relations)


def build_graph(
    objects: Iterable[tuple[int, str] | ObjectInstance],
    attributes: Iterable[tuple[int, str]] = (),
    relations: Iterable[tuple[int, str, int]] = (),
) -> SceneGraph:
    """Validate and assemble a SceneGraph.

    Labels are canonicalized. Duplicate attribute pairs and relation triples
    collapse (set semantics, first occurrence kept in order). Any attribute or
    relation referencing an unknown object id raises DanglingReferenceError.
    """
    objs: list[ObjectInstance] = []
    ids: set[int] = set()
    for entry in objects:
        if isinstance(entry, ObjectInstance):
            oid, label = entry.id, entry.label
        else:
            oid, label = entry
        if oid in ids:
            raise ValueError(f"duplicate object id {oid}")
        ids.add(oid)
        objs.append(ObjectInstance(oid, canonicalize_label(label)))

    attrs: list[tuple[int, str]] = []
    seen_attrs: set[tuple[int, str]] = set()
    for oid, label in attributes:
        if oid not in ids:
            raise DanglingReferenceError(f"attribute references unknown object id {oid}")
        pair = (oid, canonicalize_label(label))
        if pair not in seen_attrs:
            seen_attrs.add(pair)
            attrs.append(pair)

    rels: list[tuple[int, str, int]] = []
    seen_rels: set[tuple[int, str, int]] = set()
    for sid, label, oid in relations:
        if sid not in ids:
            raise DanglingReferenceError(f"relation references unknown subject id {sid}")
        if oid not in ids:
            raise DanglingReferenceError(f"relation references unknown object id {oid}")
        triple = (sid, canonicalize_label(label), oid)
        if triple not in seen_rels:
            seen_rels.add(triple)
            rels.append(triple)

    return SceneGraph(tuple(objs), tuple(attrs), tuple(rels))


@dataclass(frozen=True)
class TupleSet:
    """Label-level tuples of a graph: unary objects, binary attributes, ternary relations."""

    unary: frozenset[tuple[str]] = frozenset()
    binary: frozenset[tuple[str, str]] = frozenset()
    ternary: frozenset[tuple[str, str, str]] = frozenset()

    def __len__(self) -> int:
        return len(self.unary) + len(self.binary) + len(self.ternary)

    def ordered(self) -> list[tuple[str, ...]]:
        """Canonical iteration order: unary, binary, ternary, lexicographic within each."""
        out: list[tuple[str, ...]] = []
        out.extend(sorted(self.unary))
        out.extend(sorted(self.binary))
        out.extend(sorted(self.ternary))
        return out


def extract_tuples(g: SceneGraph) -> TupleSet:
    """Flatten a graph to its label tuples. Duplicate labels collapse."""
    labels = {o.id: o.label for o in g.objects}
    unary = frozenset((o.label,) for o in g.objects)
    binary = frozenset((labels[oid], attr) for oid, attr in g.attributes)
    ternary = frozenset((labels[sid], pred, labels[oid]) for sid, pred, oid in g.relations)
    return TupleSet(unary, binary, ternary)


def graph_to_dict(g: SceneGraph) -> dict:
    """Graph JSON schema: objects/attributes/relations with integer ids."""
    return {
        "objects": [{"id": o.id, "label": o.label} for o in g.objects],
        "attributes": [[oid, label] for oid, label in g.attributes],
        "relations": [[sid, label, oid] for sid, label, oid in g.relations],
    }


def _uint(value) -> int:
    oid = int(value)
    if oid < 0:
        raise ValueError(f"object ids must be non-negative, got {oid}")
    return oid


def graph_from_dict(record: dict) -> SceneGraph:
    """Inverse of graph_to_dict. Accepts 'relations' or the VG-style 'relationships' key."""
    rels = record.get("relations", record.get("relationships", []))
    return build_graph(
        [(_uint(o["id"]), o["label"]) for o in record.get("objects", [])],
        [(_uint(oid), label) for oid, label in record.get("attributes", [])],
        [(_uint(sid), label, _uint(oid)) for sid, label, oid in rels],
    )


def graph_to_json(g: SceneGraph) -> str:
    return json.dumps(graph_to_dict(g), sort_keys=True, separators=(",", ":"))
