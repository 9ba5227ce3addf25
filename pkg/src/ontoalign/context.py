"""Four-facet concept context: lineage paths, children, property neighbors.

Everything here is deterministic: neighbor lists and path lists are sorted
lexicographically by IRI before truncation, so identical inputs always
produce identical bundles.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ontology import DATATYPE_PROPERTY, OBJECT_PROPERTY, OWL_THING, Ontology


@dataclass(frozen=True)
class ContextConfig:
    max_depth: int = 6
    max_paths: int = 8


@dataclass(frozen=True)
class ContextBundle:
    """A concept's context. Paths list nearest ancestor first; the focal
    concept itself never appears anywhere in the bundle."""

    lineage_paths: tuple[tuple[str, ...], ...]
    children: tuple[str, ...]
    obj_neighbors: tuple[str, ...]
    data_neighbors: tuple[str, ...]  # datatype-property ids (label-bearing pseudo-concepts)

    def is_empty(self) -> bool:
        return not (self.lineage_paths or self.children or self.obj_neighbors or self.data_neighbors)


def _parent_map(onto: Ontology) -> dict[str, list[str]]:
    parents: dict[str, list[str]] = {}
    for child, parent in onto.subclass_edges:
        if parent == OWL_THING:
            continue
        parents.setdefault(child, []).append(parent)
    for ps in parents.values():
        ps.sort()
    return parents


def enumerate_lineage_paths(
    onto: Ontology, concept: str, max_depth: int, max_paths: int
) -> list[tuple[str, ...]]:
    """All simple upward subclass paths from `concept`, nearest ancestor first.

    A path ends when the frontier node has no parent that is not already on
    the path (roots included); cycles are broken by the simple-path rule.
    Each path is truncated to max_depth nodes; the deduplicated path list is
    sorted lexicographically and truncated to max_paths entries.
    """
    if concept not in onto.concepts:
        raise KeyError(concept)
    parents = _parent_map(onto)

    raw: list[tuple[str, ...]] = []

    def walk(node: str, trail: list[str]) -> None:
        extensions = [p for p in parents.get(node, []) if p != concept and p not in trail]
        if not extensions:
            if trail:
                raw.append(tuple(trail))
            return
        for p in extensions:
            trail.append(p)
            walk(p, trail)
            trail.pop()

    walk(concept, [])

    truncated = {path[:max_depth] for path in raw}
    return sorted(truncated)[:max_paths]


def one_hop_children(onto: Ontology, concept: str) -> list[str]:
    """Concepts directly below `concept`; a malformed self-edge is ignored."""
    if concept not in onto.concepts:
        raise KeyError(concept)
    return sorted(c for c, p in onto.subclass_edges if p == concept and c != concept)


def property_neighbors(onto: Ontology, concept: str) -> tuple[list[str], list[str]]:
    """(object neighbors, datatype neighbors) of `concept`.

    Object neighbors are collected in both directions: ranges of properties
    where the concept is a domain plus domains where it is a range. Each
    datatype property attached to the concept contributes itself as a
    pseudo-concept; its label is the lexical signal (a literal range has no
    concept node).
    """
    if concept not in onto.concepts:
        raise KeyError(concept)
    obj: set[str] = set()
    data: set[str] = set()
    for prop in onto.properties:
        if prop.kind == OBJECT_PROPERTY:
            if concept in prop.domains:
                obj.update(prop.ranges)
            if concept in prop.ranges:
                obj.update(prop.domains)
        elif prop.kind == DATATYPE_PROPERTY:
            if concept in prop.domains:
                data.add(prop.id)
    obj.discard(concept)
    return sorted(obj), sorted(data)


def build_context(onto: Ontology, concept: str, cfg: ContextConfig = ContextConfig()) -> ContextBundle:
    paths = enumerate_lineage_paths(onto, concept, cfg.max_depth, cfg.max_paths)
    children = one_hop_children(onto, concept)
    obj, data = property_neighbors(onto, concept)
    return ContextBundle(
        lineage_paths=tuple(paths),
        children=tuple(children),
        obj_neighbors=tuple(obj),
        data_neighbors=tuple(data),
    )
