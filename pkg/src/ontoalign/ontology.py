"""RDF/XML ontology and reference-alignment parsing.

Only a closed vocabulary is recognized: owl:Class, rdfs:subClassOf (named
targets), owl:ObjectProperty, owl:DatatypeProperty, rdfs:domain, rdfs:range,
rdfs:label and the rdf:about / rdf:resource / rdf:ID identification
attributes. Anonymous classes (restrictions, unions, ...) and anything else
are skipped, never fatal.
"""

from __future__ import annotations

import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

RDF_NS = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS_NS = "http://www.w3.org/2000/01/rdf-schema#"
OWL_NS = "http://www.w3.org/2002/07/owl#"
XML_BASE = "{http://www.w3.org/XML/1998/namespace}base"

OWL_THING = OWL_NS + "Thing"

OBJECT_PROPERTY = "object"
DATATYPE_PROPERTY = "datatype"


class OntologyParseError(ValueError):
    """Malformed XML; carries the byte offset of the failure when known."""

    def __init__(self, message: str, byte_offset: int | None = None):
        if byte_offset is not None:
            message = f"{message} (byte {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class UnknownEntityError(KeyError):
    pass


@dataclass(frozen=True)
class PropertyDecl:
    id: str
    kind: str  # OBJECT_PROPERTY or DATATYPE_PROPERTY
    domains: frozenset[str]
    ranges: frozenset[str]  # always empty for datatype properties
    label: str


@dataclass(frozen=True)
class Ontology:
    """Concept/property graph; immutable after parsing, safe to share."""

    iri: str
    concepts: frozenset[str]
    subclass_edges: frozenset[tuple[str, str]]  # (child, parent)
    properties: tuple[PropertyDecl, ...]
    labels: dict[str, str]

    def parents_of(self, concept: str) -> list[str]:
        return sorted(p for c, p in self.subclass_edges if c == concept)

    def children_of(self, concept: str) -> list[str]:
        return sorted(c for c, p in self.subclass_edges if p == concept)

    def property_by_id(self, prop_id: str) -> PropertyDecl:
        for p in self.properties:
            if p.id == prop_id:
                return p
        raise UnknownEntityError(prop_id)


@dataclass(frozen=True)
class AlignmentCell:
    source: str
    target: str
    relation: str
    measure: float


@dataclass(frozen=True)
class ReferenceAlignment:
    cells: tuple[AlignmentCell, ...]
    skipped_cells: int = 0

    def equivalence_pairs(self) -> set[tuple[str, str]]:
        """Ground-truth pairs: only cells carrying the '=' relation."""
        return {(c.source, c.target) for c in self.cells if c.relation == "="}


def iri_fragment(iri: str) -> str:
    """Fragment after '#', else the last '/' segment."""
    if "#" in iri:
        return iri.rsplit("#", 1)[1]
    return iri.rstrip("/").rsplit("/", 1)[-1]


def _byte_offset(document: bytes, line: int, column: int) -> int:
    lines = document.split(b"\n")
    return sum(len(l) + 1 for l in lines[: line - 1]) + column


def _parse_xml(document: bytes | str) -> tuple[ET.Element, bytes]:
    raw = document.encode("utf-8") if isinstance(document, str) else bytes(document)
    try:
        return ET.fromstring(raw), raw
    except ET.ParseError as exc:
        line, column = exc.position
        raise OntologyParseError(str(exc), _byte_offset(raw, line, column)) from exc


def _resolve(ref: str, base: str) -> str:
    """Resolve an rdf:about / rdf:resource value against the document base."""
    if ref == "":
        return base
    if ref.startswith("#"):
        return base + ref
    return ref


def _element_iri(elem: ET.Element, base: str) -> str | None:
    about = elem.get(f"{{{RDF_NS}}}about")
    if about is not None:
        return _resolve(about, base)
    rdf_id = elem.get(f"{{{RDF_NS}}}ID")
    if rdf_id is not None:
        return base + "#" + rdf_id
    return None


def _named_targets(elem: ET.Element, base: str) -> list[str]:
    """IRIs referenced by a predicate element: rdf:resource or a nested named class."""
    out = []
    resource = elem.get(f"{{{RDF_NS}}}resource")
    if resource is not None:
        out.append(_resolve(resource, base))
    for child in elem:
        if child.tag == f"{{{OWL_NS}}}Class":
            iri = _element_iri(child, base)
            if iri is not None:
                out.append(iri)
    return out


def _first_label(elem: ET.Element) -> str | None:
    for child in elem:
        if child.tag == f"{{{RDFS_NS}}}label" and child.text is not None:
            text = child.text.strip()
            if text:
                return text
    return None


def parse_ontology(document: bytes | str) -> Ontology:
    """Parse an RDF/XML ontology document into an immutable graph.

    Entities referenced only as edge endpoints or property domains/ranges are
    materialized as concepts so the graph stays closed. owl:Thing is never
    materialized and subclass edges pointing at it are dropped: it is the
    implicit universal superclass, not a domain concept.
    """
    root, raw = _parse_xml(document)

    base = root.get(XML_BASE, "")
    onto_iri = ""
    for elem in root.iter(f"{{{OWL_NS}}}Ontology"):
        about = elem.get(f"{{{RDF_NS}}}about")
        if about is not None:
            onto_iri = _resolve(about, base) if about else (base or "")
            break
    if not base:
        base = onto_iri

    concepts: set[str] = set()
    edges: set[tuple[str, str]] = set()
    labels: dict[str, str] = {}
    props: dict[str, PropertyDecl] = {}

    for elem in root.iter(f"{{{OWL_NS}}}Class"):
        iri = _element_iri(elem, base)
        if iri is None or iri == OWL_THING:
            continue
        concepts.add(iri)
        lbl = _first_label(elem)
        if lbl is not None and iri not in labels:
            labels[iri] = lbl
        for pred in elem:
            if pred.tag != f"{{{RDFS_NS}}}subClassOf":
                continue
            for parent in _named_targets(pred, base):
                if parent == OWL_THING:
                    continue
                concepts.add(parent)
                edges.add((iri, parent))

    for kind, tag in ((OBJECT_PROPERTY, "ObjectProperty"), (DATATYPE_PROPERTY, "DatatypeProperty")):
        for elem in root.iter(f"{{{OWL_NS}}}{tag}"):
            iri = _element_iri(elem, base)
            if iri is None:
                continue
            domains: set[str] = set()
            ranges: set[str] = set()
            for pred in elem:
                if pred.tag == f"{{{RDFS_NS}}}domain":
                    domains.update(t for t in _named_targets(pred, base) if t != OWL_THING)
                elif pred.tag == f"{{{RDFS_NS}}}range" and kind == OBJECT_PROPERTY:
                    ranges.update(t for t in _named_targets(pred, base) if t != OWL_THING)
            lbl = _first_label(elem) or iri_fragment(iri)
            if iri in props:  # repeated declaration: union of domains/ranges
                old = props[iri]
                domains |= set(old.domains)
                ranges |= set(old.ranges)
                lbl = old.label
            props[iri] = PropertyDecl(
                id=iri,
                kind=kind,
                domains=frozenset(domains),
                ranges=frozenset(ranges),
                label=lbl,
            )
            concepts.update(domains)
            concepts.update(ranges)

    for iri in concepts:
        labels.setdefault(iri, iri_fragment(iri))

    return Ontology(
        iri=onto_iri,
        concepts=frozenset(concepts),
        subclass_edges=frozenset(edges),
        properties=tuple(sorted(props.values(), key=lambda p: p.id)),
        labels=labels,
    )


def parse_reference_alignment(document: bytes | str) -> ReferenceAlignment:
    """Parse an OAEI Alignment-format file: one cell per <Cell> element.

    Cells missing entity1/entity2 are skipped; their count is kept on the
    result and logged.
    """
    root, _ = _parse_xml(document)

    cells: list[AlignmentCell] = []
    skipped = 0
    for elem in root.iter():
        if not elem.tag.endswith("Cell"):
            continue
        entity1 = entity2 = None
        relation = "="
        measure = 1.0
        for child in elem:
            tag = child.tag.rsplit("}", 1)[-1]
            if tag == "entity1":
                entity1 = child.get(f"{{{RDF_NS}}}resource")
            elif tag == "entity2":
                entity2 = child.get(f"{{{RDF_NS}}}resource")
            elif tag == "relation" and child.text is not None:
                relation = child.text.strip()
            elif tag == "measure" and child.text is not None:
                try:
                    measure = float(child.text.strip())
                except ValueError:
                    pass
        if entity1 is None or entity2 is None:
            skipped += 1
            continue
        cells.append(AlignmentCell(entity1, entity2, relation, measure))

    if skipped:
        log.warning("reference alignment: skipped %d cell(s) missing entity1/entity2", skipped)
    return ReferenceAlignment(cells=tuple(cells), skipped_cells=skipped)


def entity_label(onto: Ontology, entity_id: str) -> str:
    """rdfs:label when present, else the IRI fragment. Raises on unknown ids."""
    if entity_id in onto.labels:
        return onto.labels[entity_id]
    for p in onto.properties:
        if p.id == entity_id:
            return p.label
    raise UnknownEntityError(entity_id)
