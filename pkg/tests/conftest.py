"""Shared fixtures: synthetic ontology documents and in-memory graphs."""

from __future__ import annotations

import numpy as np
import pytest

from ontoalign.ontology import (
    DATATYPE_PROPERTY,
    OBJECT_PROPERTY,
    Ontology,
    PropertyDecl,
    iri_fragment,
)

BASE = "http://example.org/onto"


def make_ontology_doc(
    classes: list[str],
    edges: list[tuple[str, str]] = (),
    obj_props: list[tuple[str, list[str], list[str]]] = (),
    data_props: list[tuple[str, list[str]]] = (),
    labels: dict[str, str] | None = None,
    base: str = BASE,
) -> bytes:
    """Small RDF/XML generator; classes/edges/property endpoints are local names."""
    labels = labels or {}
    parts = [
        '<?xml version="1.0"?>',
        '<rdf:RDF xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#"',
        '         xmlns:rdfs="http://www.w3.org/2000/01/rdf-schema#"',
        '         xmlns:owl="http://www.w3.org/2002/07/owl#"',
        f'         xml:base="{base}">',
        f'  <owl:Ontology rdf:about=""/>',
    ]
    parents = {}
    for child, parent in edges:
        parents.setdefault(child, []).append(parent)
    for name in classes:
        body = []
        for parent in parents.get(name, []):
            body.append(f'    <rdfs:subClassOf rdf:resource="#{parent}"/>')
        if name in labels:
            body.append(f"    <rdfs:label>{labels[name]}</rdfs:label>")
        if body:
            parts.append(f'  <owl:Class rdf:ID="{name}">')
            parts.extend(body)
            parts.append("  </owl:Class>")
        else:
            parts.append(f'  <owl:Class rdf:ID="{name}"/>')
    for name, domains, ranges in obj_props:
        parts.append(f'  <owl:ObjectProperty rdf:ID="{name}">')
        for d in domains:
            parts.append(f'    <rdfs:domain rdf:resource="#{d}"/>')
        for r in ranges:
            parts.append(f'    <rdfs:range rdf:resource="#{r}"/>')
        parts.append("  </owl:ObjectProperty>")
    for name, domains in data_props:
        parts.append(f'  <owl:DatatypeProperty rdf:ID="{name}">')
        for d in domains:
            parts.append(f'    <rdfs:domain rdf:resource="#{d}"/>')
        parts.append(
            '    <rdfs:range rdf:resource="http://www.w3.org/2001/XMLSchema#string"/>'
        )
        parts.append("  </owl:DatatypeProperty>")
    parts.append("</rdf:RDF>")
    return "\n".join(parts).encode("utf-8")


def graph(
    concepts: list[str],
    edges: list[tuple[str, str]] = (),
    properties: list[PropertyDecl] = (),
    iri: str = BASE,
) -> Ontology:
    """Build an Ontology value directly, bypassing XML."""
    all_concepts = set(concepts)
    for c, p in edges:
        all_concepts.update((c, p))
    return Ontology(
        iri=iri,
        concepts=frozenset(all_concepts),
        subclass_edges=frozenset(edges),
        properties=tuple(properties),
        labels={c: iri_fragment(c) for c in all_concepts},
    )


def obj_prop(pid: str, domains: list[str], ranges: list[str]) -> PropertyDecl:
    return PropertyDecl(
        id=pid, kind=OBJECT_PROPERTY, domains=frozenset(domains), ranges=frozenset(ranges),
        label=iri_fragment(pid),
    )


def data_prop(pid: str, domains: list[str]) -> PropertyDecl:
    return PropertyDecl(
        id=pid, kind=DATATYPE_PROPERTY, domains=frozenset(domains), ranges=frozenset(),
        label=iri_fragment(pid),
    )


TOY_CONCEPTS = [
    "Event", "Conference", "Workshop", "Tutorial", "Person", "Speaker", "Attendee",
    "Organizer", "Reviewer", "Document", "Paper", "Poster", "Slides", "Review",
    "Location", "Room", "Building", "Session", "Talk", "Break",
]
TOY_EDGES = [
    ("Conference", "Event"), ("Workshop", "Event"), ("Tutorial", "Event"),
    ("Speaker", "Person"), ("Attendee", "Person"), ("Organizer", "Person"),
    ("Reviewer", "Person"), ("Paper", "Document"), ("Poster", "Document"),
    ("Slides", "Document"), ("Review", "Document"), ("Room", "Location"),
    ("Building", "Location"), ("Talk", "Session"), ("Break", "Session"),
]
TOY_OBJ_PROPS = [("givesTalk", ["Speaker"], ["Talk"]), ("writesPaper", ["Person"], ["Paper"])]
TOY_DATA_PROPS = [("hasTitle", ["Document"]), ("hasName", ["Person"])]


def toy_ontology_doc(base: str = BASE) -> bytes:
    """A 20-concept conference-flavored ontology document."""
    return make_ontology_doc(
        TOY_CONCEPTS, TOY_EDGES, TOY_OBJ_PROPS, TOY_DATA_PROPS, base=base
    )


def identity_reference_doc(base_a: str, base_b: str, names: list[str]) -> bytes:
    """Reference alignment mapping every named entity to its twin."""
    cells = []
    for name in names:
        cells.append(
            "  <map><Cell>"
            f'<entity1 rdf:resource="{base_a}#{name}"/>'
            f'<entity2 rdf:resource="{base_b}#{name}"/>'
            "<relation>=</relation><measure>1.0</measure>"
            "</Cell></map>"
        )
    return (
        '<?xml version="1.0"?>\n'
        '<rdf:RDF xmlns="http://knowledgeweb.semanticweb.org/heterogeneity/alignment"\n'
        '         xmlns:rdf="http://www.w3.org/1999/02/22-rdf-syntax-ns#">\n'
        "<Alignment>\n" + "\n".join(cells) + "\n</Alignment>\n</rdf:RDF>\n"
    ).encode("utf-8")


@pytest.fixture
def rng():
    return np.random.default_rng(0)
