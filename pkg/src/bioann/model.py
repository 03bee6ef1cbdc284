"""Core domain types shared by every stage of the pipeline.

All types here are immutable values: safe to share between threads and to
use as dict keys.  Character offsets throughout the package count Unicode
scalar values (Python string indices), never bytes or UTF-16 units.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable


class EntityType(Enum):
    """The nine biomedical entity categories the pipeline knows about.

    The serialized names are a stable part of the wire and file formats.
    """

    GENE = "gene"
    DISEASE = "disease"
    DRUG = "drug"
    SPECIES = "species"
    MUTATION = "mutation"
    CELL_LINE = "cell_line"
    CELL_TYPE = "cell_type"
    DNA = "DNA"
    RNA = "RNA"

    @classmethod
    def from_name(cls, name: str) -> "EntityType":
        try:
            return _NAME_TO_TYPE[name]
        except KeyError:
            raise ValueError(f"unknown entity type {name!r}") from None


_NAME_TO_TYPE = {t.value: t for t in EntityType}


class NormSource(Enum):
    """How a normalization was produced."""

    RULE = "rule"
    NEURAL = "neural"
    UNMAPPED = "unmapped"


# <namespace>:<identifier>, both parts nonempty, no whitespace, no colon in
# the namespace part (the identifier may contain further colons).
CUI_PATTERN = re.compile(r"^[^:\s]+:\S+$")

_PMID_PATTERN = re.compile(r"^[0-9]+$")


def is_valid_pmid(pmid: str) -> bool:
    return bool(_PMID_PATTERN.match(pmid))


@dataclass(frozen=True, slots=True)
class Document:
    """A unit of input text, optionally keyed by its PubMed ID."""

    text: str
    doc_id: str | None = None


@dataclass(frozen=True, slots=True)
class TokenSpan:
    """A token with its character offsets into the source document."""

    begin: int
    end: int
    surface: str


@dataclass(frozen=True, slots=True)
class Mention:
    """A typed entity span with the tagger's confidence."""

    begin: int
    end: int
    surface: str
    etype: EntityType
    prob: float


@dataclass(frozen=True, slots=True)
class Normalization:
    """Concept IDs assigned to a mention, with provenance.

    Invariants: ids is empty iff source is UNMAPPED; score is present iff
    source is NEURAL.
    """

    ids: tuple[str, ...]
    source: NormSource
    score: float | None = None

    @classmethod
    def rule(cls, ids: Iterable[str]) -> "Normalization":
        return cls(tuple(ids), NormSource.RULE)

    @classmethod
    def neural(cls, cui: str, score: float) -> "Normalization":
        return cls((cui,), NormSource.NEURAL, float(score))

    @classmethod
    def unmapped(cls) -> "Normalization":
        return cls((), NormSource.UNMAPPED)


@dataclass(frozen=True, slots=True)
class Annotation:
    mention: Mention
    norm: Normalization


@dataclass(frozen=True, slots=True)
class AnnotationResult:
    """A document with its sorted annotations and timing metadata."""

    doc: Document
    annotations: tuple[Annotation, ...]
    elapsed_ms: float
    pipeline_version: str


def annotation_sort_key(a: Annotation) -> tuple[int, int, str]:
    return (a.mention.begin, a.mention.end, a.mention.etype.value)


def sort_annotations(annotations: Iterable[Annotation]) -> tuple[Annotation, ...]:
    return tuple(sorted(annotations, key=annotation_sort_key))


def validate_result(r: AnnotationResult) -> list[str]:
    """Check every invariant of an AnnotationResult.

    Returns a list of human-readable violation descriptions, each naming the
    offending field and annotation index.  An empty list means the result is
    valid.  Violations are data, not failures: nothing is raised.
    """

    violations: list[str] = []
    text = r.doc.text
    n = len(text)

    if r.doc.doc_id is not None and not is_valid_pmid(r.doc.doc_id):
        violations.append(f"doc_id: {r.doc.doc_id!r} is not a nonempty digit string")
    if r.elapsed_ms < 0:
        violations.append(f"elapsed_ms: negative ({r.elapsed_ms})")
    if not r.pipeline_version:
        violations.append("pipeline_version: empty")

    for i, ann in enumerate(r.annotations):
        m = ann.mention
        if not (0 <= m.begin < m.end <= n):
            violations.append(
                f"annotation {i}: begin<end violated or out of bounds "
                f"(begin={m.begin}, end={m.end}, len={n})"
            )
        elif text[m.begin : m.end] != m.surface:
            violations.append(
                f"annotation {i}: surface {m.surface!r} != text slice "
                f"{text[m.begin:m.end]!r}"
            )
        if not (0.0 <= m.prob <= 1.0):
            violations.append(f"annotation {i}: prob out of [0,1] ({m.prob})")

        norm = ann.norm
        for j, cui in enumerate(norm.ids):
            if not CUI_PATTERN.match(cui):
                violations.append(
                    f"annotation {i}: ids[{j}] {cui!r} does not match "
                    "<namespace>:<identifier>"
                )
        if (norm.source is NormSource.UNMAPPED) != (len(norm.ids) == 0):
            violations.append(
                f"annotation {i}: source {norm.source.value} inconsistent with "
                f"{len(norm.ids)} ids (unmapped iff ids empty)"
            )
        if (norm.score is not None) != (norm.source is NormSource.NEURAL):
            violations.append(
                f"annotation {i}: score present iff source is neural violated "
                f"(source={norm.source.value}, score={norm.score})"
            )

    keys = [annotation_sort_key(a) for a in r.annotations]
    for i in range(1, len(keys)):
        if keys[i] < keys[i - 1]:
            violations.append(f"annotation {i}: out of sort order (begin, end, type)")
    seen: set[tuple[int, int, str]] = set()
    for i, k in enumerate(keys):
        if k in seen:
            violations.append(f"annotation {i}: duplicate (begin, end, type) {k}")
        seen.add(k)

    return violations
