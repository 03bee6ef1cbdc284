"""Canonical JSON shapes for annotations.

Two dict shapes exist: the *record* shape (full fidelity, used for the
persisted cache payload and round-tripping) and the *wire* shape (the
public API annotation object).  ``canonical_json`` is the single
serialization used wherever byte-level determinism matters.
"""

from __future__ import annotations

import json

from bioann.model import (
    Annotation,
    AnnotationResult,
    Document,
    EntityType,
    Mention,
    Normalization,
    NormSource,
)


def canonical_json(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def annotation_record(a: Annotation) -> dict:
    return {
        "span": {"begin": a.mention.begin, "end": a.mention.end},
        "mention": a.mention.surface,
        "obj": a.mention.etype.value,
        "prob": a.mention.prob,
        "id": list(a.norm.ids),
        "source": a.norm.source.value,
        "score": a.norm.score,
    }


def annotation_from_record(d: dict) -> Annotation:
    mention = Mention(
        begin=d["span"]["begin"],
        end=d["span"]["end"],
        surface=d["mention"],
        etype=EntityType.from_name(d["obj"]),
        prob=d["prob"],
    )
    norm = Normalization(
        ids=tuple(d["id"]),
        source=NormSource(d["source"]),
        score=d["score"],
    )
    return Annotation(mention, norm)


def annotation_to_wire(a: Annotation) -> dict:
    """Public API shape; provenance surfaced as a boolean flag."""
    return {
        "span": {"begin": a.mention.begin, "end": a.mention.end},
        "mention": a.mention.surface,
        "obj": a.mention.etype.value,
        "prob": a.mention.prob,
        "id": list(a.norm.ids),
        "is_neural_normalized": a.norm.source is NormSource.NEURAL,
    }


def result_payload(r: AnnotationResult) -> dict:
    """The persisted form of a result.  Timing is observational and is
    deliberately excluded so payloads compare byte-for-byte."""
    return {
        "doc_id": r.doc.doc_id,
        "text": r.doc.text,
        "annotations": [annotation_record(a) for a in r.annotations],
        "pipeline_version": r.pipeline_version,
    }


def result_from_payload(d: dict, elapsed_ms: float = 0.0) -> AnnotationResult:
    return AnnotationResult(
        doc=Document(text=d["text"], doc_id=d["doc_id"]),
        annotations=tuple(annotation_from_record(a) for a in d["annotations"]),
        elapsed_ms=elapsed_ms,
        pipeline_version=d["pipeline_version"],
    )


def result_to_response(r: AnnotationResult) -> dict:
    """The /plain response body."""
    return {
        "text": r.doc.text,
        "annotations": [annotation_to_wire(a) for a in r.annotations],
        "elapsed_ms": r.elapsed_ms,
        "pipeline_version": r.pipeline_version,
    }
