"""Offset-preserving sentence segmentation, tokenization, and PubTator I/O.

Everything here is a pure function over Unicode strings.  Offsets count
Unicode scalar values into the original text; no normalization (NFC/NFD)
is applied.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Iterator, Sequence

from bioann.errors import MalformedLine, OffsetMismatch
from bioann.model import TokenSpan

__all__ = [
    "SentenceRange",
    "GoldMention",
    "GoldDocument",
    "default_abbreviations",
    "segment_sentences",
    "tokenize",
    "parse_pubtator",
    "serialize_pubtator",
]


@dataclass(frozen=True, slots=True)
class SentenceRange:
    begin: int
    end: int


@dataclass(frozen=True, slots=True)
class GoldMention:
    """One reference annotation from a PubTator file.

    ``etype`` is kept as the raw type string so that corpora with types
    outside the nine built-in ones still round-trip exactly.
    """

    begin: int
    end: int
    surface: str
    etype: str
    cuis: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class GoldDocument:
    """A PubTator document: offsets index into ``title + " " + abstract``."""

    doc_id: str
    title: str
    abstract_text: str
    gold: tuple[GoldMention, ...]

    @property
    def text(self) -> str:
        return self.title + " " + self.abstract_text


_SENTENCE_ENDERS = ".!?"

_abbrev_cache: tuple[str, ...] | None = None


def default_abbreviations() -> tuple[str, ...]:
    """Protected abbreviations that never end a sentence (packaged resource)."""
    global _abbrev_cache
    if _abbrev_cache is None:
        raw = resources.files("bioann").joinpath("resources/abbreviations.txt").read_text("utf-8")
        _abbrev_cache = tuple(
            line.strip() for line in raw.splitlines() if line.strip() and not line.startswith("#")
        )
    return _abbrev_cache


def _is_protected(text: str, end: int, abbreviations: Sequence[str]) -> bool:
    prefix = text[:end]
    for abbr in abbreviations:
        if prefix.endswith(abbr):
            before = end - len(abbr) - 1
            if before < 0 or not text[before].isalnum():
                return True
    return False


def segment_sentences(
    text: str, abbreviations: Sequence[str] | None = None
) -> list[SentenceRange]:
    """Split text into sentence ranges covering all non-whitespace characters.

    A split happens after '.', '!' or '?' followed by whitespace and an
    uppercase letter, unless the text up to the terminator ends with a
    protected abbreviation ("e.g.", "et al.", ...).  Ranges are trimmed to
    their first/last non-whitespace character.
    """
    if abbreviations is None:
        abbreviations = default_abbreviations()

    n = len(text)
    breaks: list[int] = []
    for i, ch in enumerate(text):
        if ch not in _SENTENCE_ENDERS:
            continue
        j = i + 1
        k = j
        while k < n and text[k].isspace():
            k += 1
        if k == j or k >= n:  # no whitespace after, or end of text
            continue
        if not text[k].isupper():
            continue
        if ch == "." and _is_protected(text, j, abbreviations):
            continue
        breaks.append(j)

    ranges: list[SentenceRange] = []
    start = 0
    for b in breaks + [n]:
        begin, end = start, b
        while begin < end and text[begin].isspace():
            begin += 1
        while end > begin and text[end - 1].isspace():
            end -= 1
        if begin < end:
            ranges.append(SentenceRange(begin, end))
        start = b
    return ranges


def _is_punct(ch: str) -> bool:
    # Anything that is neither alphanumeric nor whitespace counts as
    # splittable punctuation at token edges.
    return not ch.isalnum()


def tokenize(text: str) -> list[TokenSpan]:
    """Whitespace tokenization with leading/trailing punctuation split off.

    Punctuation characters at the edges of a whitespace-delimited chunk each
    become their own single-character token; interior characters (hyphens,
    slashes, apostrophes) stay attached, which keeps biomedical names like
    "p53-dependent" or "BRCA1/2" whole.
    """
    tokens: list[TokenSpan] = []
    for m in re.finditer(r"\S+", text):
        s, e = m.span()
        while s < e and _is_punct(text[s]):
            tokens.append(TokenSpan(s, s + 1, text[s]))
            s += 1
        trailing: list[TokenSpan] = []
        while e > s and _is_punct(text[e - 1]):
            trailing.append(TokenSpan(e - 1, e, text[e - 1]))
            e -= 1
        if s < e:
            tokens.append(TokenSpan(s, e, text[s:e]))
        tokens.extend(reversed(trailing))
    return tokens


# --- PubTator interchange format ---------------------------------------
#
# Per document:   <pmid>|t|<title>
#                 <pmid>|a|<abstract>
#                 <pmid>\t<begin>\t<end>\t<surface>\t<type>\t<cui[,cui...]>   (0+ lines)
#                 (blank line)
# The cui field is "-" for unmapped mentions.  Offsets are Unicode-scalar
# offsets into title + " " + abstract.

_TITLE_RE = re.compile(r"^([^|]+)\|t\|(.*)$")
_ABSTRACT_RE = re.compile(r"^([^|]+)\|a\|(.*)$")


def parse_pubtator(lines: Iterable[str]) -> list[GoldDocument]:
    """Parse a PubTator stream into documents, validating offsets.

    Raises MalformedLine for structural problems (field counts, non-integer
    offsets, missing title/abstract lines) and OffsetMismatch when an
    annotation's surface does not equal its text slice.
    """
    docs: list[GoldDocument] = []
    block: list[tuple[int, str]] = []
    line_no = 0
    for raw in lines:
        line_no += 1
        line = raw.rstrip("\r\n")
        if line == "":
            if block:
                docs.append(_parse_block(block))
                block = []
        else:
            block.append((line_no, line))
    if block:
        docs.append(_parse_block(block))
    return docs


def _parse_block(block: list[tuple[int, str]]) -> GoldDocument:
    no, first = block[0]
    m = _TITLE_RE.match(first)
    if not m:
        raise MalformedLine(no, "expected '<pmid>|t|<title>'")
    doc_id, title = m.group(1), m.group(2)

    if len(block) < 2:
        raise MalformedLine(no, "document block has no abstract line")
    no_a, second = block[1]
    m = _ABSTRACT_RE.match(second)
    if not m:
        raise MalformedLine(no_a, "expected '<pmid>|a|<abstract>'")
    if m.group(1) != doc_id:
        raise MalformedLine(no_a, f"abstract pmid {m.group(1)!r} != title pmid {doc_id!r}")
    abstract = m.group(2)

    text = title + " " + abstract
    gold: list[GoldMention] = []
    for no_x, line in block[2:]:
        fields = line.split("\t")
        if len(fields) != 6:
            raise MalformedLine(no_x, f"expected 6 tab-separated fields, got {len(fields)}")
        pmid, begin_s, end_s, surface, etype, cui_field = fields
        if pmid != doc_id:
            raise MalformedLine(no_x, f"annotation pmid {pmid!r} != document pmid {doc_id!r}")
        try:
            begin, end = int(begin_s), int(end_s)
        except ValueError:
            raise MalformedLine(no_x, f"non-integer offsets {begin_s!r}, {end_s!r}") from None
        if not (0 <= begin < end <= len(text)) or text[begin:end] != surface:
            raise OffsetMismatch(doc_id, no_x, f"[{begin},{end}) vs {surface!r}")
        cuis = () if cui_field == "-" else tuple(cui_field.split(","))
        gold.append(GoldMention(begin, end, surface, etype, cuis))
    return GoldDocument(doc_id, title, abstract, tuple(gold))


def serialize_pubtator(docs: Iterable[GoldDocument]) -> str:
    """Render documents in PubTator format; inverse of parse_pubtator."""
    out: list[str] = []
    for doc in docs:
        out.append(f"{doc.doc_id}|t|{doc.title}")
        out.append(f"{doc.doc_id}|a|{doc.abstract_text}")
        for g in doc.gold:
            cui_field = ",".join(g.cuis) if g.cuis else "-"
            out.append(
                f"{doc.doc_id}\t{g.begin}\t{g.end}\t{g.surface}\t{g.etype}\t{cui_field}"
            )
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def iter_pubtator_file(path: str) -> Iterator[GoldDocument]:
    with open(path, encoding="utf-8") as fh:
        yield from parse_pubtator(fh)
