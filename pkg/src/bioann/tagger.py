"""Multi-head tagging backends, BIO decoding, overlap resolution, and the
pattern-based mutation recognizer.

A backend answers every requested entity head from a single ``tag()`` call;
decoding turns per-token B/I/O probability rows into typed mentions.
"""

from __future__ import annotations

import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
import requests

from bioann import kernels
from bioann.errors import BackendUnavailable, LengthMismatch, ProtocolViolation
from bioann.model import EntityType, Mention, TokenSpan
from bioann.textproc import SentenceRange, tokenize

# Match probabilities for the gazetteer backend: winning label gets 0.99,
# the remaining mass is split between the other two labels.
_P_HIT = 0.99
_P_REST = 0.005

# Cross-type tie-break order for overlap resolution, highest priority first.
TYPE_PRIORITY: dict[EntityType, int] = {
    t: rank
    for rank, t in enumerate(
        [
            EntityType.RNA,
            EntityType.DNA,
            EntityType.CELL_TYPE,
            EntityType.CELL_LINE,
            EntityType.MUTATION,
            EntityType.SPECIES,
            EntityType.DRUG,
            EntityType.DISEASE,
            EntityType.GENE,
        ]
    )
}


class OverlapPolicy(Enum):
    KEEP_ALL = "keep_all"
    LONGEST_WINS = "longest_wins"


@dataclass(frozen=True, eq=False)
class TagProbSeq:
    """Per-token (p_B, p_I, p_O) rows for one entity type.

    ``rows`` is an (n, 3) float64 array; every row sums to 1 within 1e-6.
    """

    etype: EntityType
    rows: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.ascontiguousarray(self.rows, dtype=np.float64))
        if self.rows.ndim != 2 or self.rows.shape[1] != 3:
            raise ValueError(f"rows must be (n, 3), got {self.rows.shape}")
        self.rows.flags.writeable = False

    def check(self) -> None:
        if self.rows.size == 0:
            return
        if np.any(self.rows < 0) or np.any(self.rows > 1):
            raise ValueError("probabilities outside [0, 1]")
        sums = self.rows.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-6:
            raise ValueError("rows must sum to 1 within 1e-6")


class TaggerBackend(Protocol):
    """Multi-head contract: all requested heads answered in one call,
    deterministically.  Mutation is never a requested type (it has its own
    pattern-based path)."""

    def tag(
        self, tokens: Sequence[TokenSpan], types: Iterable[EntityType]
    ) -> dict[EntityType, TagProbSeq]: ...


def _phrase_key(surface: str) -> str:
    return surface.lower()


class GazetteerTagger:
    """Deterministic dictionary backend: longest case-insensitive phrase
    match wins at each start token.

    Stands in for a neural model wherever the test suite needs a hermetic,
    reproducible backend; also useful as a cheap baseline tagger.
    """

    def __init__(self, phrases: Mapping[EntityType, Iterable[Sequence[str]]]):
        # type -> first token -> phrases (token tuples) sorted longest first
        self._by_type: dict[EntityType, dict[str, list[tuple[str, ...]]]] = {}
        for etype, phrase_list in phrases.items():
            buckets: dict[str, list[tuple[str, ...]]] = {}
            for phrase in phrase_list:
                toks = tuple(_phrase_key(t) for t in phrase)
                if not toks:
                    continue
                buckets.setdefault(toks[0], []).append(toks)
            for cands in buckets.values():
                cands.sort(key=len, reverse=True)
            self._by_type[etype] = buckets
        self._lock = threading.Lock()
        self.calls = 0

    @classmethod
    def from_names(cls, names: Mapping[EntityType, Iterable[str]]) -> "GazetteerTagger":
        """Build from plain name strings, tokenizing each into a phrase."""
        phrases = {
            etype: [[t.surface for t in tokenize(name)] for name in name_list]
            for etype, name_list in names.items()
        }
        return cls(phrases)

    def tag(
        self, tokens: Sequence[TokenSpan], types: Iterable[EntityType]
    ) -> dict[EntityType, TagProbSeq]:
        with self._lock:
            self.calls += 1
        surfaces = [_phrase_key(t.surface) for t in tokens]
        n = len(surfaces)
        out: dict[EntityType, TagProbSeq] = {}
        for etype in sorted(types, key=lambda t: t.value):
            if etype is EntityType.MUTATION:
                raise ValueError("mutation tagging goes through recognize_mutations()")
            rows = np.full((n, 3), _P_REST, dtype=np.float64)
            rows[:, 2] = _P_HIT
            buckets = self._by_type.get(etype, {})
            i = 0
            while i < n:
                match_len = 0
                for cand in buckets.get(surfaces[i], ()):
                    if len(cand) <= n - i and tuple(surfaces[i : i + len(cand)]) == cand:
                        match_len = len(cand)
                        break  # candidates are longest-first
                if match_len:
                    rows[i] = (_P_HIT, _P_REST, _P_REST)
                    for j in range(i + 1, i + match_len):
                        rows[j] = (_P_REST, _P_HIT, _P_REST)
                    i += match_len
                else:
                    i += 1
            out[etype] = TagProbSeq(etype, rows)
        return out


class RemoteTagger:
    """HTTP client for the tagging wire protocol.

    POSTs ``{"tokens": [...], "types": [...]}`` to ``<base_url>/tag`` and
    expects ``{"heads": {"<type>": [[pB, pI, pO], ...]}}`` with one row per
    token for every requested head.  Row sums are renormalized (tolerance
    1e-3) so downstream invariants hold exactly.
    """

    def __init__(self, base_url: str, timeout_s: float = 10.0, session: requests.Session | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._lock = threading.Lock()
        self.calls = 0

    def tag(
        self, tokens: Sequence[TokenSpan], types: Iterable[EntityType]
    ) -> dict[EntityType, TagProbSeq]:
        with self._lock:
            self.calls += 1
        requested = sorted(set(types), key=lambda t: t.value)
        if EntityType.MUTATION in requested:
            raise ValueError("mutation tagging goes through recognize_mutations()")
        body = {
            "tokens": [t.surface for t in tokens],
            "types": [t.value for t in requested],
        }
        try:
            resp = self._session.post(f"{self.base_url}/tag", json=body, timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise BackendUnavailable(f"tagger backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"tagger backend returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"tagger reply is not JSON: {exc}") from exc
        return parse_tag_response(payload, len(tokens), requested)

    def ping(self) -> bool:
        try:
            self.tag([], [EntityType.GENE])
            return True
        except (BackendUnavailable, ProtocolViolation):
            return False


def parse_tag_response(
    payload: object, n_tokens: int, requested: Sequence[EntityType]
) -> dict[EntityType, TagProbSeq]:
    """Validate a wire-protocol reply into TagProbSeq per requested head."""
    if not isinstance(payload, dict) or not isinstance(payload.get("heads"), dict):
        raise ProtocolViolation("reply missing 'heads' object")
    heads = payload["heads"]
    out: dict[EntityType, TagProbSeq] = {}
    for etype in requested:
        rows = heads.get(etype.value)
        if rows is None:
            raise ProtocolViolation(f"reply missing head {etype.value!r}")
        if len(rows) != n_tokens:
            raise ProtocolViolation(
                f"head {etype.value!r} has {len(rows)} rows for {n_tokens} tokens"
            )
        arr = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
        if rows and arr.shape[1] != 3:
            raise ProtocolViolation(f"head {etype.value!r} rows are not triples")
        if rows:
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ProtocolViolation(f"head {etype.value!r} has invalid probabilities")
            sums = arr.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-3):
                raise ProtocolViolation(f"head {etype.value!r} rows do not sum to 1")
            arr = arr / sums[:, None]
        else:
            arr = np.zeros((0, 3), dtype=np.float64)
        out[etype] = TagProbSeq(etype, arr)
    return out


def handle_tag_request(backend: TaggerBackend, body: object) -> tuple[int, dict]:
    """Server side of the tagging wire protocol over any backend.

    Returns (status, reply body).  Used by test stub servers and by
    conformance checks; the real HTTP framing is up to the caller.
    """
    if not isinstance(body, dict):
        return 400, {"error": "body must be a JSON object"}
    tokens = body.get("tokens")
    types = body.get("types")
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        return 400, {"error": "'tokens' must be a list of strings"}
    if not isinstance(types, list) or not all(isinstance(t, str) for t in types):
        return 400, {"error": "'types' must be a list of strings"}
    try:
        etypes = [EntityType.from_name(t) for t in types]
    except ValueError as exc:
        return 400, {"error": str(exc)}
    if EntityType.MUTATION in etypes:
        return 400, {"error": "mutation is not a taggable head"}
    spans = []
    pos = 0
    for t in tokens:  # synthetic offsets; backends only read surfaces
        spans.append(TokenSpan(pos, pos + max(len(t), 1), t))
        pos += max(len(t), 1) + 1
    result = backend.tag(spans, etypes)
    heads = {
        etype.value: [[float(x) for x in row] for row in seq.rows]
        for etype, seq in result.items()
    }
    return 200, {"heads": heads}


def decode_bio(seq: TagProbSeq, tokens: Sequence[TokenSpan], text: str) -> list[Mention]:
    """Decode one head's probability rows into mentions.

    Label per token is the row argmax (ties B > I > O); maximal B I* runs
    become mentions, an orphan I is repaired to B, and a mention's
    probability is the minimum winning probability over its tokens.
    """
    if seq.rows.shape[0] != len(tokens):
        raise LengthMismatch(
            f"{seq.rows.shape[0]} probability rows for {len(tokens)} tokens"
        )
    mentions = []
    for start, end, prob in kernels.bio_decode_runs(seq.rows):
        begin = tokens[start].begin
        stop = tokens[end - 1].end
        mentions.append(Mention(begin, stop, text[begin:stop], seq.etype, float(prob)))
    return mentions


def _mention_sort_key(m: Mention) -> tuple[int, int, str]:
    return (m.begin, m.end, m.etype.value)


def resolve_overlaps(
    mentions: Sequence[Mention], policy: OverlapPolicy = OverlapPolicy.KEEP_ALL
) -> list[Mention]:
    """Resolve cross-type span conflicts.

    KEEP_ALL returns the input sorted.  LONGEST_WINS drops any mention
    contained in a longer mention of a different type; equal spans are
    decided by the fixed type-priority order (gene highest).
    """
    ordered = sorted(mentions, key=_mention_sort_key)
    if policy is OverlapPolicy.KEEP_ALL:
        return ordered

    def dominated(m: Mention) -> bool:
        for other in ordered:
            if other.etype is m.etype:
                continue
            if other.begin <= m.begin and m.end <= other.end:
                len_m = m.end - m.begin
                len_o = other.end - other.begin
                if len_o > len_m:
                    return True
                if len_o == len_m and TYPE_PRIORITY[other.etype] > TYPE_PRIORITY[m.etype]:
                    return True
        return False

    return [m for m in ordered if not dominated(m)]


# Pattern-based mutation recognition: protein substitutions (with or without
# the "p." prefix), coding changes, and dbSNP identifiers.  Matches must be
# delimited by non-alphanumeric context.
_AA = "ACDEFGHIKLMNPQRSTVWY"
_MUTATION_RE = re.compile(
    rf"(?<![0-9A-Za-z])"
    rf"(?:p\.[{_AA}][0-9]+[{_AA}]"
    rf"|[{_AA}][0-9]+[{_AA}]"
    rf"|c\.[0-9]+[ACGT]>[ACGT]"
    rf"|rs[0-9]+)"
    rf"(?![0-9A-Za-z])"
)


def recognize_mutations(text: str) -> list[Mention]:
    """Find mutation mentions by pattern; always reported with prob 1.0."""
    return [
        Mention(m.start(), m.end(), m.group(), EntityType.MUTATION, 1.0)
        for m in _MUTATION_RE.finditer(text)
    ]


def chunk_tokens(
    tokens: Sequence[TokenSpan],
    max_len: int,
    sentences: Sequence[SentenceRange] | None = None,
) -> list[list[TokenSpan]]:
    """Partition tokens into windows of at most ``max_len`` tokens.

    Windows prefer sentence boundaries: whole sentences are packed greedily,
    and only sentences longer than ``max_len`` are hard-split.  With no
    sentence information the token list is hard-split directly.
    """
    if max_len < 16:
        raise ValueError(f"max_len must be >= 16, got {max_len}")
    if not tokens:
        return []

    if sentences:
        groups: list[list[TokenSpan]] = []
        si = 0
        current: list[TokenSpan] = []
        for tok in tokens:
            while si < len(sentences) and tok.begin >= sentences[si].end:
                si += 1
                if current:
                    groups.append(current)
                    current = []
            current.append(tok)
        if current:
            groups.append(current)
    else:
        groups = [list(tokens)]

    # Hard-split any group longer than the window size.
    pieces: list[list[TokenSpan]] = []
    for g in groups:
        for i in range(0, len(g), max_len):
            pieces.append(g[i : i + max_len])

    windows: list[list[TokenSpan]] = []
    current = []
    for piece in pieces:
        if current and len(current) + len(piece) > max_len:
            windows.append(current)
            current = []
        current.extend(piece)
    if current:
        windows.append(current)
    return windows
