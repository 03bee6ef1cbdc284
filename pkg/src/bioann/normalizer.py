"""Hybrid entity normalization: a rule cascade over per-type lexicons with a
dense-retrieval fallback over a dictionary embedding matrix.

Rule lookups are tried first and never touch the encoder; only mentions the
rules cannot resolve go to dense retrieval, and only for the entity types
that have a neural path (gene, disease, drug).  Every result carries its
provenance so callers can tell the two apart.
"""

from __future__ import annotations

import re
import struct
import threading
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np
import requests

from bioann import kernels
from bioann.errors import (
    BackendUnavailable,
    EmptyIndex,
    EmptyLexicon,
    MalformedLine,
    ProtocolViolation,
)
from bioann.model import EntityType, Normalization

# Entity types with a dense-retrieval fallback; all others are rule-only.
NEURAL_TYPES = frozenset({EntityType.GENE, EntityType.DISEASE, EntityType.DRUG})

DEFAULT_TAU = 0.6
DEFAULT_DIM = 256

GREEK_LETTERS = {
    "α": "alpha", "β": "beta", "γ": "gamma", "δ": "delta", "ε": "epsilon",
    "ζ": "zeta", "η": "eta", "θ": "theta", "ι": "iota", "κ": "kappa",
    "λ": "lambda", "μ": "mu", "ν": "nu", "ξ": "xi", "ο": "omicron",
    "π": "pi", "ρ": "rho", "σ": "sigma", "ς": "sigma", "τ": "tau",
    "υ": "upsilon", "φ": "phi", "χ": "chi", "ψ": "psi", "ω": "omega",
}
_GREEK_TRANS = str.maketrans(GREEK_LETTERS)

_COLLAPSE_RE = re.compile(r"[\s\-‐-―]+")


def _strip_punct(s: str) -> str:
    start, end = 0, len(s)
    while start < end and not s[start].isalnum():
        start += 1
    while end > start and not s[end - 1].isalnum():
        end -= 1
    return s[start:end]


def normalize_keys(name: str) -> list[str]:
    """Lookup-key cascade for a mention, most specific first.

    Stages build on each other: lowercase; strip edge punctuation; collapse
    whitespace/hyphens; drop a trailing plural 's' from the last word; spell
    out Greek letters.  Duplicates are removed, order preserved.
    """
    keys: list[str] = []

    def push(k: str) -> str:
        if k and k not in keys:
            keys.append(k)
        return k

    k = push(name.lower())
    k = push(_strip_punct(k))
    k = push(_COLLAPSE_RE.sub(" ", k).strip())
    words = k.split(" ")
    if words and len(words[-1]) > 3 and words[-1].endswith("s"):
        k = push(" ".join(words[:-1] + [words[-1][:-1]]))
    push(k.translate(_GREEK_TRANS))
    return keys


@dataclass(frozen=True)
class Lexicon:
    """Per-type name dictionary: lowercased name -> CUIs, plus a canonical
    name per CUI."""

    etype: EntityType
    entries: Mapping[str, tuple[str, ...]]
    canonical: Mapping[str, str]

    @classmethod
    def from_rows(
        cls, etype: EntityType, rows: Iterable[tuple[str, str, bool]]
    ) -> "Lexicon":
        """Build from (cui, name, is_canonical) rows.

        Names are stored lowercased.  A CUI with no canonical row falls back
        to its first listed name.
        """
        entries: dict[str, list[str]] = {}
        canonical: dict[str, str] = {}
        first_name: dict[str, str] = {}
        for cui, name, is_canonical in rows:
            key = name.lower()
            cuis = entries.setdefault(key, [])
            if cui not in cuis:
                cuis.append(cui)
            first_name.setdefault(cui, key)
            if is_canonical:
                canonical.setdefault(cui, key)
        for cui, name in first_name.items():
            canonical.setdefault(cui, name)
        return cls(etype, {k: tuple(v) for k, v in entries.items()}, canonical)

    @classmethod
    def from_tsv(cls, etype: EntityType, lines: Iterable[str], source: str = "<lexicon>") -> "Lexicon":
        """Parse tab-separated ``<cui>\\t<name>\\t<canonical-flag 0|1>`` lines."""
        rows: list[tuple[str, str, bool]] = []
        for line_no, raw in enumerate(lines, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise MalformedLine(line_no, f"{source}: expected 3 tab-separated fields")
            cui, name, flag = fields
            if flag not in ("0", "1"):
                raise MalformedLine(line_no, f"{source}: canonical flag must be 0 or 1")
            if not cui or not name:
                raise MalformedLine(line_no, f"{source}: empty cui or name")
            rows.append((cui, name, flag == "1"))
        return cls.from_rows(etype, rows)

    @classmethod
    def from_file(cls, etype: EntityType, path: str) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.from_tsv(etype, fh, source=path)

    def __len__(self) -> int:
        return len(self.entries)

    def name_cui_pairs(self) -> list[tuple[str, str]]:
        """All (name, cui) pairs including synonyms, sorted for determinism."""
        return sorted(
            (name, cui) for name, cuis in self.entries.items() for cui in cuis
        )


_SEED_FILES = {
    EntityType.GENE: "lexicon_gene.tsv",
    EntityType.DISEASE: "lexicon_disease.tsv",
    EntityType.DRUG: "lexicon_drug.tsv",
    EntityType.SPECIES: "lexicon_species.tsv",
    EntityType.CELL_LINE: "lexicon_cell_line.tsv",
    EntityType.CELL_TYPE: "lexicon_cell_type.tsv",
    EntityType.DNA: "lexicon_dna.tsv",
    EntityType.RNA: "lexicon_rna.tsv",
}


def load_seed_lexicon(etype: EntityType) -> Lexicon:
    """Load the lexicon shipped with the package for one entity type."""
    fname = _SEED_FILES.get(etype)
    if fname is None:
        raise EmptyLexicon(f"no seed lexicon for {etype.value}")
    text = resources.files("bioann").joinpath(f"resources/{fname}").read_text("utf-8")
    return Lexicon.from_tsv(etype, text.splitlines(), source=fname)


def load_seed_lexicons(
    types: Iterable[EntityType] | None = None,
) -> dict[EntityType, Lexicon]:
    wanted = set(types) if types is not None else set(_SEED_FILES)
    return {t: load_seed_lexicon(t) for t in wanted if t in _SEED_FILES}


class Encoder(Protocol):
    """Deterministic text-to-unit-vector contract used for dense retrieval."""

    @property
    def dim(self) -> int: ...

    def embed(self, name: str) -> np.ndarray: ...

    def embed_batch(self, names: Sequence[str]) -> np.ndarray: ...


class HashingEncoder:
    """Deterministic character n-gram hashing encoder.

    Lowercases the input, brackets it with boundary markers, extracts all
    1/2/3-grams of the UTF-8 bytes, hashes each gram to a slot and a sign,
    accumulates, and L2-normalizes.  Similar strings land close in cosine
    space, which is the property dense retrieval relies on.  Never returns
    a zero vector: if accumulation cancels out exactly, component 0 is set
    to 1 before normalizing.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self._dim = dim
        self._lock = threading.Lock()
        self.calls = 0

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, name: str) -> np.ndarray:
        with self._lock:
            self.calls += 1
        data = ("\x02" + name.lower() + "\x03").encode("utf-8")
        v = kernels.ngram_hash_accumulate(data, self._dim)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            v[0] = 1.0
            norm = 1.0
        return v / norm

    def embed_batch(self, names: Sequence[str]) -> np.ndarray:
        out = np.empty((len(names), self._dim), dtype=np.float64)
        for i, name in enumerate(names):
            out[i] = self.embed(name)
        return out


class RemoteEncoder:
    """HTTP client for the encoder wire protocol.

    POSTs ``{"names": [...]}`` to ``<base_url>/embed`` and expects
    ``{"vectors": [[...], ...]}`` with one vector of the configured
    dimension per name.  Vectors are renormalized on receipt.
    """

    def __init__(
        self,
        base_url: str,
        dim: int,
        timeout_s: float = 10.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self._dim = dim
        self.timeout_s = timeout_s
        self._session = session or requests.Session()
        self._lock = threading.Lock()
        self.calls = 0

    @property
    def dim(self) -> int:
        return self._dim

    def embed(self, name: str) -> np.ndarray:
        return self.embed_batch([name])[0]

    def embed_batch(self, names: Sequence[str]) -> np.ndarray:
        with self._lock:
            self.calls += 1
        try:
            resp = self._session.post(
                f"{self.base_url}/embed", json={"names": list(names)}, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"encoder backend unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"encoder backend returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ProtocolViolation(f"encoder reply is not JSON: {exc}") from exc
        vectors = payload.get("vectors") if isinstance(payload, dict) else None
        if not isinstance(vectors, list) or len(vectors) != len(names):
            raise ProtocolViolation("reply must carry one vector per name")
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.shape != (len(names), self._dim):
            raise ProtocolViolation(
                f"expected vectors of dimension {self._dim}, got shape {arr.shape}"
            )
        norms = np.linalg.norm(arr, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-3) or not np.all(np.isfinite(arr)):
            raise ProtocolViolation("vectors must be unit-norm")
        return arr / norms[:, None]


def handle_embed_request(encoder: Encoder, body: object) -> tuple[int, dict]:
    """Server side of the encoder wire protocol over any encoder."""
    if not isinstance(body, dict):
        return 400, {"error": "body must be a JSON object"}
    names = body.get("names")
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        return 400, {"error": "'names' must be a list of strings"}
    vectors = encoder.embed_batch(names) if names else np.zeros((0, encoder.dim))
    return 200, {"vectors": [[float(x) for x in row] for row in vectors]}


INDEX_MAGIC = b"BIDX1"


@dataclass(frozen=True, eq=False)
class EmbeddingIndex:
    """Aligned dictionary names, CUIs, and their unit-row embedding matrix."""

    names: tuple[str, ...]
    cuis: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        if not (len(self.names) == len(self.cuis) == self.matrix.shape[0]):
            raise ValueError("names, cuis, and matrix rows must align")
        object.__setattr__(
            self, "matrix", np.ascontiguousarray(self.matrix, dtype=np.float64)
        )
        self.matrix.flags.writeable = False

    def __len__(self) -> int:
        return len(self.names)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def save(self, path: str) -> None:
        """Write the deterministic on-disk form: magic, u32 dim, u32 rows,
        length-prefixed name/cui table, then the row-major little-endian
        f32 matrix."""
        with open(path, "wb") as fh:
            fh.write(INDEX_MAGIC)
            fh.write(struct.pack("<II", self.dim, len(self.names)))
            for name, cui in zip(self.names, self.cuis):
                nb = name.encode("utf-8")
                cb = cui.encode("utf-8")
                fh.write(struct.pack("<II", len(nb), len(cb)))
                fh.write(nb)
                fh.write(cb)
            fh.write(self.matrix.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str) -> "EmbeddingIndex":
        with open(path, "rb") as fh:
            magic = fh.read(len(INDEX_MAGIC))
            if magic != INDEX_MAGIC:
                raise ValueError(f"{path}: not an embedding index file")
            dim, n = struct.unpack("<II", fh.read(8))
            names: list[str] = []
            cuis: list[str] = []
            for _ in range(n):
                ln, lc = struct.unpack("<II", fh.read(8))
                names.append(fh.read(ln).decode("utf-8"))
                cuis.append(fh.read(lc).decode("utf-8"))
            raw = fh.read(4 * dim * n)
            matrix = np.frombuffer(raw, dtype="<f4").reshape(n, dim).astype(np.float64)
        # f32 rounding perturbs row norms; restore exact unit rows.
        norms = np.linalg.norm(matrix, axis=1)
        norms[norms == 0.0] = 1.0
        return cls(tuple(names), tuple(cuis), matrix / norms[:, None])


def build_index(lex: Lexicon, enc: Encoder) -> EmbeddingIndex:
    """Embed every (name, cui) pair of a lexicon, synonyms included.

    Rows are ordered by (name, cui) so the build is deterministic for a
    given lexicon.
    """
    pairs = lex.name_cui_pairs()
    if not pairs:
        raise EmptyLexicon(f"lexicon for {lex.etype.value} has no entries")
    names = tuple(p[0] for p in pairs)
    cuis = tuple(p[1] for p in pairs)
    matrix = enc.embed_batch(names)
    return EmbeddingIndex(names, cuis, matrix)


def rule_normalize(
    mention: str, lex: Lexicon
) -> tuple[tuple[str, ...], str] | None:
    """Look the mention up via the key cascade; first hit wins."""
    for key in normalize_keys(mention):
        cuis = lex.entries.get(key)
        if cuis:
            return cuis, key
    return None


def dense_retrieve(
    mention: str, idx: EmbeddingIndex, enc: Encoder, k: int
) -> list[tuple[str, str, float]]:
    """Top-k dictionary rows by inner product with the mention embedding.

    Rows are unit-norm, so scores are cosines.  Ties break toward the lowest
    row index.  Returns (cui, name, score) in descending score order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(idx) == 0:
        raise EmptyIndex("cannot retrieve from an empty index")
    q = enc.embed(mention)
    scores = idx.matrix @ q
    order = np.argsort(-scores, kind="stable")[:k]
    return [(idx.cuis[i], idx.names[i], float(scores[i])) for i in order]


def hybrid_normalize(
    mention: str,
    etype: EntityType,
    lex: Lexicon | None,
    idx: EmbeddingIndex | None,
    enc: Encoder | None,
    tau: float = DEFAULT_TAU,
) -> Normalization:
    """Rule cascade first; dense retrieval fallback for neural-path types.

    Rule hits never invoke the encoder.  The fallback returns the top-1 CUI
    only when its cosine clears ``tau``; everything else is unmapped.
    """
    if not (-1.0 <= tau <= 1.0):
        raise ValueError(f"tau must be in [-1, 1], got {tau}")
    if lex is not None:
        hit = rule_normalize(mention, lex)
        if hit is not None:
            return Normalization.rule(hit[0])
    if etype in NEURAL_TYPES and idx is not None and enc is not None and len(idx) > 0:
        cui, _name, score = dense_retrieve(mention, idx, enc, k=1)[0]
        if score >= tau:
            return Normalization.neural(cui, score)
    return Normalization.unmapped()


class HybridNormalizer:
    """Bundles per-type lexicons, the encoder, and lazily built indexes."""

    def __init__(
        self,
        lexicons: Mapping[EntityType, Lexicon],
        encoder: Encoder | None = None,
        taus: Mapping[EntityType, float] | None = None,
        default_tau: float = DEFAULT_TAU,
    ):
        self.lexicons = dict(lexicons)
        self.encoder = encoder
        self.taus = dict(taus or {})
        self.default_tau = default_tau
        self._indexes: dict[EntityType, EmbeddingIndex] = {}

    def tau_for(self, etype: EntityType) -> float:
        return self.taus.get(etype, self.default_tau)

    def index_for(self, etype: EntityType) -> EmbeddingIndex | None:
        if etype not in NEURAL_TYPES or self.encoder is None:
            return None
        if etype not in self._indexes:
            lex = self.lexicons.get(etype)
            if lex is None or not lex.entries:
                return None
            self._indexes[etype] = build_index(lex, self.encoder)
        return self._indexes[etype]

    def prebuild(self) -> None:
        """Build all neural-path indexes up front."""
        for etype in NEURAL_TYPES:
            self.index_for(etype)

    def normalize(self, mention: str, etype: EntityType) -> Normalization:
        if etype is EntityType.MUTATION:
            return Normalization.unmapped()
        lex = self.lexicons.get(etype)
        if lex is not None:
            hit = rule_normalize(mention, lex)
            if hit is not None:
                # Rule hits must not touch the encoder, so the index is not
                # even looked up (a first lookup would build it).
                return Normalization.rule(hit[0])
        if etype in NEURAL_TYPES and self.encoder is not None:
            idx = self.index_for(etype)
            if idx is not None and len(idx) > 0:
                cui, _name, score = dense_retrieve(mention, idx, self.encoder, k=1)[0]
                if score >= self.tau_for(etype):
                    return Normalization.neural(cui, score)
        return Normalization.unmapped()
