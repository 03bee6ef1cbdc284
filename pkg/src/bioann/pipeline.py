"""End-to-end orchestration: text to tokens to tags to mentions to
normalized annotations, plus the PMID path through the cache.

One ``tag()`` backend call is issued per token window and covers every
enabled non-mutation head at once; mutation mentions come from the pattern
recognizer over the raw text and bypass normalization.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Mapping

from bioann.errors import ConfigError, InputTooLarge
from bioann.ingest import Fetcher
from bioann.model import (
    Annotation,
    AnnotationResult,
    Document,
    EntityType,
    Mention,
    is_valid_pmid,
    sort_annotations,
)
from bioann.normalizer import (
    DEFAULT_DIM,
    DEFAULT_TAU,
    Encoder,
    HashingEncoder,
    HybridNormalizer,
    Lexicon,
    RemoteEncoder,
    load_seed_lexicons,
)
from bioann.store import AnnotationStore, CacheRecord
from bioann.tagger import (
    GazetteerTagger,
    OverlapPolicy,
    RemoteTagger,
    TaggerBackend,
    chunk_tokens,
    decode_bio,
    recognize_mutations,
    resolve_overlaps,
)
from bioann.textproc import segment_sentences, tokenize
from bioann.wire import canonical_json, result_from_payload, result_payload

PIPELINE_VERSION = "bioann-0.1.0"

DEFAULT_MAX_LEN = 256
DEFAULT_MAX_CHARS = 100_000

ALL_TYPES = frozenset(EntityType)


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that determines pipeline behavior.

    ``backend`` selects the tagger ("gazetteer" or "remote"); gazetteer
    phrases are derived from the lexicon names.  ``lexicon_paths`` maps
    entity type names to TSV files; types not listed use the packaged seed
    lexicons.
    """

    enabled_types: frozenset[EntityType] = ALL_TYPES
    overlap_policy: OverlapPolicy = OverlapPolicy.KEEP_ALL
    tau_default: float = DEFAULT_TAU
    taus: Mapping[EntityType, float] = field(default_factory=dict)
    max_len: int = DEFAULT_MAX_LEN
    max_chars: int = DEFAULT_MAX_CHARS
    backend: str = "gazetteer"
    remote_tagger_url: str | None = None
    remote_encoder_url: str | None = None
    encoder_dim: int = DEFAULT_DIM
    lexicon_paths: Mapping[str, str] = field(default_factory=dict)
    store_path: str = "bioann_store.log"
    fetcher: Mapping[str, object] = field(default_factory=dict)
    pipeline_version: str = PIPELINE_VERSION

    def __post_init__(self):
        if not self.enabled_types:
            raise ConfigError("enabled_types must be nonempty")
        if not self.pipeline_version:
            raise ConfigError("pipeline_version must be nonempty")
        if self.backend not in ("gazetteer", "remote"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.remote_tagger_url:
            raise ConfigError("remote backend requires remote_tagger_url")
        if self.max_len < 16:
            raise ConfigError("max_len must be >= 16")

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "PipelineConfig":
        try:
            kwargs: dict = {}
            if "enabled_types" in d:
                kwargs["enabled_types"] = frozenset(
                    EntityType.from_name(t) for t in d["enabled_types"]
                )
            if "overlap_policy" in d:
                kwargs["overlap_policy"] = OverlapPolicy(d["overlap_policy"])
            if "tau" in d:
                taus = dict(d["tau"])
                kwargs["tau_default"] = float(taus.pop("default", DEFAULT_TAU))
                kwargs["taus"] = {
                    EntityType.from_name(t): float(v) for t, v in taus.items()
                }
            for key in (
                "max_len",
                "max_chars",
                "backend",
                "remote_tagger_url",
                "remote_encoder_url",
                "encoder_dim",
                "lexicon_paths",
                "store_path",
                "fetcher",
                "pipeline_version",
            ):
                if key in d:
                    kwargs[key] = d[key]
            return cls(**kwargs)
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"invalid pipeline config: {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls.from_dict(data)


def load_lexicons(cfg: PipelineConfig) -> dict[EntityType, Lexicon]:
    lexicons = load_seed_lexicons()
    for type_name, path in cfg.lexicon_paths.items():
        etype = EntityType.from_name(type_name)
        lexicons[etype] = Lexicon.from_file(etype, path)
    return lexicons


class Pipeline:
    """Shared immutable models plus the two annotation entry points."""

    def __init__(
        self,
        cfg: PipelineConfig,
        backend: TaggerBackend | None = None,
        encoder: Encoder | None = None,
        lexicons: Mapping[EntityType, Lexicon] | None = None,
    ):
        self.cfg = cfg
        self.lexicons = dict(lexicons) if lexicons is not None else load_lexicons(cfg)

        if backend is not None:
            self.backend = backend
        elif cfg.backend == "remote":
            self.backend = RemoteTagger(cfg.remote_tagger_url)
        else:
            self.backend = GazetteerTagger.from_names(
                {t: list(lex.entries) for t, lex in self.lexicons.items()}
            )

        if encoder is not None:
            self.encoder = encoder
        elif cfg.remote_encoder_url:
            self.encoder = RemoteEncoder(cfg.remote_encoder_url, cfg.encoder_dim)
        else:
            self.encoder = HashingEncoder(cfg.encoder_dim)

        self.normalizer = HybridNormalizer(
            self.lexicons, self.encoder, cfg.taus, cfg.tau_default
        )

    def annotate_text(self, doc: Document) -> AnnotationResult:
        """Annotate plain text deterministically; timing is wall-clock."""
        cfg = self.cfg
        if len(doc.text) > cfg.max_chars:
            raise InputTooLarge(
                f"document has {len(doc.text)} chars (cap {cfg.max_chars})"
            )
        t0 = time.perf_counter()

        text = doc.text
        tokens = tokenize(text)
        sentences = segment_sentences(text)
        head_types = {t for t in cfg.enabled_types if t is not EntityType.MUTATION}

        mentions: list[Mention] = []
        if head_types:
            for window in chunk_tokens(tokens, cfg.max_len, sentences):
                heads = self.backend.tag(window, head_types)
                for etype in sorted(head_types, key=lambda t: t.value):
                    mentions.extend(decode_bio(heads[etype], window, text))
        if EntityType.MUTATION in cfg.enabled_types:
            mentions.extend(recognize_mutations(text))

        mentions = resolve_overlaps(mentions, cfg.overlap_policy)
        annotations = sort_annotations(
            Annotation(m, self.normalizer.normalize(m.surface, m.etype))
            for m in mentions
        )
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        return AnnotationResult(doc, annotations, elapsed_ms, cfg.pipeline_version)

    def annotate_pmid(
        self, pmid: str, store: AnnotationStore, fetcher: Fetcher
    ) -> AnnotationResult:
        """Serve from the cache when possible; fetch, annotate, and persist
        otherwise.  Records written by a different pipeline version are
        treated as misses and overwritten."""
        if not is_valid_pmid(pmid):
            raise ValueError(f"pmid must be a digit string, got {pmid!r}")
        t0 = time.perf_counter()
        record = store.get(pmid)
        if record is not None and record.pipeline_version == self.cfg.pipeline_version:
            elapsed_ms = (time.perf_counter() - t0) * 1000.0
            return result_from_payload(json.loads(record.payload), elapsed_ms)

        doc = fetcher.fetch(pmid)
        result = self.annotate_text(doc)
        payload = canonical_json(result_payload(result))
        store.put(CacheRecord.make(pmid, payload, self.cfg.pipeline_version))
        return result
