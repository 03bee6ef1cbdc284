"""Exception hierarchy for the annotation pipeline."""

from __future__ import annotations


class BioAnnError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(BioAnnError):
    """Invalid or unreadable pipeline configuration."""


class MalformedLine(BioAnnError):
    """A corpus line that does not follow the PubTator format."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class OffsetMismatch(BioAnnError):
    """An annotation surface that does not match its text slice."""

    def __init__(self, doc_id: str, line_no: int, detail: str = ""):
        msg = f"doc {doc_id}, line {line_no}: annotation does not match text slice"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.doc_id = doc_id
        self.line_no = line_no


class LengthMismatch(BioAnnError):
    """Probability rows and token list disagree in length."""


class BackendUnavailable(BioAnnError):
    """The tagging backend could not be reached."""


class ProtocolViolation(BioAnnError):
    """A remote backend reply that breaks the wire contract."""


class EmptyLexicon(BioAnnError):
    """Index construction attempted over a lexicon with no entries."""


class EmptyIndex(BioAnnError):
    """Dense retrieval attempted against an empty embedding index."""


class InputTooLarge(BioAnnError):
    """Input document exceeds the configured character cap."""


class PmidNotFound(BioAnnError):
    """The upstream source has no article for the requested PMID."""


class FetchFailed(BioAnnError):
    """Network failure fetching an abstract, after retries."""


class MalformedResponse(BioAnnError):
    """Upstream response that could not be parsed."""


class StoreCorrupt(BioAnnError):
    """The annotation store file is unreadable."""


class IoFailure(BioAnnError):
    """An I/O error while writing to the annotation store."""


class EmptyEvaluation(BioAnnError):
    """Accuracy requested over zero evaluation items."""
