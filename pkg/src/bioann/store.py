"""Persistent PMID-keyed annotation cache.

An append-only log: magic bytes, then length-prefixed, CRC-checked records.
An in-memory pmid -> file-offset index is rebuilt on open by scanning the
log; a torn tail (from a crash mid-write) is detected and ignored, so any
readable prefix of a log is a consistent store.  Writes are serialized and
flushed before the put is acknowledged.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import threading
import zlib
from dataclasses import dataclass
from datetime import datetime, timezone

from bioann.errors import IoFailure, StoreCorrupt
from bioann.model import is_valid_pmid
from bioann.wire import canonical_json

logger = logging.getLogger(__name__)

MAGIC = b"BANN1"
_HEADER = struct.Struct("<II")  # payload length, CRC32(payload)

# Defensive cap when scanning: a longer length prefix is treated as
# corruption rather than an allocation request.
_MAX_RECORD = 64 * 1024 * 1024


@dataclass(frozen=True, slots=True)
class CacheRecord:
    pmid: str
    payload: str  # canonical JSON of the annotation result, no elapsed_ms
    pipeline_version: str
    stored_at: str  # ISO-8601 UTC

    @classmethod
    def make(cls, pmid: str, payload: str, pipeline_version: str) -> "CacheRecord":
        now = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return cls(pmid, payload, pipeline_version, now)


@dataclass(frozen=True, slots=True)
class CompactStats:
    records_kept: int
    bytes_reclaimed: int


def _encode(record: CacheRecord) -> bytes:
    body = canonical_json(
        {
            "pmid": record.pmid,
            "payload": record.payload,
            "pipeline_version": record.pipeline_version,
            "stored_at": record.stored_at,
        }
    ).encode("utf-8")
    return _HEADER.pack(len(body), zlib.crc32(body)) + body


def _decode_body(body: bytes) -> CacheRecord:
    d = json.loads(body.decode("utf-8"))
    return CacheRecord(d["pmid"], d["payload"], d["pipeline_version"], d["stored_at"])


class AnnotationStore:
    """File-backed cache with last-writer-wins semantics per PMID."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._index: dict[str, tuple[int, int]] = {}  # pmid -> (offset, length)
        self._fd = -1
        self._open()

    def _open(self) -> None:
        exists = os.path.exists(self.path) and os.path.getsize(self.path) > 0
        self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        if not exists:
            os.write(self._fd, MAGIC)
            os.fsync(self._fd)
            self._append_at = len(MAGIC)
            return
        self._index, self._append_at = self._scan()

    def _scan(self) -> tuple[dict[str, tuple[int, int]], int]:
        size = os.fstat(self._fd).st_size
        head = os.pread(self._fd, len(MAGIC), 0)
        if head != MAGIC:
            if MAGIC.startswith(head):
                # Torn during initial creation: no records could exist yet.
                logger.warning("%s: truncated magic, reinitializing empty store", self.path)
                os.ftruncate(self._fd, 0)
                os.pwrite(self._fd, MAGIC, 0)
                os.fsync(self._fd)
                return {}, len(MAGIC)
            raise StoreCorrupt(f"{self.path}: bad magic {head!r}")
        index: dict[str, tuple[int, int]] = {}
        pos = len(MAGIC)
        end_of_valid = pos
        while True:
            header = os.pread(self._fd, _HEADER.size, pos)
            if len(header) < _HEADER.size:
                break  # torn or clean end
            length, crc = _HEADER.unpack(header)
            if length > _MAX_RECORD or pos + _HEADER.size + length > size:
                logger.warning("%s: torn record at offset %d, ignoring tail", self.path, pos)
                break
            body = os.pread(self._fd, length, pos + _HEADER.size)
            record_end = pos + _HEADER.size + length
            if zlib.crc32(body) != crc:
                logger.warning("%s: CRC mismatch at offset %d, skipping record", self.path, pos)
                pos = record_end
                end_of_valid = record_end
                continue
            try:
                record = _decode_body(body)
            except (ValueError, KeyError):
                logger.warning("%s: undecodable record at offset %d, skipping", self.path, pos)
                pos = record_end
                end_of_valid = record_end
                continue
            index[record.pmid] = (pos, length)
            pos = record_end
            end_of_valid = record_end
        return index, end_of_valid

    def get(self, pmid: str) -> CacheRecord | None:
        """Most recently committed record for the PMID, if any."""
        with self._lock:
            loc = self._index.get(pmid)
            if loc is None:
                return None
            offset, length = loc
            header = os.pread(self._fd, _HEADER.size, offset)
            _, crc = _HEADER.unpack(header)
            body = os.pread(self._fd, length, offset + _HEADER.size)
            if len(body) != length or zlib.crc32(body) != crc:
                raise StoreCorrupt(f"{self.path}: record at offset {offset} unreadable")
            return _decode_body(body)

    def put(self, record: CacheRecord) -> None:
        """Append the record; durable once this returns."""
        if not is_valid_pmid(record.pmid):
            raise ValueError(f"invalid pmid {record.pmid!r}")
        frame = _encode(record)
        with self._lock:
            try:
                os.pwrite(self._fd, frame, self._append_at)
                os.fsync(self._fd)
            except OSError as exc:
                raise IoFailure(f"write to {self.path} failed: {exc}") from exc
            self._index[record.pmid] = (self._append_at, len(frame) - _HEADER.size)
            self._append_at += len(frame)

    def __len__(self) -> int:
        with self._lock:
            return len(self._index)

    def pmids(self) -> list[str]:
        with self._lock:
            return sorted(self._index)

    def compact(self) -> CompactStats:
        """Rewrite the log keeping only the latest record per PMID.

        Writes a sibling file then atomically renames it over the log, so an
        interrupted compaction leaves the original store untouched.
        """
        with self._lock:
            old_size = os.fstat(self._fd).st_size
            records = []
            for pmid in sorted(self._index):
                offset, length = self._index[pmid]
                body = os.pread(self._fd, length, offset + _HEADER.size)
                records.append((pmid, body))

            tmp_path = self.path + ".compact"
            try:
                tmp_fd = os.open(tmp_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o644)
                try:
                    os.write(tmp_fd, MAGIC)
                    index: dict[str, tuple[int, int]] = {}
                    pos = len(MAGIC)
                    for pmid, body in records:
                        frame = _HEADER.pack(len(body), zlib.crc32(body)) + body
                        os.write(tmp_fd, frame)
                        index[pmid] = (pos, len(body))
                        pos += len(frame)
                    os.fsync(tmp_fd)
                finally:
                    os.close(tmp_fd)
                os.replace(tmp_path, self.path)
            except OSError as exc:
                try:
                    os.unlink(tmp_path)
                except OSError:
                    pass
                raise IoFailure(f"compaction of {self.path} failed: {exc}") from exc

            os.close(self._fd)
            self._fd = os.open(self.path, os.O_RDWR)
            self._index = index
            self._append_at = pos
            new_size = os.fstat(self._fd).st_size
            return CompactStats(len(records), max(old_size - new_size, 0))

    def close(self) -> None:
        with self._lock:
            if self._fd >= 0:
                os.close(self._fd)
                self._fd = -1

    def __enter__(self) -> "AnnotationStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
