"""Kernel selection: compiled extension when available, pure Python otherwise.

Set BIOANN_PURE=1 to force the pure-Python kernels (used by the benchmark
and by parity tests).
"""

from __future__ import annotations

import os

from bioann import _speedups_py

if os.environ.get("BIOANN_PURE", "") in ("", "0"):
    try:
        from bioann import _speedups as _impl

        HAS_NATIVE = True
    except ImportError:
        _impl = _speedups_py
        HAS_NATIVE = False
else:
    _impl = _speedups_py
    HAS_NATIVE = False

bio_decode_runs = _impl.bio_decode_runs
ngram_hash_accumulate = _impl.ngram_hash_accumulate
fnv1a64 = _impl.fnv1a64


def backend_name() -> str:
    return "native" if HAS_NATIVE else "pure"
