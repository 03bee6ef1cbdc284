"""Wire-protocol conformance checks shared by every backend implementation.

The checks operate over a transport callable ``post(body) -> (status, reply)``
so the same suite runs against an in-process backend shim, a test stub
server, or a real HTTP service.  Each function returns a list of violation
descriptions; an empty list means the backend conforms.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

Transport = Callable[[dict], tuple[int, object]]

_DEFAULT_TOKENS = ["Atg7", "suppresses", "tumor", "growth", "through", "arginine", "."]

TAG_ROW_SUM_TOL = 1e-4
EMBED_NORM_TOL = 1e-4


def check_tagger_protocol(
    post: Transport,
    types: Sequence[str] = ("gene", "disease", "drug"),
    tokens: Sequence[str] | None = None,
) -> list[str]:
    """Schema, per-head row counts, probability sanity, determinism, and
    rejection of the mutation head."""
    violations: list[str] = []
    tokens = list(_DEFAULT_TOKENS if tokens is None else tokens)
    body = {"tokens": tokens, "types": list(types)}

    status, reply = post(body)
    if status != 200:
        return [f"tag: expected 200, got {status}"]
    violations += _check_tag_reply(reply, tokens, types)

    status2, reply2 = post(body)
    if status2 != 200 or reply2 != reply:
        violations.append("tag: identical request did not produce identical reply")

    status, reply = post({"tokens": [], "types": list(types)})
    if status != 200:
        violations.append(f"tag: empty token list rejected with {status}")
    else:
        heads = reply.get("heads", {}) if isinstance(reply, dict) else {}
        for t in types:
            if heads.get(t) != []:
                violations.append(f"tag: head {t!r} not empty for empty token list")

    status, _ = post({"tokens": tokens, "types": ["mutation"]})
    if status != 400:
        violations.append(f"tag: mutation head accepted (status {status}, want 400)")

    status, _ = post({"tokens": "nope", "types": list(types)})
    if status != 400:
        violations.append(f"tag: malformed tokens accepted (status {status}, want 400)")
    return violations


def _check_tag_reply(reply: object, tokens: Sequence[str], types: Sequence[str]) -> list[str]:
    violations: list[str] = []
    if not isinstance(reply, dict) or not isinstance(reply.get("heads"), dict):
        return ["tag: reply is not an object with 'heads'"]
    heads = reply["heads"]
    for t in types:
        rows = heads.get(t)
        if rows is None:
            violations.append(f"tag: missing head {t!r}")
            continue
        if len(rows) != len(tokens):
            violations.append(
                f"tag: head {t!r} has {len(rows)} rows for {len(tokens)} tokens"
            )
            continue
        for i, row in enumerate(rows):
            if len(row) != 3:
                violations.append(f"tag: head {t!r} row {i} is not a triple")
                break
            if any((not isinstance(x, (int, float))) or math.isnan(x) or x < 0 for x in row):
                violations.append(f"tag: head {t!r} row {i} has invalid probabilities")
                break
            if abs(sum(row) - 1.0) > TAG_ROW_SUM_TOL:
                violations.append(f"tag: head {t!r} row {i} sums to {sum(row)}")
                break
    return violations


def check_encoder_protocol(post: Transport, dim: int) -> list[str]:
    """Schema, dimension, unit norms, order preservation, determinism."""
    violations: list[str] = []
    names = ["arginine", "tumor", "arginine", "hydroxychloroquine"]

    status, reply = post({"names": names})
    if status != 200:
        return [f"embed: expected 200, got {status}"]
    vectors = reply.get("vectors") if isinstance(reply, dict) else None
    if not isinstance(vectors, list) or len(vectors) != len(names):
        return ["embed: reply must carry one vector per name"]
    for i, vec in enumerate(vectors):
        if len(vec) != dim:
            violations.append(f"embed: vector {i} has dimension {len(vec)}, want {dim}")
            continue
        norm = math.sqrt(sum(x * x for x in vec))
        if abs(norm - 1.0) > EMBED_NORM_TOL:
            violations.append(f"embed: vector {i} norm {norm} not within {EMBED_NORM_TOL}")
    if vectors and vectors[0] != vectors[2]:
        violations.append("embed: duplicate names produced different vectors")

    status2, reply2 = post({"names": names})
    if status2 != 200 or reply2 != reply:
        violations.append("embed: identical request did not produce identical reply")

    status, _ = post({"names": "nope"})
    if status != 400:
        violations.append(f"embed: malformed names accepted (status {status}, want 400)")
    return violations
