"""Pure-Python fallbacks for the compiled kernels in ``_speedups.pyx``.

Both implementations must stay bit-for-bit identical: same hash constants,
same gram order, same float64 accumulation order.  ``tests/test_kernels.py``
enforces parity whenever the compiled module is importable.
"""

from __future__ import annotations

import numpy as np

FNV_PRIME = 0x100000001B3
SEED_INDEX = 0xCBF29CE484222325
SEED_SIGN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1

# Label column order inside probability rows.
LABEL_B, LABEL_I, LABEL_O = 0, 1, 2


def fnv1a64(data: bytes, seed: int) -> int:
    h = seed
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & _MASK
    return h


def ngram_hash_accumulate(data: bytes, dim: int) -> np.ndarray:
    """Accumulate signed counts of all 1/2/3-byte grams of ``data``.

    Each gram hashes to a slot in [0, dim) and a sign in {-1, +1} via two
    independently seeded FNV-1a passes.  Returns the raw float64 count
    vector; the caller normalizes.
    """
    out = np.zeros(dim, dtype=np.float64)
    n = len(data)
    for size in (1, 2, 3):
        for i in range(n - size + 1):
            gram = data[i : i + size]
            slot = fnv1a64(gram, SEED_INDEX) % dim
            if fnv1a64(gram, SEED_SIGN) & 1:
                out[slot] += 1.0
            else:
                out[slot] -= 1.0
    return out


def bio_decode_runs(rows: np.ndarray) -> list[tuple[int, int, float]]:
    """Decode (n, 3) B/I/O probability rows into token-index runs.

    Per token the label is the row argmax with ties resolved B > I > O.
    Maximal ``B I*`` runs become spans; an I whose predecessor label is O
    (or which starts the sequence) opens a new span.  Each run carries the
    minimum winning probability of its tokens.  Returns (start, end, prob)
    with ``end`` exclusive.
    """
    runs: list[tuple[int, int, float]] = []
    n = rows.shape[0]
    cur = -1
    cur_prob = 0.0
    prev = LABEL_O
    for t in range(n):
        b, i_, o = rows[t, 0], rows[t, 1], rows[t, 2]
        if b >= i_ and b >= o:
            label, p = LABEL_B, b
        elif i_ >= o:
            label, p = LABEL_I, i_
        else:
            label, p = LABEL_O, o

        if label == LABEL_B:
            if cur >= 0:
                runs.append((cur, t, cur_prob))
            cur, cur_prob = t, p
        elif label == LABEL_I:
            if prev != LABEL_O and cur >= 0:
                if p < cur_prob:
                    cur_prob = p
            else:
                cur, cur_prob = t, p
        else:
            if cur >= 0:
                runs.append((cur, t, cur_prob))
                cur = -1
        prev = label
    if cur >= 0:
        runs.append((cur, n, cur_prob))
    return runs
