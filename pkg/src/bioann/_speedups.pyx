# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: character n-gram hashing and BIO run decoding.

Must stay bit-for-bit identical to ``_speedups_py``; see tests/test_kernels.py.
"""

import numpy as np

ctypedef unsigned long long u64

cdef u64 FNV_PRIME = 0x100000001B3ULL
cdef u64 SEED_INDEX = 0xCBF29CE484222325ULL
cdef u64 SEED_SIGN = 0x9E3779B97F4A7C15ULL


cdef inline u64 _fnv1a(const unsigned char* data, Py_ssize_t start,
                       Py_ssize_t size, u64 seed) noexcept nogil:
    cdef u64 h = seed
    cdef Py_ssize_t i
    for i in range(start, start + size):
        h ^= <u64> data[i]
        h *= FNV_PRIME  # u64 arithmetic wraps, matching the masked Python hash
    return h


def fnv1a64(bytes data, seed):
    cdef const unsigned char* buf = data
    return _fnv1a(buf, 0, len(data), <u64> seed)


def ngram_hash_accumulate(bytes data, int dim):
    cdef Py_ssize_t n = len(data)
    cdef const unsigned char* buf = data
    out = np.zeros(dim, dtype=np.float64)
    cdef double[::1] v = out
    cdef Py_ssize_t size, i
    cdef u64 udim = <u64> dim
    for size in range(1, 4):
        for i in range(n - size + 1):
            if _fnv1a(buf, i, size, SEED_SIGN) & 1ULL:
                v[_fnv1a(buf, i, size, SEED_INDEX) % udim] += 1.0
            else:
                v[_fnv1a(buf, i, size, SEED_INDEX) % udim] -= 1.0
    return out


def bio_decode_runs(double[:, ::1] rows):
    cdef Py_ssize_t n = rows.shape[0]
    cdef Py_ssize_t t, cur = -1
    cdef double cur_prob = 0.0, b, i_, o, p
    cdef int label, prev = 2  # O
    runs = []
    for t in range(n):
        b = rows[t, 0]
        i_ = rows[t, 1]
        o = rows[t, 2]
        if b >= i_ and b >= o:
            label = 0
            p = b
        elif i_ >= o:
            label = 1
            p = i_
        else:
            label = 2
            p = o

        if label == 0:
            if cur >= 0:
                runs.append((cur, t, cur_prob))
            cur = t
            cur_prob = p
        elif label == 1:
            if prev != 2 and cur >= 0:
                if p < cur_prob:
                    cur_prob = p
            else:
                cur = t
                cur_prob = p
        else:
            if cur >= 0:
                runs.append((cur, t, cur_prob))
                cur = -1
        prev = label
    if cur >= 0:
        runs.append((cur, n, cur_prob))
    return runs
