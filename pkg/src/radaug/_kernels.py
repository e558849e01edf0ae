"""Hot inner loops with a numba path and a pure numpy/Python fallback.

The numba path is used when numba imports and ``RADAUG_DISABLE_NUMBA`` is
unset or ``0``. Both paths are always importable as ``*_numba`` /
``*_numpy`` so tests and the benchmark can compare them directly.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("RADAUG_DISABLE_NUMBA", "0").lower() in ("", "0", "false", "no")


# --- longest common subsequence -------------------------------------------

def lcs_length_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """Bit-parallel LCS length (Hyyrö's formulation) over Python ints."""
    if len(a) == 0 or len(b) == 0:
        return 0
    match: dict[int, int] = {}
    for i, sym in enumerate(a.tolist()):
        match[sym] = match.get(sym, 0) | (1 << i)
    mask = (1 << len(a)) - 1
    v = mask
    for sym in b.tolist():
        u = v & match.get(sym, 0)
        v = ((v + u) | (v - u)) & mask
    return len(a) - bin(v).count("1")


if HAVE_NUMBA:
    @njit(cache=True)
    def lcs_length_numba(a, b):
        n, m = a.shape[0], b.shape[0]
        if n == 0 or m == 0:
            return 0
        prev = np.zeros(m + 1, dtype=np.int64)
        cur = np.zeros(m + 1, dtype=np.int64)
        for i in range(1, n + 1):
            ai = a[i - 1]
            for j in range(1, m + 1):
                if ai == b[j - 1]:
                    cur[j] = prev[j - 1] + 1
                elif prev[j] >= cur[j - 1]:
                    cur[j] = prev[j]
                else:
                    cur[j] = cur[j - 1]
            prev, cur = cur, prev
        return prev[m]
else:  # pragma: no cover
    lcs_length_numba = None


# --- 3D mean pooling over a token lattice ---------------------------------

def mean_pool3d_numpy(x: np.ndarray, pool: tuple[int, int, int]) -> np.ndarray:
    """Mean over non-overlapping blocks of a (d, h, w, c) lattice."""
    d, h, w, c = x.shape
    pd, ph, pw = pool
    blocks = x.reshape(d // pd, pd, h // ph, ph, w // pw, pw, c)
    return blocks.mean(axis=(1, 3, 5))


if HAVE_NUMBA:
    @njit(cache=True)
    def _mean_pool3d_numba(x, pd, ph, pw):
        d, h, w, c = x.shape
        od, oh, ow = d // pd, h // ph, w // pw
        out = np.zeros((od, oh, ow, c), dtype=np.float64)
        scale = 1.0 / (pd * ph * pw)
        for i in range(od):
            for j in range(oh):
                for k in range(ow):
                    for a in range(pd):
                        for b in range(ph):
                            for e in range(pw):
                                src = x[i * pd + a, j * ph + b, k * pw + e]
                                for ch in range(c):
                                    out[i, j, k, ch] += src[ch]
                    for ch in range(c):
                        out[i, j, k, ch] *= scale
        return out

    def mean_pool3d_numba(x: np.ndarray, pool: tuple[int, int, int]) -> np.ndarray:
        return _mean_pool3d_numba(np.ascontiguousarray(x, dtype=np.float64), *pool)
else:  # pragma: no cover
    mean_pool3d_numba = None


# --- block-local single-head attention ------------------------------------

def local_attention_numpy(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Each query attends over its own key block.

    q: (n, e); k: (n, m, e); v: (n, m, c). Returns (out (n, c), weights (n, m)).
    """
    scores = np.einsum("ne,nme->nm", q, k) / np.sqrt(q.shape[1])
    scores -= scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    return np.einsum("nm,nmc->nc", weights, v), weights


if HAVE_NUMBA:
    @njit(cache=True)
    def _local_attention_numba(q, k, v):
        n, m, e = k.shape
        c = v.shape[2]
        out = np.zeros((n, c), dtype=np.float64)
        weights = np.empty((n, m), dtype=np.float64)
        scale = 1.0 / np.sqrt(e)
        for i in range(n):
            top = -np.inf
            for j in range(m):
                s = 0.0
                for t in range(e):
                    s += q[i, t] * k[i, j, t]
                s *= scale
                weights[i, j] = s
                if s > top:
                    top = s
            total = 0.0
            for j in range(m):
                weights[i, j] = np.exp(weights[i, j] - top)
                total += weights[i, j]
            for j in range(m):
                weights[i, j] /= total
                for t in range(c):
                    out[i, t] += weights[i, j] * v[i, j, t]
        return out, weights

    def local_attention_numba(q, k, v):
        f = lambda a: np.ascontiguousarray(a, dtype=np.float64)
        return _local_attention_numba(f(q), f(k), f(v))
else:  # pragma: no cover
    local_attention_numba = None


if USE_NUMBA:
    lcs_length = lcs_length_numba
    mean_pool3d = mean_pool3d_numba
    local_attention = local_attention_numba
else:
    lcs_length = lcs_length_numpy
    mean_pool3d = mean_pool3d_numpy
    local_attention = local_attention_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
