"""Counter-based normal variates with one substream per simulation path.

Built on Philox4x32-10 evaluated directly in vectorized numpy. The counter
encodes (path index, time step, block, stream tag) and the key carries the
user seed, so the normal draw for a given (path, step, factor) is a pure
function of (seed, path, step, factor). Consequences:

* changing the batch size or sharding the batch never reorders noise --
  path p always sees the same increments;
* shards can be generated independently and merged without communication.

Each Philox call yields four 32-bit words; pairs of words are combined into
53-bit uniforms in (0, 1) and mapped through the normal inverse CDF.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

__all__ = ["PathRng", "philox4x32"]

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO32 = np.uint64(0xFFFFFFFF)


def philox4x32(c0, c1, c2, c3, k0, k1, rounds=10):
    """Philox4x32 keyed bijection; all arguments uint32 arrays or scalars.

    Returns four uint32 output words of the same shape as the counters.
    """
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    k0 = np.uint32(k0)
    k1 = np.uint32(k1)
    for r in range(rounds):
        if r:
            k0 = np.uint32((np.uint64(k0) + np.uint64(_W0)) & _LO32)
            k1 = np.uint32((np.uint64(k1) + np.uint64(_W1)) & _LO32)
        p0 = _M0 * c0.astype(np.uint64)
        p1 = _M1 * c2.astype(np.uint64)
        hi0 = (p0 >> np.uint64(32)).astype(np.uint32)
        lo0 = (p0 & _LO32).astype(np.uint32)
        hi1 = (p1 >> np.uint64(32)).astype(np.uint32)
        lo1 = (p1 & _LO32).astype(np.uint32)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _uniforms_from_words(w_hi, w_lo):
    # 53-bit uniform strictly inside (0, 1)
    x = (w_hi.astype(np.uint64) << np.uint64(32)) | w_lo.astype(np.uint64)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


class PathRng:
    """Per-path Gaussian increment generator for a fixed seed."""

    def __init__(self, seed: int, stream: int = 0):
        seed = int(seed)
        self.seed = seed
        self.k0 = np.uint32(seed & 0xFFFFFFFF)
        self.k1 = np.uint32((seed >> 32) & 0xFFFFFFFF)
        self.stream = np.uint32(stream)

    def normals(self, path_start: int, n_paths: int, step: int, n_factors: int):
        """Standard normals of shape [n_paths, n_factors] for one time step.

        path_start is the global index of the first path, so a shard
        [p0, p0 + n) draws exactly the rows p0..p0+n-1 of the full batch.
        """
        paths = np.arange(path_start, path_start + n_paths, dtype=np.uint32)
        n_blocks = (n_factors + 1) // 2
        cols = []
        for block in range(n_blocks):
            w0, w1, w2, w3 = philox4x32(
                paths,
                np.uint32(step),
                np.full(n_paths, block, dtype=np.uint32),
                np.full(n_paths, self.stream, dtype=np.uint32),
                self.k0,
                self.k1,
            )
            cols.append(_uniforms_from_words(w0, w1))
            cols.append(_uniforms_from_words(w2, w3))
        u = np.column_stack(cols[:n_factors])
        return ndtri(u)
