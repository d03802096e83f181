"""Counter-based Gaussian noise streams (Philox4x32-10).

Every normal variate is a pure function of ``(seed, step, index, component)``,
so noise for particle ``i`` at step ``k`` does not depend on how many
particles are simulated, in which order, or on how many worker threads
are used.
"""

from __future__ import annotations

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_ROUNDS = 10

_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def philox4x32(counter, key):
    """Philox4x32-10 block function, vectorised over the leading axis.

    Parameters
    ----------
    counter : array_like of uint32, shape (n, 4)
    key : tuple of two ints
        The two 32-bit key words.

    Returns
    -------
    ndarray of uint32, shape (n, 4)
    """
    ctr = np.asarray(counter, dtype=np.uint64).reshape(-1, 4)
    c0, c1, c2, c3 = (ctr[:, j].copy() for j in range(4))
    k0 = int(key[0]) & 0xFFFFFFFF
    k1 = int(key[1]) & 0xFFFFFFFF
    for r in range(_ROUNDS):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = c0 * _M0
        p1 = c2 * _M1
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0 = hi1 ^ c1 ^ np.uint64(k0)
        c1 = lo1
        c2 = hi0 ^ c3 ^ np.uint64(k1)
        c3 = lo0
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def _key(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & 0xFFFFFFFF, seed >> 32


def standard_normals(seed, step, indices, dim, stream=0):
    """Standard normal draws for the rows ``indices`` at time step ``step``.

    Row ``r`` of the result depends only on ``(seed, stream, step,
    indices[r])``. Components are produced two at a time by Box-Muller on a
    pair of 53-bit uniforms.

    Parameters
    ----------
    seed : int
        64-bit stream key.
    step : int
        Time-step counter.
    indices : array_like of int
        Particle (or sample-path) indices, each below 2**32.
    dim : int
        Number of components per row.
    stream : int, optional
        Purpose tag, lets independent consumers share a seed.

    Returns
    -------
    ndarray, shape (len(indices), dim)
    """
    idx = np.asarray(indices, dtype=np.uint64).ravel()
    n = idx.size
    n_blocks = (dim + 1) // 2
    out = np.empty((n, 2 * n_blocks), dtype=np.float64)
    key = _key(seed)
    ctr = np.empty((n, 4), dtype=np.uint64)
    ctr[:, 0] = idx
    ctr[:, 1] = np.uint64(int(step) & 0xFFFFFFFF)
    ctr[:, 3] = np.uint64(int(stream) & 0xFFFFFFFF)
    for b in range(n_blocks):
        ctr[:, 2] = np.uint64(b)
        words = philox4x32(ctr, key).astype(np.uint64)
        a = ((words[:, 0] >> np.uint64(5)) << np.uint64(26)) | (words[:, 1] >> np.uint64(6))
        c = ((words[:, 2] >> np.uint64(5)) << np.uint64(26)) | (words[:, 3] >> np.uint64(6))
        u1 = 1.0 - a.astype(np.float64) * _INV_2_53  # in (0, 1]
        u2 = c.astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = _TWO_PI * u2
        out[:, 2 * b] = radius * np.cos(angle)
        out[:, 2 * b + 1] = radius * np.sin(angle)
    return out[:, :dim]


class NoiseStream:
    """Gaussian increments keyed by ``(seed, step, index)``.

    A thin convenience wrapper that remembers the seed and the purpose tag.
    """

    def __init__(self, seed, stream=0):
        self.seed = int(seed)
        self.stream = int(stream)

    def normals(self, step, indices, dim):
        return standard_normals(self.seed, step, indices, dim, self.stream)

    def table(self, n_steps, n, dim):
        """All increments for ``n`` rows over ``n_steps`` steps, shape (n_steps, n, dim)."""
        idx = np.arange(n)
        return np.stack([self.normals(k, idx, dim) for k in range(n_steps)])

    def __repr__(self):
        return f"NoiseStream(seed={self.seed}, stream={self.stream})"
