"""Counter-based normal variates.

Every variate is a pure function of ``(seed, path, step, stream)``, so a set
of paths can be simulated in any order, in any chunking, on any number of
threads and still reproduce bit-for-bit.  The bit source is Philox4x32-10.
"""

import numpy as np

__all__ = ["philox4x32", "uniforms", "normals"]

_M32 = np.uint64(0xFFFFFFFF)
_MUL0 = np.uint64(0xD2511F53)
_MUL1 = np.uint64(0xCD9E8D57)
_WEYL0 = 0x9E3779B9
_WEYL1 = 0xBB67AE85


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of 4 array_like
        Counter words; each broadcastable, values in ``[0, 2**32)``.
    key : sequence of 2 int
        Key words in ``[0, 2**32)``.

    Returns
    -------
    tuple of 4 ndarray of uint64
        Output words (each below ``2**32``).
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _M32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for i in range(rounds):
        if i:
            k0 = (k0 + _WEYL0) & 0xFFFFFFFF
            k1 = (k1 + _WEYL1) & 0xFFFFFFFF
        p0 = _MUL0 * c0
        p1 = _MUL1 * c2
        c0, c1, c2, c3 = (
            (p1 >> np.uint64(32)) ^ c1 ^ np.uint64(k0),
            p1 & _M32,
            (p0 >> np.uint64(32)) ^ c3 ^ np.uint64(k1),
            p0 & _M32,
        )
    return c0, c1, c2, c3


def _key(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(seed, path, step, block=0):
    """Two 53-bit uniforms in ``(0, 1)`` per ``(path, step, block)``.

    Returns an array of shape ``path.shape + (2,)``.
    """
    path = np.asarray(path, dtype=np.uint64)
    w0, w1, w2, w3 = philox4x32((step, path, block, 0), _key(seed))
    scale = 2.0**-53
    # 53-bit integers built from 27 + 26 bits; +0.5 keeps values off 0 and 1
    u0 = ((w0 >> np.uint64(5)) * np.uint64(1 << 26) + (w1 >> np.uint64(6))).astype(np.float64)
    u1 = ((w2 >> np.uint64(5)) * np.uint64(1 << 26) + (w3 >> np.uint64(6))).astype(np.float64)
    return np.stack([(u0 + 0.5) * scale, (u1 + 0.5) * scale], axis=-1)


def normals(seed, path, step, count):
    """Standard normals of shape ``(len(path), count)`` for one time step.

    Column ``j`` is drawn from Philox block ``j // 2``; the same
    ``(seed, path, step)`` always yields the same row regardless of which
    other paths are requested alongside it.
    """
    path = np.atleast_1d(np.asarray(path, dtype=np.uint64))
    nblocks = (count + 1) // 2
    out = np.empty((path.shape[0], 2 * nblocks))
    for b in range(nblocks):
        u = uniforms(seed, path, step, b)
        rad = np.sqrt(-2.0 * np.log(u[:, 0]))
        ang = 2.0 * np.pi * u[:, 1]
        out[:, 2 * b] = rad * np.cos(ang)
        out[:, 2 * b + 1] = rad * np.sin(ang)
    return out[:, :count]
