"""Counter-based Gaussian streams (Philox4x32-10 with Box-Muller).

Every Gaussian increment is a pure function of
``(seed, replica, step, sub-step code, particle)``, so trajectories do not
depend on evaluation order or on how step halving recursed elsewhere.
"""
from __future__ import annotations

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_PI = 2.0 * np.pi
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 4x32 counter with a 2x32 key (all as uint64 holding 32 bits)."""
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def normal_pair(c0, c1, c2, c3, k0, k1):
    """Two independent standard normals from one Philox block."""
    a, b, c, d = philox4x32(c0, c1, c2, c3, k0, k1)
    u1 = (((a >> np.uint64(5)) << np.uint64(26)) + (b >> np.uint64(6))) * _INV53
    u2 = (((c >> np.uint64(5)) << np.uint64(26)) + (d >> np.uint64(6))) * _INV53
    u1 = u1 + 0.5 * _INV53  # keep log finite
    r = np.sqrt(-2.0 * np.log(u1))
    return r * np.cos(_TWO_PI * u2), r * np.sin(_TWO_PI * u2)


@njit(cache=True)
def fill_normals(out, code, step, replica, k0, k1):
    """Fill ``out`` with standard normals for one (sub-)step of one replica."""
    n = out.shape[0]
    cc = np.uint64(code) & _MASK
    cs = np.uint64(step) & _MASK
    cr = np.uint64(replica) & _MASK
    for p in range((n + 1) // 2):
        z0, z1 = normal_pair(np.uint64(p), cc, cs, cr, k0, k1)
        out[2 * p] = z0
        if 2 * p + 1 < n:
            out[2 * p + 1] = z1


def split_seed(seed: int):
    """Philox key words from a 64-bit seed."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return np.uint64(seed & 0xFFFFFFFF), np.uint64(seed >> 32)


def philox_block(counter, key):
    """Python entry point: 4 output words for a 4-word counter and 2-word key."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))


def normals(n, seed, replica=0, step=0, code=1):
    """``n`` standard normals from the stream addressed by the arguments."""
    out = np.empty(n)
    k0, k1 = split_seed(seed)
    fill_normals(out, code, step, replica, k0, k1)
    return out
