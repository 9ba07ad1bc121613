"""Counter-based random streams.

Every draw is a pure function of ``(stream key, counter)``: the SplitMix64
finaliser is applied to ``key + counter * golden_gamma``.  A path's key is
derived from ``(master_seed, path_index)`` alone, so results do not depend on
how paths are scheduled across workers.

A stream has two independent lanes, one for uniforms (inter-arrival times,
claim sizes) and one for standard normals (Brownian increments).  Normals come
from Box-Muller pairs: normal ``n`` is the cosine or sine half of pair
``n // 2``.  Keeping the lanes apart lets a simulator draw a variable number of
normals per inter-arrival interval while the jump sequence stays aligned
across coupled runs.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SALT_UNIFORM = np.uint64(0x243F6A8885A308D3)
_SALT_NORMAL = np.uint64(0x13198A2E03707344)
_SALT_SEED = np.uint64(0xA4093822299F31D0)
_SALT_SUB = np.uint64(0x082EFA98EC4E6C89)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@nb.njit(inline="always", cache=True)
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def uniform_at(key, ctr):
    """Uniform in the open interval (0, 1); 53 random bits."""
    bits = mix64(np.uint64(key) + np.uint64(ctr) * _GAMMA) >> np.uint64(11)
    return (float(bits) + 0.5) * _INV_2_53


@nb.njit(inline="always", cache=True)
def normal_pair(key, pair):
    u1 = uniform_at(key, np.uint64(2) * pair)
    u2 = uniform_at(key, np.uint64(2) * pair + np.uint64(1))
    r = math.sqrt(-2.0 * math.log(u1))
    t = _TWO_PI * u2
    return r * math.cos(t), r * math.sin(t)


@nb.njit(inline="always", cache=True)
def normal_at(key, n):
    z0, z1 = normal_pair(key, np.uint64(n) >> np.uint64(1))
    if n & 1:
        return z1
    return z0


@nb.njit(inline="always", cache=True)
def next_normal(key, n, spare_idx, spare):
    """Normal number ``n`` of the lane, reusing the cached other half of its pair.

    Returns ``(z, n + 1, spare_idx, spare)``.
    """
    if n == spare_idx:
        return spare, n + 1, np.int64(-1), 0.0
    z0, z1 = normal_pair(key, np.uint64(n) >> np.uint64(1))
    if n & 1:
        return z1, n + 1, np.int64(-1), 0.0
    return z0, n + 1, n + 1, z1


@nb.njit(inline="always", cache=True)
def path_key(seed, index):
    k = mix64(np.uint64(seed) ^ _SALT_SEED)
    return mix64(k + (np.uint64(index) + np.uint64(1)) * _GAMMA)


@nb.njit(inline="always", cache=True)
def lane_keys(key):
    key = np.uint64(key)
    return mix64(key ^ _SALT_UNIFORM), mix64(key ^ _SALT_NORMAL)


@nb.njit(inline="always", cache=True)
def sub_key(key, index):
    """Key of an auxiliary lane attached to draw ``index`` of lane ``key``."""
    return mix64(np.uint64(key) ^ mix64(np.uint64(index) + _SALT_SUB))


def _to_u64(value: int) -> np.uint64:
    return np.uint64(int(value) & MASK64)


class RngStream:
    """Deterministic generator for one path, identified by ``(master_seed, path_index)``.

    The stream remembers how far each lane has been consumed, so successive
    calls continue where the previous one stopped.  Two streams built from the
    same pair produce identical sequences.
    """

    def __init__(self, master_seed: int, path_index: int = 0):
        if master_seed < 0 or path_index < 0:
            raise ValueError("seed and path index must be non-negative")
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        self.key = np.uint64(path_key(_to_u64(master_seed), _to_u64(path_index)))
        ukey, nkey = lane_keys(self.key)
        self.ukey, self.nkey = np.uint64(ukey), np.uint64(nkey)
        self.uctr = 0
        self.nctr = 0

    def __repr__(self):
        return (f"RngStream(master_seed={self.master_seed}, path_index={self.path_index}, "
                f"uctr={self.uctr}, nctr={self.nctr})")

    def copy(self) -> "RngStream":
        other = RngStream(self.master_seed, self.path_index)
        other.uctr, other.nctr = self.uctr, self.nctr
        return other

    def uniform(self) -> float:
        value = uniform_at(self.ukey, np.uint64(self.uctr))
        self.uctr += 1
        return float(value)

    def uniforms(self, size: int) -> np.ndarray:
        out = _uniform_block(self.ukey, np.uint64(self.uctr), size)
        self.uctr += size
        return out

    def normal(self) -> float:
        value = normal_at(self.nkey, np.uint64(self.nctr))
        self.nctr += 1
        return float(value)

    def normals(self, size: int) -> np.ndarray:
        out = _normal_block(self.nkey, np.uint64(self.nctr), size)
        self.nctr += size
        return out

    def exponential(self, rate: float = 1.0) -> float:
        return -math.log(self.uniform()) / rate


@nb.njit(cache=True)
def _uniform_block(key, start, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = uniform_at(key, start + np.uint64(i))
    return out


@nb.njit(cache=True)
def _normal_block(key, start, size):
    out = np.empty(size)
    for i in range(size):
        out[i] = normal_at(key, start + np.uint64(i))
    return out
