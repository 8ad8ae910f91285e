"""Counter-based random streams.

Every random number used by the simulations is a pure function of
``(master_seed, trajectory_index, lane, counter)``: a stream key is derived
from the first three with the SplitMix64 finalizer, and the ``counter``-th
draw is the finalizer applied to ``key + counter * GOLDEN``.  This is exactly
SplitMix64 with O(1) jump-ahead, so trajectories can be generated in any
order, on any number of threads, and reproduce bit for bit.
"""

from __future__ import annotations

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANE_SALT = np.uint64(0xD1B54A32D192ED03)
_TRAJ_SALT = np.uint64(0xA0761D6478BD642F)
_INV53 = 1.0 / 9007199254740992.0

# lanes: which sub-stream of a trajectory a draw belongs to
LANE_STEPS = 0
LANE_INIT = 1
LANE_TARGET = 2
LANE_BURNIN = 3

MASK64 = (1 << 64) - 1


@numba.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def stream_key(seed, traj, lane):
    k = mix64(np.uint64(seed) + GOLDEN)
    k = mix64(k ^ (np.uint64(traj) * _TRAJ_SALT + GOLDEN))
    return mix64(k ^ (np.uint64(lane + 1) * _LANE_SALT))


@numba.njit(cache=True, inline="always")
def draw_u64(key, counter):
    return mix64(key + np.uint64(counter + 1) * GOLDEN)


@numba.njit(cache=True, inline="always")
def draw_uniform(key, counter):
    """Uniform double in [0, 1) with 53 random bits."""
    return np.float64(draw_u64(key, counter) >> np.uint64(11)) * _INV53


@numba.njit(cache=True, inline="always")
def draw_open_uniform(key, counter):
    """Uniform double in (0, 1]; safe to take logs or reciprocals of."""
    return (np.float64(draw_u64(key, counter) >> np.uint64(11)) + 1.0) * _INV53


@numba.njit(cache=True, inline="always")
def pick(cumw, u):
    """Index k with cumw[k-1] <= u < cumw[k]; cumw[-1] is treated as 1."""
    k = 0
    for j in range(cumw.shape[0] - 1):
        k += u >= cumw[j]
    return k


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def key_for(seed: int, traj: int, lane: int) -> np.uint64:
    return np.uint64(stream_key(np.uint64(check_seed(seed)), np.uint64(traj), lane))


def uniforms(seed: int, traj: int, lane: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` consecutive uniforms of one lane, as a numpy array."""
    return _uniform_block(key_for(seed, traj, lane), start, count)


def raw_u64(seed: int, traj: int, lane: int, count: int, start: int = 0) -> np.ndarray:
    return _u64_block(key_for(seed, traj, lane), start, count)


@numba.njit(cache=True)
def _uniform_block(key, start, count):
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = draw_uniform(key, start + i)
    return out


@numba.njit(cache=True)
def _u64_block(key, start, count):
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = draw_u64(key, start + i)
    return out
