"""Pure-Python fallbacks for the partition hot loops.

Kept in lockstep with the compiled module: same splitmix64 constants,
same Fisher-Yates visit order, and group accumulation in input order
(np.bincount adds weights sequentially, matching the compiled loop), so
the two backends return bit-identical arrays.
"""

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1


def _mix(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def splitmix64_stream(seed, count):
    """Raw splitmix64 outputs, mainly for cross-checking backends."""
    out = np.empty(count, dtype=np.uint64)
    state = seed & _MASK
    for k in range(count):
        state, z = _mix(state)
        out[k] = z
    return out


def shuffled_indices(seed, n):
    """Fisher-Yates permutation of [0, n) driven by splitmix64(seed)."""
    perm = np.arange(n, dtype=np.int64)
    state = seed & _MASK
    for i in range(n - 1, 0, -1):
        state, z = _mix(state)
        j = z % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def gather(values, assignment):
    return values[assignment]


def group_sums(values, assignment, dim):
    return np.bincount(assignment, weights=values, minlength=dim)
