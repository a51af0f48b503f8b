"""Shared fixtures and an independent reference for the seeded partition.

The reference below is deliberately written from the published constants
in plain Python integers, sharing no code with the package, so the golden
values in the tests are pinned by two implementations that can only agree
by computing the same thing.
"""

import numpy as np
import pytest

from gpart import trainer

MASK = (1 << 64) - 1


def ref_splitmix64(seed, count):
    state = seed & MASK
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def ref_shuffle(seed, n):
    perm = list(range(n))
    draws = iter(ref_splitmix64(seed, max(0, n - 1)))
    for i in range(n - 1, 0, -1):
        j = next(draws) % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def ref_assignment(seed, total, dim):
    perm = ref_shuffle(seed, total)
    base, extra = divmod(total, dim)
    out = [None] * total
    pos = 0
    for group in range(dim):
        size = base + 1 if group < extra else base
        for _ in range(size):
            out[perm[pos]] = group
            pos += 1
    return out


def dense_matrix(pm, scaled=True):
    """N x dim matrix with one nonzero per row, built from the assignment."""
    mat = np.zeros((pm.total, pm.dim))
    scale = pm.inv_sqrt_sizes if scaled else np.ones(pm.dim)
    mat[np.arange(pm.total), pm.assignment] = scale[pm.assignment]
    return mat


@pytest.fixture(scope="session")
def tiny_net():
    return trainer.NetworkConfig((8, 12, 4))


@pytest.fixture(scope="session")
def tiny_tasks():
    return trainer.make_task(5, 200, 8, 4, 1.1)


@pytest.fixture(scope="session")
def tiny_pretrained(tiny_net, tiny_tasks):
    pre, _ = tiny_tasks
    w0, record = trainer.pretrain(tiny_net, pre, 12, 25, 0.01, 0.1, 3, 4)
    return w0, record
