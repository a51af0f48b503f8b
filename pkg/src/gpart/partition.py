"""Seed-keyed balanced partition of the flat weight space.

build_partition(seed, total, dim) shuffles the indices [0, total) with a
splitmix64-driven Fisher-Yates pass and cuts the permuted sequence into
dim contiguous chunks, the first (total mod dim) chunks one element
longer than the rest; chunk k becomes group k. The induced sparse matrix
P, with a single nonzero 1/sqrt(n_j) in row i at column g(i), has
orthonormal columns, so theta -> P theta preserves Euclidean distances
exactly. project and pullback apply P and its transpose as linear passes
over the assignment array; the dense matrix exists only as a test oracle
behind a size guard. The construction is a pure function of
(seed, total, dim) and is bit-identical across platforms and backends.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import ValidationError

MATERIALIZE_LIMIT = 10_000_000


@dataclass(frozen=True, eq=False)
class PartitionMap:
    seed: int
    total: int
    dim: int
    assignment: np.ndarray
    group_sizes: np.ndarray
    inv_sqrt_sizes: np.ndarray


def build_partition(seed, total, dim):
    seed = int(seed)
    total = int(total)
    dim = int(dim)
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")
    if total < 1:
        raise ValidationError(f"total must be positive, got {total}")
    if not 1 <= dim <= total:
        raise ValidationError(f"dim must be in [1, {total}], got {dim}")
    perm = backend.shuffled_indices(seed, total)
    base, extra = divmod(total, dim)
    sizes = np.full(dim, base, dtype=np.int64)
    sizes[:extra] += 1
    assignment = np.empty(total, dtype=np.uint32)
    assignment[perm] = np.repeat(np.arange(dim, dtype=np.uint32), sizes)
    inv_sqrt = 1.0 / np.sqrt(sizes)
    for arr in (assignment, sizes, inv_sqrt):
        arr.setflags(write=False)
    return PartitionMap(seed, total, dim, assignment, sizes, inv_sqrt)


def _check_theta(pm, theta):
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if theta.shape != (pm.dim,):
        raise ValidationError(f"theta has shape {theta.shape}, partition dim is {pm.dim}")
    return theta


def _check_values(pm, values):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.shape != (pm.total,):
        raise ValidationError(f"vector has shape {values.shape}, partition total is {pm.total}")
    return values


def project(pm, theta):
    """Apply P: result_i = theta[g(i)] / sqrt(n_g(i))."""
    theta = _check_theta(pm, theta)
    return backend.gather(theta * pm.inv_sqrt_sizes, pm.assignment)


def replicate(pm, theta):
    """Apply the unscaled variant (every stored entry 1): result_i = theta[g(i)]."""
    theta = _check_theta(pm, theta)
    return backend.gather(theta, pm.assignment)


def pullback(pm, grad_w):
    """Apply P^T: result_j = (sum of grad_w over group j) / sqrt(n_j)."""
    grad_w = _check_values(pm, grad_w)
    return backend.group_sums(grad_w, pm.assignment, pm.dim) * pm.inv_sqrt_sizes


def group_totals(pm, values):
    """Unscaled per-group sums, the transpose of replicate."""
    values = _check_values(pm, values)
    return backend.group_sums(values, pm.assignment, pm.dim)


def materialize(pm):
    """Dense total x dim form of P. Test oracle only; refuses large maps."""
    if pm.total * pm.dim > MATERIALIZE_LIMIT:
        raise ValidationError(
            f"refusing to materialize {pm.total}x{pm.dim}; "
            f"limit is {MATERIALIZE_LIMIT} entries"
        )
    dense = np.zeros((pm.total, pm.dim))
    dense[np.arange(pm.total), pm.assignment] = pm.inv_sqrt_sizes[pm.assignment]
    return dense
