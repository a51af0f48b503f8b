"""Interchangeable parameterizations of a weight-space update.

Every adapter owns a flat float64 coordinate vector ``theta`` and exposes
the same surface: delta() builds the induced weight perturbation,
delta_at() does so for explicit coordinates without touching state,
pullback_grad() carries a weight-space gradient back to coordinates,
merge() adds the delta to a base vector, and count_trainable() reports
the coordinate count. The trainer sees only this surface, so the five
parameterizations are interchangeable.

Partition adapters round-trip through a fixed binary checkpoint; the
stored information is just the seed and the coordinates, which suffice
to rebuild the partition and the adapted model exactly. Layout,
little-endian: magic "GPRT" | version u32 = 1 | mode u8 (0 isometric,
1 nonisometric) | 7 zero bytes | seed u64 | dim u64 | total u64 |
dim float64 coordinates.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import partition, weightspace
from .errors import CompatibilityError, FormatError, ValidationError

CHECKPOINT_MAGIC = b"GPRT"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIB7xQQQ")
_MODE_CODE = {"isometric": 0, "nonisometric": 1}
_CODE_MODE = {code: mode for mode, code in _MODE_CODE.items()}


def _merge(adapter, w0):
    w0 = np.asarray(w0, dtype=np.float64)
    if w0.shape != (adapter.manifest.total,):
        raise CompatibilityError(
            f"base vector has shape {w0.shape}, manifest total is {adapter.manifest.total}"
        )
    return w0 + adapter.delta()


class GPartAdapter:
    """Global-partition adapter: theta maps through P into all of R^N."""

    def __init__(self, manifest, seed, dim, mode="isometric"):
        if mode not in _MODE_CODE:
            raise ValidationError(f"mode must be isometric or nonisometric, got {mode!r}")
        self.manifest = manifest
        self.seed = int(seed)
        self.mode = mode
        self.pm = partition.build_partition(self.seed, manifest.total, dim)
        self.theta = np.zeros(self.pm.dim)

    @property
    def kind(self):
        return "gpart_iso" if self.mode == "isometric" else "gpart_noniso"

    def count_trainable(self):
        return self.pm.dim

    def delta_at(self, theta):
        if self.mode == "isometric":
            return partition.project(self.pm, theta)
        return partition.replicate(self.pm, theta)

    def delta(self):
        return self.delta_at(self.theta)

    def pullback_grad(self, grad_w):
        if self.mode == "isometric":
            return partition.pullback(self.pm, grad_w)
        return partition.group_totals(self.pm, grad_w)

    def merge(self, w0):
        return _merge(self, w0)


def factor_space(manifest, rank):
    """Manifest of the stacked low-rank factors: per layer, B (m x r) then A (r x n)."""
    rank = int(rank)
    if rank < 1:
        raise ValidationError(f"rank must be positive, got {rank}")
    shapes = []
    for spec in manifest.layers:
        shapes.append((f"{spec.name}.B", spec.rows, rank))
        shapes.append((f"{spec.name}.A", rank, spec.cols))
    return weightspace.build_manifest(shapes)


class LoRAAdapter:
    """Per-layer low-rank factors; coordinates stack vec(B) then vec(A) per layer."""

    kind = "lora"

    def __init__(self, manifest, seed, rank):
        self.manifest = manifest
        self.seed = int(seed)
        self.rank = int(rank)
        self.factor_manifest = factor_space(manifest, self.rank)
        rng = np.random.default_rng(self.seed)
        mats = []
        for spec in manifest.layers:
            mats.append(np.zeros((spec.rows, self.rank)))
            mats.append(rng.normal(0.0, 0.02, size=(self.rank, spec.cols)))
        self.theta = weightspace.flatten(self.factor_manifest, mats)

    def count_trainable(self):
        return self.factor_manifest.total

    def factors_at(self, theta):
        mats = weightspace.unflatten(self.factor_manifest, theta)
        return list(zip(mats[0::2], mats[1::2]))

    def factors(self):
        return self.factors_at(self.theta)

    def delta_at(self, theta):
        deltas = [b @ a for b, a in self.factors_at(theta)]
        return weightspace.flatten(self.manifest, deltas)

    def delta(self):
        return self.delta_at(self.theta)

    def pullback_grad(self, grad_w):
        layer_grads = weightspace.unflatten(self.manifest, grad_w)
        out = []
        for (b, a), g in zip(self.factors(), layer_grads):
            out.append(g @ a.T)
            out.append(b.T @ g)
        return weightspace.flatten(self.factor_manifest, out)

    def merge(self, w0):
        return _merge(self, w0)


class UniLoRAAdapter:
    """One shared vector projected into the factor space, then per-layer products."""

    kind = "unilora"

    def __init__(self, manifest, seed, dim, rank):
        self.manifest = manifest
        self.seed = int(seed)
        self.rank = int(rank)
        self.factor_manifest = factor_space(manifest, self.rank)
        self.factor_pm = partition.build_partition(self.seed, self.factor_manifest.total, dim)
        rng = np.random.default_rng(self.seed)
        # zero init would stall: both factors of every product would vanish
        self.theta = rng.normal(0.0, 1e-3, size=self.factor_pm.dim)

    def count_trainable(self):
        return self.factor_pm.dim

    def factors_at(self, theta):
        factor_vec = partition.project(self.factor_pm, theta)
        mats = weightspace.unflatten(self.factor_manifest, factor_vec)
        return list(zip(mats[0::2], mats[1::2]))

    def delta_at(self, theta):
        deltas = [b @ a for b, a in self.factors_at(theta)]
        return weightspace.flatten(self.manifest, deltas)

    def delta(self):
        return self.delta_at(self.theta)

    def pullback_grad(self, grad_w):
        layer_grads = weightspace.unflatten(self.manifest, grad_w)
        out = []
        for (b, a), g in zip(self.factors_at(self.theta), layer_grads):
            out.append(g @ a.T)
            out.append(b.T @ g)
        factor_grad = weightspace.flatten(self.factor_manifest, out)
        return partition.pullback(self.factor_pm, factor_grad)

    def merge(self, w0):
        return _merge(self, w0)


class FullFTAdapter:
    """Identity parameterization: one coordinate per weight."""

    kind = "fullft"

    def __init__(self, manifest):
        self.manifest = manifest
        self.theta = np.zeros(manifest.total)

    def count_trainable(self):
        return self.manifest.total

    def delta_at(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.manifest.total,):
            raise ValidationError(
                f"theta has shape {theta.shape}, manifest total is {self.manifest.total}"
            )
        return theta.copy()

    def delta(self):
        return self.delta_at(self.theta)

    def pullback_grad(self, grad_w):
        grad_w = np.asarray(grad_w, dtype=np.float64)
        if grad_w.shape != (self.manifest.total,):
            raise ValidationError(
                f"gradient has shape {grad_w.shape}, manifest total is {self.manifest.total}"
            )
        return grad_w.copy()

    def merge(self, w0):
        return _merge(self, w0)


@dataclass(frozen=True)
class AdapterCheckpoint:
    seed: int
    mode: str
    dim: int
    total: int
    theta: np.ndarray


def write_checkpoint(path, seed, mode, dim, total, theta):
    """Write the raw binary form; the caller vouches for consistency."""
    if mode not in _MODE_CODE:
        raise ValidationError(f"mode must be isometric or nonisometric, got {mode!r}")
    theta = np.ascontiguousarray(theta, dtype="<f8")
    if theta.shape != (dim,):
        raise ValidationError(f"theta has shape {theta.shape}, header dim is {dim}")
    if not 1 <= dim <= total:
        raise ValidationError(f"dim must be in [1, {total}], got {dim}")
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, _MODE_CODE[mode], seed, dim, total)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(theta.tobytes())
    except OSError as exc:
        raise FormatError(f"cannot write checkpoint {path}: {exc}") from None


def save_checkpoint(adapter, path):
    if not isinstance(adapter, GPartAdapter):
        raise ValidationError(
            f"only partition adapters are checkpointed, got {type(adapter).__name__}"
        )
    write_checkpoint(path, adapter.seed, adapter.mode, adapter.pm.dim, adapter.pm.total,
                     adapter.theta)


def read_checkpoint(path):
    """Parse the raw file without binding it to a manifest."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    if len(data) < _HEADER.size:
        raise FormatError(
            f"truncated header: need {_HEADER.size} bytes, file ends at offset {len(data)}"
        )
    magic, version, mode_code, seed, dim, total = _HEADER.unpack_from(data)
    if magic != CHECKPOINT_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {CHECKPOINT_MAGIC!r}")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    if mode_code not in _CODE_MODE:
        raise FormatError(f"unknown mode byte {mode_code} at offset 8")
    expected = _HEADER.size + 8 * dim
    if len(data) != expected:
        raise FormatError(
            f"bad payload length at offset {_HEADER.size}: header implies "
            f"{expected} bytes total, file has {len(data)}"
        )
    theta = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    return AdapterCheckpoint(seed, _CODE_MODE[mode_code], dim, total, theta)


def load_checkpoint(path, manifest):
    record = read_checkpoint(path)
    if record.total != manifest.total:
        raise CompatibilityError(
            f"checkpoint was built for {record.total} weights, manifest has {manifest.total}"
        )
    adapter = GPartAdapter(manifest, record.seed, record.dim, record.mode)
    adapter.theta = record.theta.copy()
    return adapter
