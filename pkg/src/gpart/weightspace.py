"""Flat view of a model's weight space.

A model here is an ordered list of dense layers. The manifest fixes, once,
how the stacked matrices map onto a single flat float64 vector: layers in
declaration order, each matrix flattened column by column. Every other
component (partitions, adapters, the trainer) speaks only in terms of that
flat vector and its offsets, so the convention lives in exactly one place.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CompatibilityError, FormatError, ValidationError


@dataclass(frozen=True)
class LayerSpec:
    name: str
    rows: int
    cols: int
    offset: int

    @property
    def size(self):
        return self.rows * self.cols


@dataclass(frozen=True)
class ModelManifest:
    layers: tuple
    total: int

    def layer(self, name):
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise ValidationError(f"manifest has no layer named {name!r}")


def build_manifest(shapes):
    """Build a manifest from [(name, rows, cols), ...] in layer order."""
    layers = []
    offset = 0
    seen = set()
    for name, rows, cols in shapes:
        if not name or any(ch.isspace() for ch in name):
            raise ValidationError(f"layer name {name!r} is empty or has whitespace")
        if name in seen:
            raise ValidationError(f"duplicate layer name {name!r}")
        if rows < 1 or cols < 1:
            raise ValidationError(f"layer {name!r} has non-positive shape {rows}x{cols}")
        seen.add(name)
        layers.append(LayerSpec(name, int(rows), int(cols), offset))
        offset += rows * cols
    if not layers:
        raise ValidationError("manifest needs at least one layer")
    return ModelManifest(tuple(layers), offset)


def flatten(manifest, matrices):
    """Pack per-layer matrices into one flat vector, column-major per layer."""
    if len(matrices) != len(manifest.layers):
        raise CompatibilityError(
            f"expected {len(manifest.layers)} matrices, got {len(matrices)}"
        )
    out = np.empty(manifest.total, dtype=np.float64)
    for spec, mat in zip(manifest.layers, matrices):
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (spec.rows, spec.cols):
            raise CompatibilityError(
                f"layer {spec.name!r} expects shape {(spec.rows, spec.cols)}, "
                f"got {mat.shape}"
            )
        out[spec.offset : spec.offset + spec.size] = mat.ravel(order="F")
    return out


def unflatten(manifest, vector):
    """Inverse of flatten; returns one matrix per layer."""
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (manifest.total,):
        raise CompatibilityError(
            f"expected a flat vector of length {manifest.total}, got shape {vector.shape}"
        )
    matrices = []
    for spec in manifest.layers:
        chunk = vector[spec.offset : spec.offset + spec.size]
        matrices.append(chunk.reshape((spec.rows, spec.cols), order="F").copy())
    return matrices


def layer_slice(manifest, name):
    spec = manifest.layer(name)
    return slice(spec.offset, spec.offset + spec.size)


def dump_manifest(manifest):
    """Serialize to the one-layer-per-line text form: name rows cols."""
    lines = [f"{spec.name} {spec.rows} {spec.cols}" for spec in manifest.layers]
    return "\n".join(lines) + "\n"


def load_manifest(text):
    shapes = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"manifest line {lineno}: expected 'name rows cols', got {raw!r}")
        name, rows, cols = parts
        try:
            rows, cols = int(rows), int(cols)
        except ValueError:
            raise FormatError(f"manifest line {lineno}: non-integer shape in {raw!r}") from None
        shapes.append((name, rows, cols))
    if not shapes:
        raise FormatError("manifest text has no layers")
    return build_manifest(shapes)
