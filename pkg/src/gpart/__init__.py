"""Isometric subspace fine-tuning on a desk-scale stack.

A d-dimensional trainable vector is scattered into the N weights of a
small network through a seeded, balanced partition; the induced linear
map is an exact isometry, which the property suite and the toy
experiments here check end to end against low-rank and full baselines.
"""

from .adapters import (
    AdapterCheckpoint,
    FullFTAdapter,
    GPartAdapter,
    LoRAAdapter,
    UniLoRAAdapter,
    factor_space,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    write_checkpoint,
)
from .backend import BACKEND
from .errors import (
    CompatibilityError,
    ConfigError,
    FormatError,
    GPartError,
    NumericError,
    ValidationError,
)
from .partition import PartitionMap, build_partition, materialize
from .trainer import NetworkConfig, TaskData, finetune, make_task, network_manifest, pretrain
from .weightspace import LayerSpec, ModelManifest, build_manifest

__version__ = "0.1.0"

__all__ = [
    "AdapterCheckpoint",
    "BACKEND",
    "CompatibilityError",
    "ConfigError",
    "FormatError",
    "FullFTAdapter",
    "GPartAdapter",
    "GPartError",
    "LayerSpec",
    "LoRAAdapter",
    "ModelManifest",
    "NetworkConfig",
    "NumericError",
    "PartitionMap",
    "TaskData",
    "UniLoRAAdapter",
    "ValidationError",
    "build_manifest",
    "build_partition",
    "factor_space",
    "finetune",
    "load_checkpoint",
    "make_task",
    "materialize",
    "network_manifest",
    "pretrain",
    "read_checkpoint",
    "save_checkpoint",
    "write_checkpoint",
    "__version__",
]
