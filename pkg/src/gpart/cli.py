"""Command-line front end.

Subcommands: verify, train, landscape, sweep, pack, unpack. Runs are
driven by a flat ``key = value`` config file; every key has a documented
default, unknown keys are rejected with their line number, and all
randomness flows from seeds named in the config, so identical inputs
produce byte-identical output files.

Exit codes: 0 success, 1 failed properties under verify, 2 configuration
or validation error, 3 numeric error, 4 malformed file.
"""

import argparse
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from . import adapters, backend, geometry, trainer, verify
from .errors import ConfigError, FormatError, GPartError, NumericError, ValidationError

ADAPTER_KINDS = ("gpart_iso", "gpart_noniso", "lora", "unilora", "fullft")


@dataclass(frozen=True)
class RunConfig:
    adapter: str = "gpart_iso"
    dim: int = 256
    rank: int = 4
    partition_seed: int = 7
    data_seed: int = 11
    init_seed: int = 13
    train_seed: int = 17
    network_dims: tuple = (16, 64, 64, 4)
    samples: int = 640
    shift_angle: float = 1.25
    adapt_head: bool = True
    epochs: int = 30
    batch_size: int = 32
    lr: float = 0.02
    weight_decay: float = 0.1
    warmup_ratio: float = 0.06
    schedule: str = "linear"
    pretrain_epochs: int = 40
    pretrain_lr: float = 0.01
    out_dir: str = "runs/default"
    grid_size: int = 30
    alpha_min: float = -0.5
    alpha_max: float = 0.5
    beta_min: float = -0.5
    beta_max: float = 0.5
    direction_seeds: tuple = (101, 202, 303)
    repeats: int = 2


def _parse_bool(text):
    lowered = text.lower()
    if lowered not in ("true", "false"):
        raise ValueError(f"expected true or false, got {text!r}")
    return lowered == "true"


def _parse_int_list(text):
    return tuple(int(part.strip()) for part in text.split(","))


def _parse_choice(options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text

    return parse


def _render(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "adapter": _parse_choice(ADAPTER_KINDS),
    "schedule": _parse_choice(("linear", "cosine")),
    "network_dims": _parse_int_list,
    "direction_seeds": _parse_int_list,
    "adapt_head": _parse_bool,
    "out_dir": str,
}
for _field in fields(RunConfig):
    if _field.name not in _PARSERS:
        _PARSERS[_field.name] = type(_field.default)


def parse_config_text(text):
    """-> (values dict, key -> line number dict). Strict about keys."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    return values, lines


def _bad(lines, key, message):
    prefix = f"line {lines[key]}: " if key in lines else ""
    return ConfigError(f"{prefix}{key}: {message}")


def _validate(cfg, lines):
    dims = cfg.network_dims
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise _bad(lines, "network_dims", f"need at least two positive dims, got {dims}")
    if not cfg.adapt_head and len(dims) < 3:
        raise _bad(lines, "adapt_head", "excluding the head leaves nothing to adapt")
    for key in ("partition_seed", "data_seed", "init_seed", "train_seed"):
        seed = getattr(cfg, key)
        if not 0 <= seed < 2**64:
            raise _bad(lines, key, f"must fit in 64 unsigned bits, got {seed}")
    for seed in cfg.direction_seeds:
        if not 0 <= seed < 2**64:
            raise _bad(lines, "direction_seeds", f"must fit in 64 unsigned bits, got {seed}")
    positive = (("samples", 10), ("batch_size", 1), ("rank", 1), ("dim", 1),
                ("repeats", 1), ("grid_size", 2))
    for key, floor in positive:
        if getattr(cfg, key) < floor:
            raise _bad(lines, key, f"must be at least {floor}, got {getattr(cfg, key)}")
    for key in ("epochs", "pretrain_epochs"):
        if getattr(cfg, key) < 0:
            raise _bad(lines, key, f"must be non-negative, got {getattr(cfg, key)}")
    for key in ("lr", "pretrain_lr"):
        if getattr(cfg, key) <= 0:
            raise _bad(lines, key, f"must be positive, got {getattr(cfg, key)}")
    if cfg.weight_decay < 0:
        raise _bad(lines, "weight_decay", f"must be non-negative, got {cfg.weight_decay}")
    if not 0 <= cfg.warmup_ratio <= 1:
        raise _bad(lines, "warmup_ratio", f"must be in [0, 1], got {cfg.warmup_ratio}")
    if cfg.alpha_min >= cfg.alpha_max:
        raise _bad(lines, "alpha_min", "alpha range is empty")
    if cfg.beta_min >= cfg.beta_max:
        raise _bad(lines, "beta_min", "beta range is empty")
    net = trainer.NetworkConfig(dims)
    manifest = trainer.network_manifest(net, cfg.adapt_head)
    if cfg.adapter in ("gpart_iso", "gpart_noniso") and cfg.dim > manifest.total:
        raise _bad(lines, "dim",
                   f"{cfg.dim} exceeds the {manifest.total} adaptable weights")
    if cfg.adapter == "unilora":
        factor_total = adapters.factor_space(manifest, cfg.rank).total
        if cfg.dim > factor_total:
            raise _bad(lines, "dim",
                       f"{cfg.dim} exceeds the {factor_total} stacked factor entries")


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    values, lines = parse_config_text(text)
    cfg = RunConfig(**values)
    _validate(cfg, lines)
    return cfg


def render_config(cfg):
    """Canonical echo of every resolved key, in schema order."""
    lines = [f"{f.name} = {_render(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"


def _build_adapter(cfg, manifest):
    if cfg.adapter == "gpart_iso":
        return adapters.GPartAdapter(manifest, cfg.partition_seed, cfg.dim, "isometric")
    if cfg.adapter == "gpart_noniso":
        return adapters.GPartAdapter(manifest, cfg.partition_seed, cfg.dim, "nonisometric")
    if cfg.adapter == "lora":
        return adapters.LoRAAdapter(manifest, cfg.init_seed, cfg.rank)
    if cfg.adapter == "unilora":
        return adapters.UniLoRAAdapter(manifest, cfg.partition_seed, cfg.dim, cfg.rank)
    return adapters.FullFTAdapter(manifest)


def _prepare_run(cfg):
    """Task, pretrained base weights, and the adapted manifest for a config."""
    net = trainer.NetworkConfig(cfg.network_dims)
    task_pre, task_fin = trainer.make_task(cfg.data_seed, cfg.samples, net.features,
                                           net.classes, cfg.shift_angle)
    w0, pre_record = trainer.pretrain(net, task_pre, cfg.pretrain_epochs, cfg.batch_size,
                                      cfg.pretrain_lr, cfg.weight_decay, cfg.init_seed,
                                      cfg.train_seed, cfg.schedule, cfg.warmup_ratio)
    manifest = trainer.network_manifest(net, cfg.adapt_head)
    return net, task_fin, w0, pre_record, manifest


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    print(f"wrote {path}")


def cmd_verify(args):
    passed, failed = verify.run(args.filter)
    if not passed and not failed:
        print(f"error: no properties match {args.filter!r}", file=sys.stderr)
        return 2
    return 0 if not failed else 1


def cmd_train(args):
    cfg = load_config(args.config)
    if args.exclude_head:
        cfg = replace(cfg, adapt_head=False)
        _validate(cfg, {})
    net, task_fin, w0, pre_record, manifest = _prepare_run(cfg)
    frozen_loss, frozen_acc = trainer.evaluate(net, w0, task_fin.x_dev, task_fin.y_dev)
    adapter = _build_adapter(cfg, manifest)
    adapter, record = trainer.finetune(adapter, w0, net, task_fin, cfg.epochs,
                                       cfg.batch_size, cfg.lr, cfg.weight_decay,
                                       cfg.train_seed, cfg.schedule, cfg.warmup_ratio)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"backend = {backend.BACKEND}")
    print(f"trainable = {adapter.count_trainable()}")
    print(f"pretrain_best_dev_acc = {pre_record.best_dev_acc:.10g}")
    print(f"frozen_dev_loss = {frozen_loss:.10g}")
    print(f"frozen_dev_acc = {frozen_acc:.10g}")
    if len(record):
        print(f"best_epoch = {record.best_epoch}")
        print(f"best_dev_acc = {record.best_dev_acc:.10g}")
    _write(out_dir / "record.csv", record.to_csv())
    if isinstance(adapter, adapters.GPartAdapter):
        adapters.save_checkpoint(adapter, out_dir / "adapter.gprt")
        print(f"wrote {out_dir / 'adapter.gprt'}")
    _write(out_dir / "resolved.cfg", render_config(cfg))
    return 0


def cmd_landscape(args):
    cfg = load_config(args.config)
    net, task_fin, w0, _, manifest = _prepare_run(cfg)
    adapter = adapters.load_checkpoint(args.checkpoint, manifest)
    spec = geometry.LandscapeSpec(cfg.grid_size, (cfg.alpha_min, cfg.alpha_max),
                                  (cfg.beta_min, cfg.beta_max),
                                  tuple(cfg.direction_seeds))
    grid = geometry.loss_landscape(adapter, w0, net, task_fin, spec,
                                   parallel=args.parallel)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    print(f"base_dev_loss = {grid.base_loss:.10g}")
    print(f"flagged_cells = {int(grid.flagged.sum())}")
    _write(out_dir / "landscape.csv", geometry.landscape_csv(grid))
    return 0


def cmd_sweep(args):
    cfg = load_config(args.config)
    net, task_fin, w0, _, manifest = _prepare_run(cfg)
    if args.dims:
        try:
            d_values = _parse_int_list(args.dims)
        except ValueError as exc:
            raise ConfigError(f"--dims: {exc}") from None
    else:
        d_values = tuple(d for d in (1, 4, 16, 64, 256, 1024) if d < manifest.total)
        d_values += (manifest.total,)
    repeats = args.repeats if args.repeats is not None else cfg.repeats
    mode = "nonisometric" if cfg.adapter == "gpart_noniso" else "isometric"
    rows = geometry.dim_sweep(d_values, w0, net, task_fin, repeats,
                              epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                              weight_decay=cfg.weight_decay,
                              partition_seed=cfg.partition_seed,
                              train_seed=cfg.train_seed, schedule=cfg.schedule,
                              warmup_ratio=cfg.warmup_ratio, mode=mode,
                              manifest=manifest)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for row in rows:
        print(f"d = {row.dim}: dev_acc = {row.mean:.10g} +- {row.std:.10g}")
    _write(out_dir / "sweep.csv", geometry.sweep_csv(rows))
    return 0


def _read_theta_csv(path):
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    values = []
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if lineno == 1 and line == "theta":
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: not a number: {line!r}") from None
    if not values:
        raise FormatError(f"{path}: no values")
    return np.asarray(values)


def _theta_csv(theta):
    return "\n".join(["theta"] + [repr(float(v)) for v in theta]) + "\n"


def cmd_pack(args):
    theta = _read_theta_csv(args.theta_csv)
    if len(theta) != args.dim:
        raise ValidationError(f"theta csv has {len(theta)} values, --dim says {args.dim}")
    adapters.write_checkpoint(args.out, args.seed, args.mode, args.dim, args.total, theta)
    print(f"wrote {args.out}")
    return 0


def cmd_unpack(args):
    record = adapters.read_checkpoint(args.checkpoint)
    print(f"seed = {record.seed}")
    print(f"dim = {record.dim}")
    print(f"total = {record.total}")
    print(f"mode = {record.mode}")
    _write(Path(args.out_csv), _theta_csv(record.theta))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gpart",
        description="desk-scale laboratory for isometric subspace fine-tuning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the named property suite")
    p.add_argument("--filter", default=None, help="substring selecting properties")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="pretrain, adapt, and record a run")
    p.add_argument("config", help="path to a key = value config file")
    p.add_argument("--exclude-head", action="store_true",
                   help="freeze the final layer instead of adapting it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("landscape", help="export a dev-loss grid around a checkpoint")
    p.add_argument("config")
    p.add_argument("checkpoint")
    p.add_argument("--parallel", action="store_true",
                   help="evaluate grid cells on a thread pool")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("sweep", help="dev accuracy as a function of dimension")
    p.add_argument("config")
    p.add_argument("--dims", default=None, help="comma-separated dimension list")
    p.add_argument("--repeats", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pack", help="build a binary checkpoint from a theta csv")
    p.add_argument("theta_csv")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--mode", choices=("isometric", "nonisometric"), default="isometric")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("unpack", help="print checkpoint metadata and emit theta csv")
    p.add_argument("checkpoint")
    p.add_argument("out_csv")
    p.set_defaults(func=cmd_unpack)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except GPartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
