"""Named executable checks for every documented invariant.

Each property is a zero-argument callable registered under a dotted name;
it raises AssertionError with a diagnostic on failure. run() executes all
properties (or a filtered subset) and prints one PASS or FAIL line per
name, which is what the verify subcommand exposes. Property bodies call
through module attributes (partition.project, not a local alias) so a
deliberately broken implementation fails here by name.
"""

import math
import os
import tempfile
from functools import lru_cache

import numpy as np

from . import adapters, geometry, partition, trainer, weightspace
from .errors import GPartError

_PROPERTIES = []


def _prop(name):
    def register(fn):
        _PROPERTIES.append((name, fn))
        return fn

    return register


def property_names():
    return [name for name, _ in _PROPERTIES]


def run(filter_text=None, out=print):
    """Run all (or matching) properties; returns (passed, failed) name lists."""
    selected = [(n, f) for n, f in _PROPERTIES if not filter_text or filter_text in n]
    passed, failed = [], []
    for name, fn in selected:
        try:
            fn()
        except AssertionError as exc:
            failed.append(name)
            out(f"FAIL {name}: {exc}")
        except GPartError as exc:
            failed.append(name)
            out(f"FAIL {name}: unexpected error: {exc}")
        else:
            passed.append(name)
            out(f"PASS {name}")
    out(f"{len(passed)} passed, {len(failed)} failed")
    return passed, failed


@lru_cache(maxsize=None)
def _tiny_setup():
    """Small pretrained network shared by the trainer and geometry checks."""
    config = trainer.NetworkConfig((8, 12, 4))
    task_pre, task_fin = trainer.make_task(5, 200, 8, 4, 1.1)
    w0, _ = trainer.pretrain(config, task_pre, epochs=12, batch_size=25, lr=0.01,
                             weight_decay=0.1, init_seed=3, train_seed=4)
    return config, task_pre, task_fin, w0


@_prop("weightspace.roundtrip")
def _ws_roundtrip():
    rng = np.random.default_rng(10)
    for _ in range(5):
        shapes = [(f"m{k}", int(rng.integers(1, 7)), int(rng.integers(1, 7)))
                  for k in range(int(rng.integers(1, 5)))]
        manifest = weightspace.build_manifest(shapes)
        vec = rng.normal(size=manifest.total)
        back = weightspace.flatten(manifest, weightspace.unflatten(manifest, vec))
        assert np.array_equal(back, vec), "flatten(unflatten(v)) changed bits"


@_prop("weightspace.offsets")
def _ws_offsets():
    manifest = weightspace.build_manifest([("a", 2, 3), ("b", 4, 1), ("c", 5, 5)])
    expected = 0
    for spec in manifest.layers:
        assert spec.offset == expected, f"offset {spec.offset} != {expected} for {spec.name}"
        expected += spec.size
    assert manifest.total == expected, "total is not the sum of layer sizes"


@_prop("partition.balance")
def _pt_balance():
    rng = np.random.default_rng(11)
    for _ in range(20):
        total = int(rng.integers(1, 500))
        dim = int(rng.integers(1, total + 1))
        pm = partition.build_partition(int(rng.integers(0, 2**63)), total, dim)
        sizes = pm.group_sizes
        assert sizes.min() >= 1, "empty group"
        assert sizes.sum() == total, "group sizes do not cover the space"
        assert sizes.max() - sizes.min() <= 1, f"unbalanced: {sizes.min()}..{sizes.max()}"


@_prop("partition.determinism")
def _pt_determinism():
    for seed, total, dim in ((0, 100, 7), (42, 6, 3), (2**64 - 1, 257, 31)):
        a = partition.build_partition(seed, total, dim)
        b = partition.build_partition(seed, total, dim)
        assert np.array_equal(a.assignment, b.assignment), "assignment differs across builds"
        assert np.array_equal(a.group_sizes, b.group_sizes), "sizes differ across builds"


@_prop("partition.orthonormality")
def _pt_orthonormality():
    rng = np.random.default_rng(12)
    for _ in range(10):
        total = int(rng.integers(1, 400))
        dim = int(rng.integers(1, total + 1))
        pm = partition.build_partition(int(rng.integers(0, 2**63)), total, dim)
        dense = partition.materialize(pm)
        dev = np.abs(dense.T @ dense - np.eye(dim)).max()
        assert dev <= 1e-12, f"max |P^T P - I| = {dev:.3e} at N={total}, d={dim}"


@_prop("partition.isometry")
def _pt_isometry():
    pm = partition.build_partition(9, 5376, 256)
    rng = np.random.default_rng(13)
    for _ in range(200):
        t1 = rng.normal(size=pm.dim)
        t2 = rng.normal(size=pm.dim)
        ref = np.linalg.norm(t1 - t2)
        got = np.linalg.norm(partition.project(pm, t1) - partition.project(pm, t2))
        assert abs(got - ref) <= 1e-12 * ref, f"distance moved by {abs(got - ref):.3e}"


@_prop("partition.left-inverse")
def _pt_left_inverse():
    rng = np.random.default_rng(14)
    pm = partition.build_partition(15, 997, 31)
    for _ in range(50):
        theta = rng.normal(size=pm.dim)
        back = partition.pullback(pm, partition.project(pm, theta))
        err = np.linalg.norm(back - theta) / np.linalg.norm(theta)
        assert err <= 1e-13, f"pullback(project(theta)) off by {err:.3e} relative"


@_prop("partition.idempotence")
def _pt_idempotence():
    rng = np.random.default_rng(16)
    pm = partition.build_partition(17, 600, 40)
    for _ in range(20):
        v = rng.normal(size=pm.total)
        once = partition.project(pm, partition.pullback(pm, v))
        twice = partition.project(pm, partition.pullback(pm, once))
        err = np.linalg.norm(twice - once)
        assert err <= 1e-12 * max(1.0, np.linalg.norm(once)), f"projector drifts by {err:.3e}"


@_prop("partition.pullback-contraction")
def _pt_contraction():
    rng = np.random.default_rng(18)
    pm = partition.build_partition(19, 1200, 37)
    for _ in range(100):
        v = rng.normal(size=pm.total)
        assert np.linalg.norm(partition.pullback(pm, v)) <= np.linalg.norm(v) * (1 + 1e-12), \
            "pullback grew the norm"


@_prop("adapters.weight-decay-identity")
def _ad_decay_identity():
    manifest = weightspace.build_manifest([("a", 30, 20), ("b", 20, 11)])
    adapter = adapters.GPartAdapter(manifest, 21, 97)
    rng = np.random.default_rng(22)
    for _ in range(30):
        adapter.theta = rng.normal(size=97)
        _, _, ratio = geometry.weight_decay_audit(adapter)
        assert abs(ratio - 1.0) <= 1e-12, f"isometric decay ratio {ratio!r}"


@_prop("adapters.nonisometric-scaling")
def _ad_noniso_scaling():
    manifest = weightspace.build_manifest([("a", 30, 20), ("b", 20, 11)])
    adapter = adapters.GPartAdapter(manifest, 23, 97, "nonisometric")
    lo = math.floor(manifest.total / 97)
    hi = math.ceil(manifest.total / 97)
    rng = np.random.default_rng(24)
    for _ in range(30):
        adapter.theta = rng.normal(size=97)
        _, _, ratio = geometry.weight_decay_audit(adapter)
        assert lo - 1e-9 <= ratio <= hi + 1e-9, f"ratio {ratio} outside [{lo}, {hi}]"


@_prop("adapters.injectivity")
def _ad_injectivity():
    pm = partition.build_partition(25, 512, 48)
    rng = np.random.default_rng(26)
    for _ in range(50):
        t1 = rng.normal(size=pm.dim)
        t2 = rng.normal(size=pm.dim)
        ref = np.linalg.norm(t1 - t2)
        gap = np.linalg.norm(partition.project(pm, t1) - partition.project(pm, t2))
        assert gap >= (1 - 1e-12) * ref, "distinct coordinates collapsed in weight space"


@_prop("adapters.lora-gauge")
def _ad_lora_gauge():
    rng = np.random.default_rng(27)
    B = rng.normal(size=(9, 3))
    A = rng.normal(size=(3, 7))
    report = geometry.symmetry_suite(A, B, seeds=range(5))
    gauge = [c for c in report.checks if c.name == "gauge"]
    assert all(c.ok for c in gauge), f"worst gauge residual {max(c.value for c in gauge):.3e}"


@_prop("adapters.lora-scale")
def _ad_lora_scale():
    rng = np.random.default_rng(28)
    B = rng.normal(size=(9, 3))
    A = rng.normal(size=(3, 7))
    report = geometry.symmetry_suite(A, B, seeds=range(5))
    scale = [c for c in report.checks if c.name.startswith("scale")]
    assert all(c.ok for c in scale), f"worst scale residual {max(c.value for c in scale):.3e}"


@_prop("adapters.frobenius-chain")
def _ad_frobenius():
    rng = np.random.default_rng(29)
    for _ in range(200):
        B = rng.normal(size=(6, 2))
        A = rng.normal(size=(2, 5))
        prod = np.linalg.norm(B @ A)
        sep = np.linalg.norm(B) * np.linalg.norm(A)
        half = 0.5 * (np.linalg.norm(A) ** 2 + np.linalg.norm(B) ** 2)
        assert prod <= sep * (1 + 1e-12) and sep <= half * (1 + 1e-12), \
            f"chain broken: {prod} vs {sep} vs {half}"


@_prop("adapters.checkpoint-roundtrip")
def _ad_checkpoint():
    manifest = weightspace.build_manifest([("a", 10, 8), ("b", 8, 5)])
    adapter = adapters.GPartAdapter(manifest, 31, 24)
    adapter.theta = np.random.default_rng(32).normal(size=24)
    fd, path = tempfile.mkstemp(suffix=".gprt")
    os.close(fd)
    try:
        adapters.save_checkpoint(adapter, path)
        loaded = adapters.load_checkpoint(path, manifest)
    finally:
        os.unlink(path)
    assert np.array_equal(loaded.theta, adapter.theta), "theta changed across round trip"
    assert np.array_equal(loaded.pm.assignment, adapter.pm.assignment), "partition changed"
    w0 = np.random.default_rng(33).normal(size=manifest.total)
    assert np.array_equal(loaded.merge(w0), adapter.merge(w0)), "merge differs after reload"


@_prop("trainer.gradient-finite-difference")
def _tr_grad_fd():
    config, _, task, w0 = _tiny_setup()
    x, y = task.x_train[:64], task.y_train[:64]
    w = w0 + np.random.default_rng(34).normal(0.0, 0.05, size=w0.shape)
    _, grad = trainer.loss_and_grad(config, w, x, y)
    rng = np.random.default_rng(35)
    idx = rng.choice(len(w), size=60, replace=False)
    h = 1e-5
    for i in idx:
        wp = w.copy()
        wp[i] += h
        wm = w.copy()
        wm[i] -= h
        fd = (trainer.loss_and_grad(config, wp, x, y)[0]
              - trainer.loss_and_grad(config, wm, x, y)[0]) / (2 * h)
        rel = abs(fd - grad[i]) / max(abs(grad[i]), 1e-8)
        assert rel <= 1e-5, f"component {i}: analytic {grad[i]:.3e}, fd {fd:.3e}"


@_prop("trainer.gradient-chain")
def _tr_grad_chain():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    adapter = adapters.GPartAdapter(manifest, 36, 32)
    x, y = task.x_train[:64], task.y_train[:64]
    theta = np.random.default_rng(37).normal(0.0, 0.3, size=32)

    def loss_at(t):
        return trainer.loss_and_grad(config, w0 + adapter.delta_at(t), x, y)[0]

    _, grad_w = trainer.loss_and_grad(config, w0 + adapter.delta_at(theta), x, y)
    grad_theta = adapter.pullback_grad(grad_w)
    h = 1e-5
    for i in range(32):
        tp = theta.copy()
        tp[i] += h
        tm = theta.copy()
        tm[i] -= h
        fd = (loss_at(tp) - loss_at(tm)) / (2 * h)
        rel = abs(fd - grad_theta[i]) / max(abs(grad_theta[i]), 1e-8)
        assert rel <= 1e-5, f"coordinate {i}: pullback {grad_theta[i]:.3e}, fd {fd:.3e}"


@_prop("trainer.gradient-contraction")
def _tr_grad_contraction():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    adapter = adapters.GPartAdapter(manifest, 38, 32)
    rng = np.random.default_rng(39)
    for _ in range(5):
        theta = rng.normal(0.0, 0.3, size=32)
        _, grad_w = trainer.loss_and_grad(config, w0 + adapter.delta_at(theta),
                                          task.x_train[:64], task.y_train[:64])
        grad_theta = adapter.pullback_grad(grad_w)
        assert np.linalg.norm(grad_theta) <= np.linalg.norm(grad_w) * (1 + 1e-12), \
            "coordinate gradient outgrew the weight gradient"


@_prop("trainer.determinism")
def _tr_determinism():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    records = []
    for _ in range(2):
        adapter = adapters.GPartAdapter(manifest, 40, 16)
        _, record = trainer.finetune(adapter, w0, config, task, epochs=3, batch_size=25,
                                     lr=0.02, weight_decay=0.1, seed=41)
        records.append(record)
    assert records[0].to_csv() == records[1].to_csv(), "identical runs diverged"


@_prop("trainer.base-weights-frozen")
def _tr_base_frozen():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    before = w0.copy()
    adapter = adapters.GPartAdapter(manifest, 42, 16)
    trainer.finetune(adapter, w0, config, task, epochs=2, batch_size=25,
                     lr=0.02, weight_decay=0.1, seed=43)
    assert np.array_equal(w0, before), "training mutated the base weights"


@_prop("geometry.landscape-center")
def _ge_landscape_center():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    adapter = adapters.GPartAdapter(manifest, 44, 16)
    adapter.theta = np.random.default_rng(45).normal(size=16)
    spec = geometry.LandscapeSpec(grid_size=5, direction_seeds=(1, 2))
    grid = geometry.loss_landscape(adapter, w0, config, task, spec)
    center = spec.grid_size // 2
    assert grid.alphas[center] == 0.0, "odd grid should contain the origin"
    for s in range(len(spec.direction_seeds)):
        assert grid.values[s, center, center] == grid.base_loss, \
            f"center cell differs from base loss for seed index {s}"


@_prop("geometry.landscape-dual")
def _ge_landscape_dual():
    config, _, task, w0 = _tiny_setup()
    manifest = trainer.network_manifest(config)
    adapter = adapters.GPartAdapter(manifest, 46, 16)
    adapter.theta = np.random.default_rng(47).normal(size=16)
    spec = geometry.LandscapeSpec(grid_size=4, direction_seeds=(3,))
    grid = geometry.loss_landscape(adapter, w0, config, task, spec)
    d1, d2 = geometry.random_directions(3, adapter.theta)
    w_star = w0 + adapter.delta()
    p1 = partition.project(adapter.pm, d1)
    p2 = partition.project(adapter.pm, d2)
    for i, a in enumerate(grid.alphas):
        for j, b in enumerate(grid.betas):
            dual, _ = trainer.evaluate(config, w_star + a * p1 + b * p2,
                                       task.x_dev, task.y_dev)
            assert abs(dual - grid.values[0, i, j]) <= 1e-12, \
                f"dual evaluation differs at cell ({i}, {j})"


@_prop("geometry.jacobian-fd")
def _ge_jacobian_fd():
    rng = np.random.default_rng(48)
    B = rng.normal(size=(5, 2))
    A = rng.normal(size=(2, 4))
    j_a, j_b = geometry.lora_jacobian_blocks(A, B)
    h = 1e-6
    for k in range(A.size):
        e = np.zeros(A.size)
        e[k] = h
        ap = A + e.reshape(A.shape, order="F")
        am = A - e.reshape(A.shape, order="F")
        fd = (np.ravel(B @ ap, order="F") - np.ravel(B @ am, order="F")) / (2 * h)
        assert np.max(np.abs(fd - j_a[:, k])) <= 1e-7, f"J_A column {k} mismatch"
    for k in range(B.size):
        e = np.zeros(B.size)
        e[k] = h
        bp = B + e.reshape(B.shape, order="F")
        bm = B - e.reshape(B.shape, order="F")
        fd = (np.ravel(bp @ A, order="F") - np.ravel(bm @ A, order="F")) / (2 * h)
        assert np.max(np.abs(fd - j_b[:, k])) <= 1e-7, f"J_B column {k} mismatch"


@_prop("geometry.distortion-isometric")
def _ge_distortion_iso():
    manifest = weightspace.build_manifest([("a", 16, 8)])
    adapter = adapters.GPartAdapter(manifest, 49, 24)
    report = geometry.distortion_probe("gpart_iso", adapter, num_pairs=200, seed=50)
    assert report.spread <= 1 + 1e-12, f"isometric spread {report.spread!r}"


@_prop("geometry.distortion-lora")
def _ge_distortion_lora():
    manifest = weightspace.build_manifest([("a", 8, 8)])
    adapter = adapters.LoRAAdapter(manifest, 51, 2)
    report = geometry.distortion_probe("lora", adapter, num_pairs=200, seed=52)
    assert report.spread > 1.0, f"bilinear map measured as isometric: {report.spread!r}"


@_prop("geometry.symmetry-suite")
def _ge_symmetry():
    rng = np.random.default_rng(53)
    B = rng.normal(size=(10, 3))
    A = rng.normal(size=(3, 8))
    report = geometry.symmetry_suite(A, B, seeds=range(20))
    bad = [c for c in report.checks if not c.ok]
    assert report.passed, f"failing checks: {[(c.name, c.seed) for c in bad]}"
