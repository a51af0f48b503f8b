import math
import struct

import numpy as np
import pytest

from gpart import adapters, partition, weightspace
from gpart.errors import CompatibilityError, FormatError, ValidationError


def small_manifest():
    return weightspace.build_manifest([("up", 3, 2), ("down", 2, 1)])


def test_zero_state_gives_zero_delta_for_every_kind():
    m = small_manifest()
    kinds = [
        adapters.GPartAdapter(m, 1, 3, "isometric"),
        adapters.GPartAdapter(m, 1, 3, "nonisometric"),
        adapters.LoRAAdapter(m, 1, 2),
        adapters.UniLoRAAdapter(m, 1, 4, 2),
        adapters.FullFTAdapter(m),
    ]
    for ad in kinds:
        zero = np.zeros(ad.count_trainable())
        assert not ad.delta_at(zero).any(), ad.kind


def test_gpart_delta_matches_partition_golden():
    m = weightspace.build_manifest([("w", 3, 2)])
    ad = adapters.GPartAdapter(m, 42, 3)
    ad.theta = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(ad.delta(), partition.project(ad.pm, ad.theta))
    s = 1.0 / math.sqrt(2.0)
    assert ad.delta().tolist() == pytest.approx(
        [-s, 2 * s, -s, 3 * s, 3 * s, 2 * s], rel=1e-15, abs=0)


def test_gpart_nonisometric_balanced_example():
    m = weightspace.build_manifest([("w", 2, 4)])
    ad = adapters.GPartAdapter(m, 5, 2, "nonisometric")
    ad.theta = np.array([1.0, 1.0])
    delta = ad.delta()
    assert delta.tolist() == [1.0] * 8
    assert delta @ delta == 8.0


def test_gpart_isometric_norm_identity():
    m = weightspace.build_manifest([("w", 13, 7)])
    rng = np.random.default_rng(0)
    ad = adapters.GPartAdapter(m, 9, 17)
    for _ in range(20):
        theta = rng.normal(size=17)
        delta = ad.delta_at(theta)
        assert abs(delta @ delta - theta @ theta) <= 1e-12 * (theta @ theta)


def test_gpart_injectivity():
    m = weightspace.build_manifest([("w", 10, 10)])
    ad = adapters.GPartAdapter(m, 3, 12)
    rng = np.random.default_rng(1)
    for _ in range(20):
        a = rng.normal(size=12)
        b = rng.normal(size=12)
        gap = np.linalg.norm(ad.delta_at(a) - ad.delta_at(b))
        assert gap >= (1 - 1e-12) * np.linalg.norm(a - b)


def test_merge_examples():
    m = small_manifest()
    ad = adapters.GPartAdapter(m, 1, 4)
    w0 = np.arange(float(m.total))
    merged = ad.merge(w0)
    assert np.array_equal(merged, w0)
    assert merged is not w0
    ad.theta = np.ones(4)
    assert np.array_equal(ad.merge(np.zeros(m.total)), ad.delta())
    with pytest.raises(CompatibilityError):
        ad.merge(np.zeros(m.total + 1))


def test_merge_with_d_equal_n_reaches_any_target():
    m = weightspace.build_manifest([("w", 4, 3)])
    ad = adapters.GPartAdapter(m, 8, m.total)
    target = np.random.default_rng(2).normal(size=m.total)
    mat = partition.materialize(ad.pm)
    ad.theta = mat.T @ target
    assert np.allclose(ad.merge(np.zeros(m.total)), target, rtol=0, atol=1e-14)


def test_lora_hand_example():
    m = weightspace.build_manifest([("w", 2, 2)])
    ad = adapters.LoRAAdapter(m, 0, 1)
    ad.theta = weightspace.flatten(
        ad.factor_manifest, [np.array([[1.0], [0.0]]), np.array([[0.0, 2.0]])])
    (b, a), = ad.factors()
    assert np.array_equal(b @ a, np.array([[0.0, 2.0], [0.0, 0.0]]))
    assert ad.delta().tolist() == [0.0, 0.0, 2.0, 0.0]


def test_lora_initialization():
    m = small_manifest()
    ad = adapters.LoRAAdapter(m, 11, 2)
    for b, a in ad.factors():
        assert not b.any()
        assert a.any()
    assert not ad.delta().any()
    big = adapters.LoRAAdapter(weightspace.build_manifest([("w", 50, 400)]), 11, 4)
    a = big.factors()[0][1]
    assert 0.015 < a.std() < 0.025
    again = adapters.LoRAAdapter(m, 11, 2)
    assert np.array_equal(again.theta, ad.theta)


def test_lora_pullback_matches_kron_jacobians():
    m = weightspace.build_manifest([("w", 3, 4)])
    ad = adapters.LoRAAdapter(m, 7, 2)
    rng = np.random.default_rng(3)
    b = rng.normal(size=(3, 2))
    a = rng.normal(size=(2, 4))
    ad.theta = weightspace.flatten(ad.factor_manifest, [b, a])
    g = rng.normal(size=(3, 4))
    grad = ad.pullback_grad(weightspace.flatten(m, [g]))
    gb, ga = weightspace.unflatten(ad.factor_manifest, grad)
    j_a = np.kron(np.eye(4), b)
    j_b = np.kron(a.T, np.eye(3))
    vec_g = g.flatten(order="F")
    assert np.allclose(ga.flatten(order="F"), j_a.T @ vec_g, rtol=1e-13, atol=0)
    assert np.allclose(gb.flatten(order="F"), j_b.T @ vec_g, rtol=1e-13, atol=0)


def test_lora_gradient_asymmetry_at_init():
    m = weightspace.build_manifest([("w", 4, 5)])
    ad = adapters.LoRAAdapter(m, 13, 2)
    g = np.random.default_rng(4).normal(size=m.total)
    gb, ga = weightspace.unflatten(ad.factor_manifest, ad.pullback_grad(g))
    assert not ga.any()
    assert gb.any()


def test_unilora_reconstruction_order():
    m = small_manifest()
    ad = adapters.UniLoRAAdapter(m, 21, 5, 2)
    theta = np.random.default_rng(5).normal(size=5)
    factor_vec = partition.project(ad.factor_pm, theta)
    mats = weightspace.unflatten(ad.factor_manifest, factor_vec)
    for (b, a), wb, wa in zip(ad.factors_at(theta), mats[0::2], mats[1::2]):
        assert np.array_equal(b, wb)
        assert np.array_equal(a, wa)
    deltas = [b @ a for b, a in zip(mats[0::2], mats[1::2])]
    assert np.array_equal(ad.delta_at(theta), weightspace.flatten(m, deltas))


def test_unilora_init_scale_and_determinism():
    m = weightspace.build_manifest([("w", 40, 30)])
    ad = adapters.UniLoRAAdapter(m, 6, 64, 4)
    assert ad.theta.shape == (64,)
    assert 0 < np.abs(ad.theta).max() < 1e-2
    again = adapters.UniLoRAAdapter(m, 6, 64, 4)
    assert np.array_equal(ad.theta, again.theta)


def test_unilora_pullback_is_gradient_of_inner_product():
    m = small_manifest()
    ad = adapters.UniLoRAAdapter(m, 31, 6, 2)
    rng = np.random.default_rng(7)
    ad.theta = rng.normal(scale=0.5, size=6)
    g = rng.normal(size=m.total)
    grad = ad.pullback_grad(g)
    step = 1e-6
    for k in range(6):
        tp = ad.theta.copy()
        tp[k] += step
        tm = ad.theta.copy()
        tm[k] -= step
        fd = (ad.delta_at(tp) @ g - ad.delta_at(tm) @ g) / (2 * step)
        assert abs(fd - grad[k]) <= 1e-6 * max(1.0, abs(grad[k]))


def test_fullft_is_identity_parameterization():
    m = small_manifest()
    ad = adapters.FullFTAdapter(m)
    assert ad.count_trainable() == m.total
    theta = np.random.default_rng(8).normal(size=m.total)
    assert np.array_equal(ad.delta_at(theta), theta)
    assert np.array_equal(ad.pullback_grad(theta), theta)
    assert ad.delta_at(theta) is not theta


def test_factor_space_layout():
    m = small_manifest()
    fm = adapters.factor_space(m, 3)
    assert [l.name for l in fm.layers] == ["up.B", "up.A", "down.B", "down.A"]
    assert [(l.rows, l.cols) for l in fm.layers] == [(3, 3), (3, 2), (2, 3), (3, 1)]
    assert fm.total == 3 * (3 + 2) + 3 * (2 + 1)
    with pytest.raises(ValidationError):
        adapters.factor_space(m, 0)


def test_count_trainable_reference_points():
    wide = weightspace.build_manifest([("w", 160, 160)])
    assert adapters.GPartAdapter(wide, 1, 23040).count_trainable() == 23040
    one = weightspace.build_manifest([("w", 768, 768)])
    assert adapters.LoRAAdapter(one, 1, 8).count_trainable() == 12288
    square = weightspace.build_manifest([("w", 1024, 1024)])
    assert adapters.factor_space(square, 256).total == 524288
    assert adapters.UniLoRAAdapter(square, 1, 524288, 256).count_trainable() == 524288


GOLDEN_HEADER = struct.pack("<4sIB7xQQQ", b"GPRT", 1, 0, 7, 3, 100)
GOLDEN_THETA = struct.pack("<3d", 0.5, -1.25, 2.0)


def test_checkpoint_golden_bytes(tmp_path):
    path = tmp_path / "a.gprt"
    adapters.write_checkpoint(path, 7, "isometric", 3, 100, np.array([0.5, -1.25, 2.0]))
    data = path.read_bytes()
    assert len(data) == 64
    assert data == GOLDEN_HEADER + GOLDEN_THETA


def test_checkpoint_golden_parse(tmp_path):
    path = tmp_path / "b.gprt"
    path.write_bytes(GOLDEN_HEADER + GOLDEN_THETA)
    rec = adapters.read_checkpoint(path)
    assert (rec.seed, rec.mode, rec.dim, rec.total) == (7, "isometric", 3, 100)
    assert rec.theta.tolist() == [0.5, -1.25, 2.0]


def test_checkpoint_roundtrip_bit_identical(tmp_path):
    m = weightspace.build_manifest([("w", 11, 9)])
    ad = adapters.GPartAdapter(m, 123, 31, "nonisometric")
    ad.theta = np.random.default_rng(9).normal(size=31)
    path = tmp_path / "c.gprt"
    adapters.save_checkpoint(ad, path)
    back = adapters.load_checkpoint(path, m)
    assert back.mode == "nonisometric"
    assert back.theta.tobytes() == ad.theta.tobytes()
    assert np.array_equal(back.pm.assignment, ad.pm.assignment)
    w0 = np.random.default_rng(10).normal(size=m.total)
    assert back.merge(w0).tobytes() == ad.merge(w0).tobytes()


def test_checkpoint_format_errors(tmp_path):
    path = tmp_path / "bad.gprt"
    path.write_bytes(GOLDEN_HEADER[:20])
    with pytest.raises(FormatError, match="truncated"):
        adapters.read_checkpoint(path)
    path.write_bytes(b"NOPE" + (GOLDEN_HEADER + GOLDEN_THETA)[4:])
    with pytest.raises(FormatError, match="magic"):
        adapters.read_checkpoint(path)
    bad_version = struct.pack("<4sIB7xQQQ", b"GPRT", 9, 0, 7, 3, 100) + GOLDEN_THETA
    path.write_bytes(bad_version)
    with pytest.raises(FormatError, match="version"):
        adapters.read_checkpoint(path)
    bad_mode = struct.pack("<4sIB7xQQQ", b"GPRT", 1, 7, 7, 3, 100) + GOLDEN_THETA
    path.write_bytes(bad_mode)
    with pytest.raises(FormatError, match="mode"):
        adapters.read_checkpoint(path)
    path.write_bytes(GOLDEN_HEADER + GOLDEN_THETA[:-8])
    with pytest.raises(FormatError, match="payload"):
        adapters.read_checkpoint(path)
    path.write_bytes(GOLDEN_HEADER + GOLDEN_THETA + b"\x00" * 8)
    with pytest.raises(FormatError, match="payload"):
        adapters.read_checkpoint(path)


def test_load_checkpoint_rejects_wrong_manifest(tmp_path):
    m = weightspace.build_manifest([("w", 10, 10)])
    ad = adapters.GPartAdapter(m, 1, 5)
    path = tmp_path / "d.gprt"
    adapters.save_checkpoint(ad, path)
    other = weightspace.build_manifest([("w", 10, 11)])
    with pytest.raises(CompatibilityError):
        adapters.load_checkpoint(path, other)


def test_write_checkpoint_validation(tmp_path):
    path = tmp_path / "e.gprt"
    with pytest.raises(ValidationError):
        adapters.write_checkpoint(path, 1, "diagonal", 2, 10, np.zeros(2))
    with pytest.raises(ValidationError):
        adapters.write_checkpoint(path, 1, "isometric", 3, 10, np.zeros(2))
    with pytest.raises(ValidationError):
        adapters.write_checkpoint(path, -1, "isometric", 2, 10, np.zeros(2))


def test_adapter_kind_labels():
    m = small_manifest()
    assert adapters.GPartAdapter(m, 1, 2).kind == "gpart_iso"
    assert adapters.GPartAdapter(m, 1, 2, "nonisometric").kind == "gpart_noniso"
    assert adapters.LoRAAdapter(m, 1, 1).kind == "lora"
    assert adapters.UniLoRAAdapter(m, 1, 2, 1).kind == "unilora"
    assert adapters.FullFTAdapter(m).kind == "fullft"
    with pytest.raises(ValidationError):
        adapters.GPartAdapter(m, 1, 2, "diagonal")
