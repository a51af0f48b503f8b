"""Both kernel backends must agree bit for bit; the pure one is checked
against the plain-integer reference in conftest."""

import numpy as np
import pytest

from conftest import ref_shuffle, ref_splitmix64

from gpart import _kernels_py

compiled = pytest.importorskip("gpart._kernels", reason="compiled backend not built")

SEEDS = [0, 1, 42, 2**32, 2**64 - 1]


@pytest.mark.parametrize("seed", SEEDS)
def test_stream_matches_reference(seed):
    want = np.array(ref_splitmix64(seed, 500), dtype=np.uint64)
    assert np.array_equal(_kernels_py.splitmix64_stream(seed, 500), want)
    assert np.array_equal(compiled.splitmix64_stream(seed, 500), want)


@pytest.mark.parametrize("seed", SEEDS)
@pytest.mark.parametrize("n", [1, 2, 3, 17, 1000])
def test_shuffle_matches_reference(seed, n):
    want = np.array(ref_shuffle(seed, n), dtype=np.int64)
    assert np.array_equal(_kernels_py.shuffled_indices(seed, n), want)
    assert np.array_equal(compiled.shuffled_indices(seed, n), want)


def test_gather_parity():
    rng = np.random.default_rng(7)
    values = rng.normal(size=64)
    assignment = rng.integers(0, 64, size=5000).astype(np.uint32)
    a = _kernels_py.gather(values, assignment)
    b = compiled.gather(values, assignment)
    assert np.array_equal(a, b)
    assert np.array_equal(a, values[assignment])


def test_group_sums_parity_is_bitwise():
    rng = np.random.default_rng(11)
    values = rng.normal(size=100000)
    assignment = rng.integers(0, 512, size=100000).astype(np.uint32)
    a = _kernels_py.group_sums(values, assignment, 512)
    b = compiled.group_sums(values, assignment, 512)
    assert a.tobytes() == b.tobytes()


def test_group_sums_covers_empty_groups():
    values = np.array([1.0, 2.0, 3.0])
    assignment = np.array([0, 0, 4], dtype=np.uint32)
    for impl in (_kernels_py, compiled):
        out = impl.group_sums(values, assignment, 6)
        assert out.tolist() == [3.0, 0.0, 0.0, 0.0, 3.0, 0.0]


def test_backends_accept_readonly_arrays():
    values = np.arange(8.0)
    values.setflags(write=False)
    assignment = np.zeros(8, dtype=np.uint32)
    assignment.setflags(write=False)
    for impl in (_kernels_py, compiled):
        assert impl.group_sums(values, assignment, 1)[0] == 28.0
        assert impl.gather(np.array([5.0]), assignment).tolist() == [5.0] * 8


def test_backend_env_override(monkeypatch):
    import importlib

    from gpart import backend

    monkeypatch.setenv("GPART_PURE_PYTHON", "1")
    mod = importlib.reload(backend)
    try:
        assert mod.BACKEND == "python"
    finally:
        monkeypatch.delenv("GPART_PURE_PYTHON")
        importlib.reload(backend)
