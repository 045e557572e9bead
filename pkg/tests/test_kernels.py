import os
import subprocess
import sys

import numpy as np
import pytest

from cascade_lowrank import _kernels as K


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def test_khatri_rao_backends_agree(rng):
    B, C = rng.standard_normal((5, 3)), rng.standard_normal((4, 3))
    a = K.NUMPY_KERNELS["khatri_rao"](B, C)
    b = K.NUMBA_KERNELS["khatri_rao"](B, C)
    assert a.shape == (20, 3)
    np.testing.assert_array_equal(a, b)
    # column l is kron(B[:, l], C[:, l])
    np.testing.assert_array_equal(a[:, 1], np.kron(B[:, 1], C[:, 1]))


@pytest.mark.parametrize("shape", [(4, 4), (3, 3, 3)])
def test_sum_nodes_backends_agree(rng, shape):
    store = rng.standard_normal((16,) + shape)
    ids = [9, 5, 12, 3]
    a = K.NUMPY_KERNELS["sum_nodes"](store, ids)
    b = K.NUMBA_KERNELS["sum_nodes"](store, ids)
    np.testing.assert_array_equal(a, b)
    assert np.allclose(a, store[ids].sum(axis=0), rtol=1e-14)


def test_sum_nodes_empty(rng):
    store = rng.standard_normal((4, 2, 2))
    for kern in (K.NUMPY_KERNELS, K.NUMBA_KERNELS):
        assert not np.any(kern["sum_nodes"](store, []))


def test_build_internal_backends_agree(rng):
    size = 8
    base = np.zeros((2 * size, 3, 3))
    base[size:] = rng.standard_normal((size, 3, 3))
    a, b = base.copy(), base.copy()
    K.NUMPY_KERNELS["build_internal"](a, size)
    K.NUMBA_KERNELS["build_internal"](b, size)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[1], ((a[8] + a[9]) + (a[10] + a[11])) + ((a[12] + a[13]) + (a[14] + a[15])))


def test_prefix_sums_backends_agree(rng):
    Z0 = rng.standard_normal((6, 4))
    Zs = rng.standard_normal((5, 6, 4))
    a = K.NUMPY_KERNELS["prefix_sums"](Z0, Zs)
    b = K.NUMBA_KERNELS["prefix_sums"](Z0, Zs)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[3], ((Z0 + Zs[0]) + Zs[1]) + Zs[2])


@pytest.mark.parametrize("t", [0.0, -1.25, 2.0, 0.5])
def test_horner_backends_agree(rng, t):
    coeffs = rng.integers(-5, 6, (7, 3, 2)).astype(float)
    a = K.NUMPY_KERNELS["horner"](coeffs, t)
    b = K.NUMBA_KERNELS["horner"](coeffs, t)
    np.testing.assert_array_equal(a, b)
    direct = sum(coeffs[j] * t**j for j in range(7))
    np.testing.assert_allclose(a, direct, rtol=1e-13, atol=1e-12)


def test_env_flag_selects_numpy():
    env = dict(os.environ, CASCADE_LOWRANK_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from cascade_lowrank import _kernels; print(_kernels.backend())"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == "numpy"


def test_default_backend_is_numba():
    if os.environ.get("CASCADE_LOWRANK_NUMBA", "1") != "0":
        assert K.backend() == "numba"
