"""Numba and numpy builds of the hot kernels must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from mtkl import _accel


def both(name):
    impls = _accel.implementations(name)
    if impls["numba"] is None:
        pytest.skip("numba path disabled in this process")
    return impls["numba"], impls["numpy"]


RNG = np.random.default_rng(0)
X = RNG.uniform(-1, 1, (14, 3))
Z = RNG.uniform(-1, 1, (9, 3))
M = np.diag([0.5, 1.0, 2.0])


@pytest.mark.parametrize("name,args", [
    ("rbf_gram", (X, 0.8)),
    ("rbf_cross", (X, Z, 0.8)),
    ("linear_gram", (X, 0.5)),
    ("linear_cross", (X, Z, 0.5)),
    ("poly_gram", (X, 1.0, 0.5, 3)),
    ("poly_cross", (X, Z, 1.0, 0.5, 3)),
    ("metric_gram", (X, M)),
    ("metric_cross", (X, Z, M)),
])
def test_gram_paths_agree(name, args):
    nb, np_impl = both(name)
    a, b = nb(*args), np_impl(*args)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
    if name.endswith("_gram"):
        assert np.array_equal(a, a.T)
        assert np.array_equal(b, b.T)


def test_hinge_pgd_paths_agree():
    nb, np_impl = both("hinge_pgd")
    K = _accel.implementations("rbf_gram")["numpy"](X, 0.8)
    y = np.where(np.arange(14) % 2 == 0, 1.0, -1.0)
    a0 = y / 14.0
    res_nb = nb(K, y, 0.2, a0, 500, 1e-8, 1.0)
    res_np = np_impl(K, y, 0.2, a0, 500, 1e-8, 1.0)
    np.testing.assert_allclose(res_nb[0], res_np[0], rtol=1e-9, atol=1e-12)
    assert res_nb[1] == pytest.approx(res_np[1], rel=1e-9)
    assert res_nb[2] == res_np[2]
    assert res_nb[3] == res_np[3]


def test_chebyshev_pdist_paths_agree():
    nb, np_impl = both("chebyshev_pdist")
    V = RNG.uniform(-2, 2, (20, 7))
    np.testing.assert_allclose(nb(V), np_impl(V), rtol=0, atol=0)


def test_shatter_scan_paths_agree():
    nb, np_impl = both("shatter_scan")
    rng = np.random.default_rng(1)
    for trial in range(20):
        p = int(rng.integers(1, 4))
        members = int(rng.integers(2, 30))
        counts = rng.integers(1, 5, size=p).astype(np.int64)
        masks = rng.integers(0, 2**63, size=(int(counts.sum()), 1),
                             dtype=np.int64).astype(np.uint64)
        valid = np.zeros(1, dtype=np.uint64)
        for j in range(members):
            valid[0] |= np.uint64(1) << np.uint64(j)
        masks &= valid[0]
        got_nb = nb(masks, counts, valid, 10_000)
        got_np = np_impl(masks, counts, valid, 10_000)
        assert got_nb[0] == got_np[0]
        if got_nb[0] == 1:
            np.testing.assert_array_equal(got_nb[1], got_np[1])


def test_env_flag_selects_numpy_path():
    code = (
        "import mtkl._accel as a\n"
        "assert not a.NUMBA_ENABLED\n"
        "assert a.implementations('rbf_gram')['numba'] is None\n"
        "import numpy as np\n"
        "X = np.zeros((3, 2))\n"
        "assert a.rbf_gram(X, 1.0).shape == (3, 3)\n"
        "print('numpy-path-ok')\n"
    )
    env = dict(os.environ, MTKL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert "numpy-path-ok" in out.stdout
