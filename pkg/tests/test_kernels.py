import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from duopano import kernels
from duopano import _kernels_py as ref

BACKENDS = kernels.backends()


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_selected_backend_is_listed():
    assert kernels.BACKEND in BACKENDS


def brute_bilinear(src, u, v):
    C, H, W = src.shape
    out = np.zeros((C, len(u)))
    for n, (uu, vv) in enumerate(zip(u, v)):
        x, y = uu - 0.5, vv - 0.5
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                r = min(max(y0 + dy, 0), H - 1)
                c = (x0 + dx) % W
                out[:, n] += wx * wy * src[:, r, c]
    return out


def test_bilinear_matches_brute_force(impl):
    rng = np.random.default_rng(0)
    src = rng.random((2, 5, 10))
    u = rng.uniform(-12, 22, 300)
    v = rng.uniform(-1, 6, 300)
    np.testing.assert_allclose(impl.sample_bilinear(src, u, v), brute_bilinear(src, u, v), atol=1e-14)


def test_bilinear_at_pixel_centres_is_exact(impl):
    src = np.arange(24, dtype=float).reshape(1, 4, 6)
    yy, xx = np.mgrid[0:4, 0:6]
    out = impl.sample_bilinear(src, xx.ravel() + 0.5, yy.ravel() + 0.5)
    assert np.array_equal(out[0], src.ravel())


def test_bilinear_wraps_u_and_clamps_v(impl):
    src = np.zeros((1, 2, 4))
    src[0, :, 0] = 1.0
    # halfway between the last and the first column
    assert impl.sample_bilinear(src, np.array([4.0]), np.array([1.0]))[0, 0] == pytest.approx(0.5)
    # above the top row clamps to the top row
    src2 = np.array([[[1.0, 1.0], [3.0, 3.0]]]).repeat(2, axis=2)
    assert impl.sample_bilinear(src2, np.array([1.0]), np.array([10.0]))[0, 0] == 3.0


def test_nearest_ties_round_half_up(impl):
    # u = 2.0 lies on the boundary between columns 1 and 2: goes to column 2
    idx = impl.nearest_index(np.array([2.0, 1.999, 8.0, -0.5]), np.array([0.5] * 4), 2, 8)
    assert list(idx) == [2, 1, 0, 7]


def test_splat_partition_of_unity(impl):
    rng = np.random.default_rng(1)
    u = rng.uniform(0, 16, 50)
    v = rng.uniform(0.5, 7.5, 50)
    acc, w = impl.splat_bilinear(np.ones((1, 50)), u, v, 8, 16)
    assert w.sum() == pytest.approx(50.0)
    np.testing.assert_allclose(acc[0], w)


def test_splat_is_adjoint_of_sampling(impl):
    rng = np.random.default_rng(2)
    src = rng.random((1, 6, 12))
    u = rng.uniform(0, 12, 40)
    v = rng.uniform(0.5, 5.5, 40)
    vals = rng.random((1, 40))
    lhs = float(impl.sample_bilinear(src, u, v)[0] @ vals[0])
    acc, _ = impl.splat_bilinear(vals, u, v, 6, 12)
    assert lhs == pytest.approx(float((acc * src).sum()), rel=1e-12)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend not built")
@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 12))
def test_backends_bitwise_identical(seed, C, H):
    rng = np.random.default_rng(seed)
    W = 2 * H
    src = rng.standard_normal((C, H, W))
    n = 64
    u = rng.uniform(-2 * W, 3 * W, n)
    v = rng.uniform(-2, H + 2, n)
    u[:8] = np.floor(u[:8])  # exact boundaries
    a, b = BACKENDS["python"], BACKENDS["cython"]
    assert np.array_equal(a.sample_bilinear(src, u, v), b.sample_bilinear(src, u, v))
    assert np.array_equal(a.sample_nearest(src, u, v), b.sample_nearest(src, u, v))
    assert np.array_equal(a.nearest_index(u, v, H, W), b.nearest_index(u, v, H, W))
    vals = rng.standard_normal((C, n))
    for x, y in zip(a.splat_bilinear(vals, u, v, H, W), b.splat_bilinear(vals, u, v, H, W)):
        assert np.array_equal(x, y)


def test_fallback_module_is_reference():
    assert ref.sample_bilinear is BACKENDS["python"].sample_bilinear


def test_env_var_forces_pure_python():
    import os
    import subprocess
    import sys

    env = dict(os.environ, DUOPANO_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import duopano.kernels as k; print(k.BACKEND)"], env=env, capture_output=True, text=True
    )
    assert out.stdout.strip() == "python"
