import math

import numpy as np
import pytest
import torch

from duopano.eppa import (
    EppaMask,
    EppaParams,
    EppaSite,
    SpeConfig,
    attention_weights,
    build_attention_masks,
    build_spe_maps,
    eppa_apply,
    fourier_features,
    gaussian_kernel1d,
    nearest_feature_index,
    spe_encode,
)
from duopano.errors import DataError, DomainError, ShapeError
from duopano.resample import projection_coords
from duopano.sphere import (
    CameraIntrinsics,
    CameraPose,
    CameraRig,
    ErpGrid,
    SphericalCoord,
    icosahedron_rig,
    persp_coords_from_dirs,
)

G16 = ErpGrid(16)
RIG = icosahedron_rig(8)


def test_spe_config():
    assert SpeConfig(320).bands == 80
    with pytest.raises(DomainError):
        SpeConfig(30)


def test_spe_origin_example():
    np.testing.assert_array_equal(spe_encode(SpeConfig(8), SphericalCoord(0.0, 0.0)), [0, 1, 0, 1, 0, 1, 0, 1])


def test_spe_length_and_bounds():
    rng = np.random.default_rng(0)
    cfg = SpeConfig(320)
    for _ in range(20):
        c = SphericalCoord(rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi / 2, math.pi / 2))
        e = spe_encode(cfg, c)
        assert e.shape == (320,)
        assert np.all(np.abs(e) <= 1)


def test_spe_band_layout():
    f = fourier_features(np.array(0.25), 3)
    ang = np.pi * 0.25 * np.array([1, 2, 4])
    np.testing.assert_allclose(f, np.ravel(np.column_stack([np.sin(ang), np.cos(ang)])), atol=1e-15)


def test_spe_seam_continuity():
    cfg = SpeConfig(32)
    a = spe_encode(cfg, SphericalCoord(-math.pi, 0.3))
    b = spe_encode(cfg, SphericalCoord(math.pi - 1e-9, 0.3))
    assert np.abs(a - b).max() < 1e-6


def test_spe_maps():
    cfg = SpeConfig(16)
    pano, views = build_spe_maps(cfg, G16, RIG)
    assert pano.shape == (16, 16, 32)
    assert views.shape == (20, 16, 8, 8)
    # pixel (w/2, h/2) has centre theta = pi/w, phi = pi/(2h); the canvas centre itself is a corner
    theta, phi = G16.pixel_angles()
    np.testing.assert_allclose(pano[:, 8, 16], spe_encode(cfg, SphericalCoord(theta[8, 16], phi[8, 16])), atol=1e-15)
    assert theta[8, 16] == pytest.approx(math.pi / 32)
    # columns 0 and w-1 are one azimuth step apart across the seam, like any adjacent pair
    step = np.abs(pano[:, :, 0] - pano[:, :, -1]).max()
    interior = np.abs(np.diff(pano, axis=2)).max()
    assert step <= interior + 1e-12
    direct = np.moveaxis(np.array([[spe_encode(cfg, SphericalCoord(t, p)) for t, p in zip(tr, pr)] for tr, pr in zip(theta, phi)]), -1, 0)
    np.testing.assert_allclose(pano, direct, atol=1e-15)


def test_spe_correspondence_exact():
    cfg = SpeConfig(16)
    pano, views = build_spe_maps(cfg, G16, RIG)
    idx = nearest_feature_index(G16, RIG)
    gathered = pano.reshape(16, -1)[:, idx].transpose(1, 0, 2, 3)
    assert np.array_equal(gathered, views)


def test_gaussian_kernel():
    k = gaussian_kernel1d(1.0)
    assert k.shape == (5,) and k.sum() == pytest.approx(1.0)
    assert np.array_equal(k, k[::-1])


@pytest.fixture(scope="module")
def mask32():
    return build_attention_masks(ErpGrid(32), icosahedron_rig(16), 1.0)


def test_mask_shape_paper(mask32):
    h = 32
    assert mask32.shape == (h * 2 * h, 20 * h * h // 4) == (2048, 5120)
    assert mask32.reverse.shape == (5120, 2048)
    assert np.shares_memory(mask32.reverse, mask32.matrix)


def test_mask_bounds_and_rows(mask32):
    m = mask32.matrix
    assert m.min() >= -1 and m.max() <= 1
    visible = m.max(axis=1) > -1
    assert np.all(m[visible].max(axis=1) == 1.0)
    assert np.all(m[~visible] == -1.0)
    assert visible.mean() > 0.9


def test_mask_invisible_rows_single_camera():
    rig = CameraRig((CameraPose.identity(),), CameraIntrinsics(60.0, 8))
    mask = build_attention_masks(G16, rig)
    theta, phi = G16.pixel_angles()
    far = (np.abs(theta) > np.radians(90)).ravel()
    assert np.all(mask.matrix[far] == -1)
    assert (mask.matrix.max(axis=1) == 1).sum() > 0


def test_mask_rows_visible_iff_sampled():
    mask = build_attention_masks(G16, RIG)
    K = CameraIntrinsics(90.0, 8)
    sampled = np.zeros(16 * 32, dtype=bool)
    for pose in RIG.poses:
        u, v = projection_coords(G16, pose, K)
        x, y = u - 0.5, v - 0.5
        x0 = np.floor(x).astype(int)
        y0 = np.floor(y).astype(int)
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                r = np.clip(y0 + dy, 0, 15)
                c = (x0 + dx) % 32
                sampled[(r * 32 + c)[wx * wy > 0]] = True
    assert np.array_equal(mask.matrix.max(axis=1) == 1, sampled)


def test_mask_argmax_near_projection(mask32):
    grid = ErpGrid(32)
    rig = icosahedron_rig(16)
    K = CameraIntrinsics(90.0, 16)
    s = 16
    dirs = grid.pixel_dirs().reshape(-1, 3)
    m = mask32.matrix
    for p in np.flatnonzero(m.max(axis=1) == 1):
        col = int(np.argmax(m[p]))
        i, rem = divmod(col, s * s)
        a, b = divmod(rem, s)
        x, y, front = persp_coords_from_dirs(K, rig.poses[i], dirs[p])
        assert front
        # the argmax pixel is the one containing the projected point or a neighbour of it
        assert abs(b - math.floor(x)) <= 1 and abs(a - math.floor(y)) <= 1


def test_mask_cached_and_sigma_domain():
    a = build_attention_masks(G16, RIG, 1.0)
    assert build_attention_masks(G16, RIG, 1.0) is a
    assert build_attention_masks(G16, RIG, 2.0) is not a
    with pytest.raises(DomainError):
        build_attention_masks(G16, RIG, 0.0)


def test_mask_sigma_widens_support():
    a = build_attention_masks(G16, RIG, 0.5).matrix
    b = build_attention_masks(G16, RIG, 2.0).matrix
    assert (b > -1).sum() >= (a > -1).sum()


# --- attention ----------------------------------------------------------------


def small_setup(c=4, dtype=torch.float64, seed=0):
    grid = ErpGrid(4)
    rig = icosahedron_rig(2)
    g = torch.Generator().manual_seed(seed)
    pano = torch.randn(c, 4, 8, generator=g, dtype=dtype)
    views = torch.randn(20, c, 2, 2, generator=g, dtype=dtype)
    ps, vs = build_spe_maps(SpeConfig(c), grid, rig)
    mask = torch.as_tensor(build_attention_masks(grid, rig).matrix, dtype=dtype)
    return pano, views, torch.as_tensor(ps, dtype=dtype), torch.as_tensor(vs, dtype=dtype), mask


def fresh(c=4, seed=0, dtype=torch.float64):
    torch.manual_seed(seed)
    return EppaSite(c).to(dtype)


def randomize_out(site, seed=1):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        site.params.out.weight.copy_(torch.randn(site.params.out.weight.shape, generator=g, dtype=site.params.out.weight.dtype))
        site.params.out.bias.copy_(torch.randn(site.params.out.bias.shape, generator=g, dtype=site.params.out.bias.dtype))


def test_zero_init_is_identity():
    pano, views, ps, vs, mask = small_setup()
    site = fresh()
    assert torch.count_nonzero(site.params.out.weight) == 0
    new_p, new_v = site(pano, views, ps, vs, mask)
    assert torch.equal(new_p, pano) and torch.equal(new_v, views)


def test_softmax_rows_sum_to_one():
    pano, views, ps, vs, mask = small_setup()
    site = fresh()
    w = attention_weights(site.params, pano, views, ps, vs, mask)
    assert w.shape == (32, 80)
    assert (w.sum(dim=1) - 1).abs().max() <= 1e-9
    w2 = attention_weights(site.params, views, pano, vs, ps, mask.T)
    assert (w2.sum(dim=1) - 1).abs().max() <= 1e-9


def test_mask_entry_monotonicity():
    pano, views, ps, vs, mask = small_setup()
    site = fresh()
    base = attention_weights(site.params, pano, views, ps, vs, mask)
    for r, c in [(0, 0), (5, 17), (31, 79)]:
        bumped = mask.clone()
        bumped[r, c] += 0.1
        w = attention_weights(site.params, pano, views, ps, vs, bumped)
        assert w[r, c] > base[r, c]


def test_direction_weight_sharing():
    pano, views, ps, vs, mask = small_setup()
    site = fresh()
    randomize_out(site)
    assert len(list(site.parameters())) == 5  # q, k, v, out.weight, out.bias: one set
    p0, v0 = site(pano, views, ps, vs, mask)
    for lin in (site.params.q, site.params.k, site.params.v):
        with torch.no_grad():
            lin.weight[0, 0] += 0.5
        p1, v1 = site(pano, views, ps, vs, mask)
        assert (p1 - p0).abs().max() > 1e-8
        assert (v1 - v0).abs().max() > 1e-8
        p0, v0 = p1, v1


def test_shape_and_data_errors():
    pano, views, ps, vs, mask = small_setup()
    site = fresh()
    with pytest.raises(ShapeError):
        eppa_apply(site.params, pano, views, ps, vs, mask[:, :10])
    bad = pano.clone()
    bad[0, 0, 0] = float("nan")
    with pytest.raises(DataError):
        eppa_apply(site.params, bad, views, ps, vs, mask)
    with pytest.raises(ShapeError):
        eppa_apply(EppaParams(8).double(), pano, views, ps, vs, mask)


def _flat_params(site):
    return [p for p in site.parameters()]


@pytest.mark.parametrize("direction", ["views_to_pano", "pano_to_views"])
def test_gradients_match_finite_differences(direction):
    pano, views, ps, vs, mask = small_setup(seed=3)
    site = fresh(seed=4)
    randomize_out(site, seed=5)
    pano.requires_grad_(True)
    views.requires_grad_(True)
    g = torch.Generator().manual_seed(6)

    def run():
        if direction == "views_to_pano":
            return eppa_apply(site.params, pano, views, ps, vs, mask)
        return eppa_apply(site.params, views, pano, vs, ps, mask.T)

    probe = torch.randn(run().shape, generator=g, dtype=torch.float64)

    def f():
        return (run() * probe).sum()

    tensors = [pano, views] + _flat_params(site)
    grads = torch.autograd.grad(f(), tensors)
    h = 1e-6
    for t, grad in zip(tensors, grads):
        d = torch.randn(t.shape, generator=g, dtype=torch.float64)
        analytic = float((grad * d).sum())
        with torch.no_grad():
            t.add_(h * d)
            fp = float(f())
            t.sub_(2 * h * d)
            fm = float(f())
            t.add_(h * d)
        numeric = (fp - fm) / (2 * h)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        assert rel < 1e-4, (t.shape, analytic, numeric)


def test_gradcheck_elementwise():
    pano, views, ps, vs, mask = small_setup(seed=7)
    site = fresh(seed=8)
    randomize_out(site, seed=9)
    pano.requires_grad_(True)
    views.requires_grad_(True)
    assert torch.autograd.gradcheck(
        lambda p, v: eppa_apply(site.params, p, v, ps, vs, mask), (pano, views), eps=1e-6, atol=1e-7, rtol=1e-4
    )


def test_eppa_mask_reverse_is_transpose():
    m = EppaMask(np.arange(6.0).reshape(2, 3))
    assert np.array_equal(m.reverse, m.matrix.T)
