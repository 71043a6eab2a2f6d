"""Pure numpy implementation of the resampling kernels.

Coordinates follow the pixel-centre convention: the centre of pixel ``i`` is
``i + 0.5``. Columns wrap modulo ``W``; rows are clamped to ``[0, H - 1]``.
The compiled module ``_kernels`` mirrors this file operation for operation so
both backends produce bit-identical results.
"""

import numpy as np


def _bilinear_setup(u, v, H, W):
    x = u - 0.5
    y = v - 0.5
    x0f = np.floor(x)
    y0f = np.floor(y)
    fx = x - x0f
    fy = y - y0f
    x0 = np.mod(x0f.astype(np.int64), W)
    x1 = np.mod(x0 + 1, W)
    y0 = y0f.astype(np.int64)
    y1 = np.clip(y0 + 1, 0, H - 1)
    y0 = np.clip(y0, 0, H - 1)
    return x0, x1, y0, y1, fx, fy


def sample_bilinear(src, u, v):
    """Sample ``src`` (C, H, W) at continuous positions; returns (C, n)."""
    src = np.ascontiguousarray(src, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64).ravel()
    v = np.ascontiguousarray(v, dtype=np.float64).ravel()
    _, H, W = src.shape
    x0, x1, y0, y1, fx, fy = _bilinear_setup(u, v, H, W)
    # Lerp form: exact on constant regions.
    a = src[:, y0, x0]
    top = a + fx * (src[:, y0, x1] - a)
    a = src[:, y1, x0]
    bot = a + fx * (src[:, y1, x1] - a)
    return top + fy * (bot - top)


def nearest_index(u, v, H, W):
    """Flat index of the pixel containing each continuous position.

    A position exactly on a column boundary goes to the right-hand pixel
    (round half up), then wraps.
    """
    u = np.ascontiguousarray(u, dtype=np.float64).ravel()
    v = np.ascontiguousarray(v, dtype=np.float64).ravel()
    col = np.mod(np.floor(u).astype(np.int64), W)
    row = np.clip(np.floor(v).astype(np.int64), 0, H - 1)
    return row * W + col


def sample_nearest(src, u, v):
    src = np.ascontiguousarray(src, dtype=np.float64)
    C, H, W = src.shape
    idx = nearest_index(u, v, H, W)
    return src.reshape(C, H * W)[:, idx]


def splat_bilinear(values, u, v, H, W):
    """Scatter ``values`` (C, n) into an (C, H, W) accumulator.

    Returns ``(acc, weight)`` where ``weight`` holds the summed bilinear
    footprint weights. Accumulation runs in sample order, corner by corner.
    """
    values = np.ascontiguousarray(values, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64).ravel()
    v = np.ascontiguousarray(v, dtype=np.float64).ravel()
    C = values.shape[0]
    x0, x1, y0, y1, fx, fy = _bilinear_setup(u, v, H, W)
    corners = (
        (y0, x0, (1.0 - fx) * (1.0 - fy)),
        (y0, x1, fx * (1.0 - fy)),
        (y1, x0, (1.0 - fx) * fy),
        (y1, x1, fx * fy),
    )
    n = u.shape[0]
    # Interleave corners per sample so the summation order matches the C loop.
    flat = np.stack([r * W + c for r, c, _ in corners], axis=1).ravel()
    wts = np.stack([w for _, _, w in corners], axis=1).ravel()
    acc = np.zeros((C, H * W))
    weight = np.zeros(H * W)
    np.add.at(weight, flat, wts)
    vals = (values[:, :, None] * wts.reshape(n, 4)[None]).reshape(C, 4 * n)
    for ch in range(C):
        np.add.at(acc[ch], flat, vals[ch])
    return acc.reshape(C, H, W), weight.reshape(H, W)
