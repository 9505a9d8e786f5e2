"""Dense numeric kernels: matmul, stable softmax, layer norm, GELU MLP, resampling.

Every kernel is a pure function on numpy arrays: same inputs, same bits out,
no hidden state. Reductions (matrix products, softmax sums, normalization
statistics) accumulate in float64 regardless of the working precision and the
result is cast back to the input dtype. That keeps float32 runs reproducible
across platforms and within a couple of ulps of closed-form values.

Conventions fixed here and relied on by callers:

* A "matrix" is a 2-D C-order ndarray (float32 default, float64 selectable).
* Resampling uses half-pixel sample centers: output index ``k`` along an axis
  of input length ``n`` and output length ``m`` samples the source coordinate
  ``(k + 0.5) * n / m - 0.5``.  Both resamplers are compression-only
  (``out <= in``); with that restriction every sample coordinate falls inside
  ``[0, n - 1]``.
* Nearest-neighbour rounding breaks ties toward the lower index.
* Randomness comes from numpy's PCG64 bit generator; one seed, one stream.
"""

from __future__ import annotations

import numpy as np

LAYER_NORM_EPS = 1e-6


class ShapeError(ValueError):
    """Operand shapes do not satisfy a kernel's contract."""


def rng(seed: int) -> np.random.Generator:
    """Deterministic generator (PCG64); identical seed gives an identical stream."""
    return np.random.Generator(np.random.PCG64(seed))


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with float64 accumulation.

    Raises ShapeError (reporting both shapes) unless ``a`` is (m, k) and
    ``b`` is (k, n).
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} x {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out_dtype = np.result_type(a.dtype, b.dtype)
    return (a.astype(np.float64) @ b.astype(np.float64)).astype(out_dtype)


def stable_softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max so huge logits cannot overflow.

    Works along the last axis of any array.  ``-inf`` entries are treated as
    excluded (zero weight); a row that is entirely ``-inf`` comes back as all
    zeros, which callers that use masking must detect themselves.
    """
    x = np.asarray(m, dtype=np.float64)
    rowmax = np.max(x, axis=-1, keepdims=True)
    rowmax = np.where(np.isfinite(rowmax), rowmax, 0.0)
    e = np.exp(x - rowmax)
    denom = np.sum(e, axis=-1, keepdims=True)
    denom = np.where(denom > 0.0, denom, 1.0)
    out = e / denom
    return out.astype(np.asarray(m).dtype)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
               eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Normalize each row to mean 0 / variance 1, then apply the affine map."""
    x = np.asarray(x)
    gamma = np.asarray(gamma)
    beta = np.asarray(beta)
    if gamma.shape[-1] != x.shape[-1] or beta.shape[-1] != x.shape[-1]:
        raise ShapeError(
            f"layer_norm parameter length {gamma.shape} / {beta.shape} "
            f"does not match row width {x.shape[-1]}")
    x64 = x.astype(np.float64)
    mean = x64.mean(axis=-1, keepdims=True)
    var = np.mean((x64 - mean) ** 2, axis=-1, keepdims=True)
    normed = (x64 - mean) / np.sqrt(var + eps)
    out = normed * gamma.astype(np.float64) + beta.astype(np.float64)
    return out.astype(x.dtype)


def gelu(x: np.ndarray) -> np.ndarray:
    """GELU activation (tanh form)."""
    x = np.asarray(x)
    x64 = x.astype(np.float64)
    out = 0.5 * x64 * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x64 + 0.044715 * x64 ** 3)))
    return out.astype(x.dtype)


def mlp(x: np.ndarray, w1: np.ndarray, b1: np.ndarray,
        w2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """Two-layer feed-forward block: gelu(x @ w1 + b1) @ w2 + b2."""
    hidden = gelu(matmul(x, w1) + b1)
    return matmul(hidden, w2) + b2


def half_pixel_centers(n_in: int, n_out: int) -> np.ndarray:
    """Source coordinates of the ``n_out`` half-pixel sample centers in ``[0, n_in - 1]``."""
    k = np.arange(n_out, dtype=np.float64)
    return (k + 0.5) * (n_in / n_out) - 0.5


def _check_resample_args(grid: np.ndarray, out_h: int, out_w: int) -> tuple[int, int, int]:
    if grid.ndim != 3:
        raise ShapeError(f"resampling expects an H x W x C grid, got shape {grid.shape}")
    h, w, c = grid.shape
    if h < 1 or w < 1:
        raise ShapeError(f"empty grid {grid.shape}")
    if out_h < 1 or out_w < 1 or out_h > h or out_w > w:
        raise ShapeError(
            f"resampling is compression-only: target {out_h}x{out_w} "
            f"must satisfy 1 <= target <= source {h}x{w}")
    return h, w, c


def resample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Downsample an H x W x C grid to out_h x out_w x C by bilinear interpolation.

    Each output token is a convex blend of at most four neighbouring input
    tokens; an affine function of the grid coordinates is reproduced exactly.
    Identity target returns a bitwise-equal copy.
    """
    grid = np.asarray(grid)
    h, w, _ = _check_resample_args(grid, out_h, out_w)
    if out_h == h and out_w == w:
        return grid.copy()

    ys = half_pixel_centers(h, out_h)
    xs = half_pixel_centers(w, out_w)
    y0 = np.clip(np.floor(ys).astype(np.intp), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.intp), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    g = grid.astype(np.float64)
    top = g[y0][:, x0] * (1.0 - wx) + g[y0][:, x1] * wx
    bot = g[y1][:, x0] * (1.0 - wx) + g[y1][:, x1] * wx
    out = top * (1.0 - wy) + bot * wy
    return out.astype(grid.dtype)


def resample_nearest(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Downsample by copying the nearest input token (ties round to the lower index).

    Output tokens are verbatim copies, so no dtype round-trip happens here.
    """
    grid = np.asarray(grid)
    h, w, _ = _check_resample_args(grid, out_h, out_w)
    if out_h == h and out_w == w:
        return grid.copy()
    # round-half-down: ceil(c - 0.5)
    iy = np.clip(np.ceil(half_pixel_centers(h, out_h) - 0.5).astype(np.intp), 0, h - 1)
    ix = np.clip(np.ceil(half_pixel_centers(w, out_w) - 0.5).astype(np.intp), 0, w - 1)
    return grid[iy][:, ix].copy()
