"""Separable 2-D Daubechies wavelet transform with symmetric extension.

Implements exactly what the noise extractor needs: multi-level 2-D
decomposition into one approximation band plus (horizontal, vertical,
diagonal) detail bands per level, and the matching perfect inverse.
Boundary handling is whole-sample symmetric extension, so reconstruction
is exact to float64 rounding for arbitrary (not just dyadic) sizes.
"""

from __future__ import annotations

import numpy as np

# 8-tap Daubechies scaling coefficients (orthonormal, sum = sqrt(2)).
_DB4 = np.array([
    0.23037781330885523,
    0.7148465705525415,
    0.6308807679295904,
    -0.02798376941698385,
    -0.18703481171888114,
    0.030841381835986965,
    0.032883011666982945,
    -0.010597401784997278,
])

FILTER_LENGTH = len(_DB4)

REC_LO = _DB4.copy()
REC_HI = np.array([(-1.0) ** k * _DB4[FILTER_LENGTH - 1 - k] for k in range(FILTER_LENGTH)])
DEC_LO = REC_LO[::-1].copy()
DEC_HI = REC_HI[::-1].copy()

# Reconstruction crop offset for the analysis/synthesis pair above.
_REC_OFFSET = FILTER_LENGTH - 2


def _analyze_axis(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """One analysis step along `axis`: symmetric-extend, filter, downsample.

    Maps axis length n to (n + FILTER_LENGTH - 1) // 2.
    """
    pad = [(0, 0)] * x.ndim
    pad[axis] = (FILTER_LENGTH - 1, FILTER_LENGTH - 1)
    ext = np.pad(x, pad, mode="symmetric")
    win = np.moveaxis(
        np.lib.stride_tricks.sliding_window_view(ext, FILTER_LENGTH, axis=axis), -1, 0
    )
    # windows . reversed(filter) == valid true convolution
    lo = np.tensordot(DEC_LO[::-1], win, axes=(0, 0))
    hi = np.tensordot(DEC_HI[::-1], win, axes=(0, 0))
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(1, None, 2)
    return lo[tuple(sl)], hi[tuple(sl)]


def _synthesize_axis(lo: np.ndarray, hi: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    """Inverse of `_analyze_axis`: upsample, filter, sum branches, crop."""
    n = lo.shape[axis]
    shape = list(lo.shape)
    shape[axis] = 2 * n - 1 + FILTER_LENGTH - 1
    y = np.zeros(shape, dtype=np.float64)
    dst = [slice(None)] * lo.ndim
    for m in range(FILTER_LENGTH):
        dst[axis] = slice(m, m + 2 * n - 1, 2)
        y[tuple(dst)] += REC_LO[m] * lo + REC_HI[m] * hi
    out = [slice(None)] * lo.ndim
    out[axis] = slice(_REC_OFFSET, _REC_OFFSET + out_len)
    return y[tuple(out)]


def dwt2(x: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Single-level 2-D decomposition: (approx, (horiz, vert, diag))."""
    lo, hi = _analyze_axis(np.asarray(x, dtype=np.float64), axis=1)
    ll, lh = _analyze_axis(lo, axis=0)
    hl, hh = _analyze_axis(hi, axis=0)
    return ll, (hl, lh, hh)


def idwt2(
    approx: np.ndarray,
    details: tuple[np.ndarray, np.ndarray, np.ndarray],
    out_shape: tuple[int, int],
) -> np.ndarray:
    """Inverse of `dwt2`, cropped to `out_shape`."""
    hl, lh, hh = details
    lo = _synthesize_axis(approx, lh, out_shape[0], axis=0)
    hi = _synthesize_axis(hl, hh, out_shape[0], axis=0)
    return _synthesize_axis(lo, hi, out_shape[1], axis=1)


def wavedec2(x: np.ndarray, levels: int) -> list:
    """Multi-level 2-D decomposition.

    Returns [approx_L, details_L, ..., details_1]; each details entry is a
    (horiz, vert, diag) tuple, coarsest level first, matching the usual
    wavelet-toolbox layout.
    """
    cur = np.asarray(x, dtype=np.float64)
    out = []
    for _ in range(levels):
        cur, det = dwt2(cur)
        out.append(det)
    out.append(cur)
    return out[::-1]


def waverec2(coeffs: list, out_shape: tuple[int, int]) -> np.ndarray:
    """Inverse of `wavedec2`, cropped to `out_shape`.

    Intermediate sizes are reconstructed to the even-length candidate;
    when the analysed signal at some level was actually odd, the running
    approximation overshoots the sibling details by one sample, which is
    detected by shape comparison and trimmed, as wavelet toolboxes do.
    """
    cur = coeffs[0]
    details = coeffs[1:]
    for i, det in enumerate(details):
        dshape = det[0].shape
        if cur.shape[0] == dshape[0] + 1:
            cur = cur[:-1, :]
        if cur.shape[1] == dshape[1] + 1:
            cur = cur[:, :-1]
        if cur.shape != dshape:
            raise ValueError(f"inconsistent coefficient shapes {cur.shape} vs {dshape}")
        if i + 1 < len(details):
            target = (
                2 * dshape[0] - FILTER_LENGTH + 2,
                2 * dshape[1] - FILTER_LENGTH + 2,
            )
        else:
            target = out_shape
        cur = idwt2(cur, det, target)
    return cur
