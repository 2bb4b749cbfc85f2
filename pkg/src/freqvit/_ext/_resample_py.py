"""Numpy fallback for the separable 4-tap resampler."""

import numpy as np


def resize_separable(src, ix, wx, iy, wy, clamp):
    """Two 4-tap passes: along width, then along height.

    ``src`` is float64 (H, W, C); ``ix``/``wx`` are (W_out, 4) tap indices and
    weights, ``iy``/``wy`` are (H_out, 4). Taps accumulate left to right.
    """
    src = np.ascontiguousarray(src, dtype=np.float64)
    tmp = wx[None, :, 0, None] * src[:, ix[:, 0], :]
    for m in range(1, 4):
        tmp = tmp + wx[None, :, m, None] * src[:, ix[:, m], :]
    out = wy[:, 0, None, None] * tmp[iy[:, 0], :, :]
    for n in range(1, 4):
        out = out + wy[:, n, None, None] * tmp[iy[:, n], :, :]
    if clamp:
        np.clip(out, 0.0, 1.0, out=out)
    return out
