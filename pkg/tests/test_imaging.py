import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from freqvit import _ext
from freqvit._ext import _resample_py
from freqvit.coreio import Prng
from freqvit.imaging import (
    CropConfig,
    CropSpec,
    GLOBAL_SCALE,
    LOCAL_SCALE,
    _taps,
    global_local_crops,
    kernel_weight,
    resize_bicubic,
    resize_matrix,
    sample_crop,
)


def keys_kernel(t, a=-0.5):
    # textbook piecewise form, written out branch by branch
    t = abs(t)
    if t <= 1:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1
    if t < 2:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


@pytest.mark.parametrize("t, w", [(0, 1.0), (1, 0.0), (2, 0.0), (0.5, 0.5625), (1.5, -0.0625),
                                  (-0.5, 0.5625), (2.5, 0.0), (-3, 0.0)])
def test_kernel_values(t, w):
    assert kernel_weight(t) == pytest.approx(w, abs=1e-15)


@given(st.floats(-3, 3), st.floats(-1, 0))
def test_kernel_matches_piecewise_formula(t, a):
    assert kernel_weight(t, a) == pytest.approx(keys_kernel(t, a), abs=1e-12)


def test_partition_of_unity_1000_offsets():
    d = Prng(11).uniform(1000)
    total = kernel_weight(d + 1) + kernel_weight(d) + kernel_weight(1 - d) + kernel_weight(2 - d)
    assert np.abs(total - 1).max() < 1e-9


@pytest.mark.parametrize("src, dst", [((7, 9), (13, 4)), ((32, 32), (16, 16)), ((5, 5), (21, 21))])
def test_constant_image_is_preserved(src, dst):
    img = np.full((*src, 3), 0.3, np.float32)
    out = resize_bicubic(img, *dst)
    assert out.shape == (*dst, 3)
    assert np.abs(out - 0.3).max() < 1e-6


def test_output_dims_224_to_112():
    assert resize_bicubic(np.zeros((224, 224, 3)), 112, 112).shape == (112, 112, 3)


def test_linear_ramp_interior_after_2x_upsample():
    n = 24
    ramp = np.add.outer(np.arange(n) * 0.02, np.arange(n) * 0.01)
    out = resize_bicubic(ramp, 2 * n, 2 * n, clamp=False)
    x = np.arange(2 * n) / 2.0  # corner-anchored source coordinate
    expect = np.add.outer(x * 0.02, x * 0.01)
    # interior: every tap in range, so no border replication enters
    idx, _ = _taps(n, 2 * n, -0.5)
    ok = np.flatnonzero((np.floor(x) - 1 >= 0) & (np.floor(x) + 2 <= n - 1))
    assert ok.size > 2 * n - 8
    assert np.abs(out[np.ix_(ok, ok)] - expect[np.ix_(ok, ok)]).max() < 1e-5
    assert (np.diff(idx[ok], axis=1) == 1).all()


def test_separable_matches_dense_matrices():
    img = Prng(2).uniform((9, 14))
    m_h, m_w = resize_matrix(9, 5), resize_matrix(14, 22)
    out = resize_bicubic(img, 5, 22, clamp=False)
    np.testing.assert_allclose(out, m_h @ img @ m_w.T, atol=1e-6)
    # rows first then columns equals the joint map
    rows = resize_bicubic(img, 5, 14, clamp=False)
    np.testing.assert_allclose(resize_bicubic(rows, 5, 22, clamp=False), out, atol=1e-6)


def test_result_is_clamped():
    img = np.zeros((8, 8), np.float32)
    img[3:5, 3:5] = 1.0
    out = resize_bicubic(img, 19, 19)
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert resize_bicubic(img, 19, 19, clamp=False).min() < 0.0  # the kernel does overshoot


def test_same_size_is_identity():
    img = Prng(4).uniform((6, 6, 3)).astype(np.float32)
    np.testing.assert_array_equal(resize_bicubic(img, 6, 6), img)


def test_rejects_empty_output():
    with pytest.raises(ValueError):
        resize_bicubic(np.zeros((4, 4)), 0, 3)


@pytest.mark.xfail(strict=True, reason="corner-anchored 2x downsampling is pure decimation, "
                                        "so out-of-band energy aliases instead of dropping")
def test_downsampling_suppresses_out_of_band_cosine():
    n = 224
    y = np.arange(n)[:, None]
    img = 0.5 + 0.4 * np.cos(2 * np.pi * 80 * y / n + 0.3) * np.ones((1, n))
    out = resize_bicubic(img, 112, 112, clamp=False)
    p_in = np.mean((img - img.mean()) ** 2)
    p_out = np.mean((out - out.mean()) ** 2)
    assert 10 * math.log10(p_in / p_out) >= 20.0


@given(st.integers(0, 10**6))
def test_crop_area_ratio_within_bounds(seed):
    rng = Prng(seed)
    for lo, hi in (GLOBAL_SCALE, LOCAL_SCALE):
        c = sample_crop(rng, 224, 224, lo, hi)
        ratio = c.side**2 / (224 * 224)
        # rounding the side moves the ratio by at most (side +- 0.5)^2
        eps = 2 * 0.5 / (math.sqrt(lo) * 224) + (0.5 / 224) ** 2 / lo
        assert lo * (1 - eps) <= ratio <= hi * (1 + eps)


def test_crop_area_ratio_over_many_draws():
    rng = Prng(0)
    lo, hi = LOCAL_SCALE
    sides = np.array([sample_crop(rng, 96, 96, lo, hi).side for _ in range(100_000)])
    ratio = sides**2 / 96**2
    eps = 2 * 0.5 / (math.sqrt(lo) * 96) + (0.5 / 96) ** 2 / lo
    assert ratio.min() >= lo * (1 - eps) and ratio.max() <= hi * (1 + eps)


def test_full_image_crop():
    c = sample_crop(Prng(0), 224, 224, 1.0, 1.0)
    assert (c.side, c.top, c.left) == (224, 0, 0)


def test_nonsquare_full_crop_is_clamped():
    c = sample_crop(Prng(0), 20, 50, 1.0, 1.0)
    assert c.side == 20 and c.top == 0


def test_crop_errors():
    with pytest.raises(ValueError):
        sample_crop(Prng(0), 10, 10, 0.5, 0.4)
    with pytest.raises(ValueError):
        sample_crop(Prng(0), 10, 10, 0.01, 0.4)
    with pytest.raises(ValueError):
        CropSpec(5, 0, 6, 10, 10)


def test_crop_placement_covers_all_offsets():
    rng = Prng(9)
    tops = {sample_crop(rng, 10, 10, 0.25, 0.25).top for _ in range(2000)}
    assert tops == set(range(6))


@pytest.mark.parametrize("g, l", [(112, 48), (224, 96)])
def test_multicrop_shapes(g, l):
    img = Prng(1).uniform((224, 224, 3))
    gl, lc = global_local_crops(Prng(5), img, CropConfig(global_out=g, local_out=l, n_local=3))
    assert [v.shape for v in gl] == [(g, g, 3)] * 2
    assert [v.shape for v in lc] == [(l, l, 3)] * 3


def test_multicrop_without_locals():
    gl, lc = global_local_crops(Prng(0), np.zeros((32, 32, 3)), CropConfig(16, 8, n_local=0))
    assert len(gl) == 2 and lc == []


@given(hnp.arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12), st.integers(1, 3)),
                  elements=st.floats(-2, 2)),
       st.integers(1, 20), st.integers(1, 20), st.booleans())
def test_compiled_and_fallback_agree_bitwise(src, oh, ow, clamp):
    h, w = src.shape[:2]
    ix, wx = _taps(w, ow, -0.5)
    iy, wy = _taps(h, oh, -0.5)
    ref = _resample_py.resize_separable(src, ix, wx, iy, wy, clamp)
    got = _ext.resample.resize_separable(src, ix, wx, iy, wy, clamp)
    assert np.asarray(got).tobytes() == np.asarray(ref).tobytes()


def test_compiled_backend_is_built():
    assert _ext.BACKEND == "cython"
