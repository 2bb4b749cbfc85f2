import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freqvit.augment import gaussian_blur
from freqvit.coreio import Prng
from freqvit.spectral import (
    HeatmapGrid,
    band_energy,
    dft2,
    fourier_basis,
    idft2,
    sample_per_class,
    sensitivity_heatmap,
)


def naive_dft(x):
    n = x.shape[0]
    k = np.arange(n)
    w = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return w @ x @ w / n


def test_matches_direct_summation():
    x = Prng(0).uniform((8, 8))
    np.testing.assert_allclose(dft2(x), naive_dft(x), atol=1e-12)


def test_constant_has_only_dc():
    X = dft2(np.full((16, 16), 0.3))
    assert abs(X[0, 0]) == pytest.approx(16 * 0.3)
    rest = np.abs(X).ravel()[1:]
    assert rest.max() < 1e-9


def test_cosine_has_two_peaks():
    n = 32
    u = np.arange(n)[:, None] * np.ones((1, n))
    X = np.abs(dft2(np.cos(2 * np.pi * 3 * u / n)))
    peaks = {tuple(p) for p in np.argwhere(X > 1e-9)}
    assert peaks == {(3, 0), (n - 3, 0)}


@given(st.sampled_from([2, 4, 8, 16]), st.integers(0, 10**6))
def test_parseval_and_inverse(n, seed):
    x = Prng(seed).gaussian((n, n))
    X = dft2(x)
    assert np.sum(np.abs(X) ** 2) == pytest.approx(np.sum(x**2), rel=1e-6)
    np.testing.assert_allclose(idft2(X).real, x, atol=1e-6)


@pytest.mark.parametrize("shape", [(6, 6), (8, 4), (8,)])
def test_rejects_bad_shapes(shape):
    with pytest.raises(ValueError):
        dft2(np.zeros(shape))


@given(st.integers(-8, 8), st.integers(-8, 8))
def test_basis_is_real_unit_and_supported_on_a_pair(i, j):
    n = 16
    U = fourier_basis(i, j, n)
    assert U.dtype == np.float64
    assert np.linalg.norm(U) == pytest.approx(1.0)
    support = {tuple(p) for p in np.argwhere(np.abs(dft2(U)) > 1e-9)}
    assert support <= {(i % n, j % n), ((-i) % n, (-j) % n)}
    assert (i % n, j % n) in support


def test_dc_basis_is_constant():
    np.testing.assert_allclose(fourier_basis(0, 0, 8), np.full((8, 8), 1 / 8))


def test_basis_2_5_has_two_bins():
    assert np.count_nonzero(np.abs(dft2(fourier_basis(2, 5, 16))) > 1e-9) == 2


def test_basis_rejects_out_of_range():
    with pytest.raises(ValueError):
        fourier_basis(9, 0, 16)


def test_band_energy_split():
    x = np.zeros((16, 16))
    x[:, :] = np.cos(2 * np.pi * 6 * np.arange(16) / 16)[None, :]
    low, high = band_energy(x, 4)
    assert low < 1e-12 and high == pytest.approx(np.sum(x**2))


def test_sample_per_class_counts():
    labels = np.repeat(np.arange(4), 12)
    idx = sample_per_class(labels, 5, Prng(0))
    assert np.bincount(labels[idx]).tolist() == [5] * 4
    assert len(set(idx.tolist())) == 20


def _dc_oracle(threshold=0.5):
    def predict(batch):
        return (batch.mean(axis=(1, 2, 3)) > threshold).astype(int)
    return predict


def _near_threshold_set(n=16, per_class=5, seed=0):
    rng = Prng(seed)
    imgs, labels = [], []
    for k in range(2 * per_class):
        lab = k % 2
        tex = 0.1 * fourier_basis(3, 1, n) * n * (rng.uniform() - 0.5)
        mean = 0.5 + (1.5 if lab else -1.5) / 255
        imgs.append(np.repeat((mean + tex)[:, :, None], 3, axis=2))
        labels.append(lab)
    return np.asarray(imgs, np.float32), np.asarray(labels)


def test_dc_oracle_heatmap_peaks_at_dc():
    imgs, labels = _near_threshold_set()
    grid = sensitivity_heatmap(_dc_oracle(), imgs, labels, seed=1)
    assert grid.clean_error == 0.0
    assert np.unravel_index(np.argmax(grid.values), grid.values.shape) == grid.dc_cell
    off = np.delete(grid.values.ravel(), np.ravel_multi_index(grid.dc_cell, grid.values.shape))
    assert np.abs(off - grid.clean_error).max() <= 0.01
    assert grid.values[grid.dc_cell] > 0.2


def test_zero_norm_gives_clean_error_everywhere():
    imgs, labels = _near_threshold_set()
    labels = labels.copy()
    labels[0] = 1 - labels[0]
    grid = sensitivity_heatmap(_dc_oracle(), imgs, labels, v=0.0, per_class=None)
    np.testing.assert_array_equal(grid.values, np.full((16, 16), grid.clean_error))
    assert grid.clean_error == pytest.approx(0.1)


def test_heatmap_is_conjugate_symmetric_and_bounded():
    imgs, labels = _near_threshold_set(n=8)
    g = sensitivity_heatmap(_dc_oracle(), imgs, labels, v=0.5)
    assert np.isfinite(g.values).all() and g.values.min() >= 0 and g.values.max() <= 1
    for r in range(8):
        for c in range(8):
            fi, fj = g.frequency(r, c)
            assert g.values[r, c] == g.values[(-fi + 4) % 8, (-fj + 4) % 8]


def test_relabeling_classes_leaves_heatmap_unchanged():
    imgs, labels = _near_threshold_set(n=8)
    base = sensitivity_heatmap(_dc_oracle(), imgs, labels, v=0.5, seed=3)
    flipped = sensitivity_heatmap(lambda b: 1 - _dc_oracle()(b), imgs, 1 - labels, v=0.5, seed=3)
    np.testing.assert_array_equal(base.values, flipped.values)


def test_threads_do_not_change_the_heatmap():
    imgs, labels = _near_threshold_set(n=8)
    a = sensitivity_heatmap(_dc_oracle(), imgs, labels, v=0.5, threads=1)
    b = sensitivity_heatmap(_dc_oracle(), imgs, labels, v=0.5, threads=3)
    np.testing.assert_array_equal(a.values, b.values)


def test_resolution_mismatch_rejected():
    imgs, labels = _near_threshold_set(n=8)
    with pytest.raises(ValueError, match="expects"):
        sensitivity_heatmap(_dc_oracle(), imgs, labels, resolution=16)
    with pytest.raises(ValueError):
        sensitivity_heatmap(_dc_oracle(), imgs[:0], labels[:0])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_blur_trained_model_tolerates_high_frequencies(seed):
    # nearest-centroid classifier fitted on heavily blurred images, applied
    # after the same blur: high frequencies barely reach its decision
    n, rng = 16, Prng(seed)
    yy, xx = np.mgrid[0:n, 0:n] / n
    protos = [0.5 + 0.08 * np.cos(2 * np.pi * (xx * np.cos(a) + yy * np.sin(a))) for a in (0.0, 1.2, 2.4)]
    imgs, labels = [], []
    for k in range(60):
        lab = k % 3
        imgs.append((protos[lab] + 0.02 * rng.gaussian((n, n)))[:, :, None])
        labels.append(lab)
    imgs, labels = np.asarray(imgs, np.float32), np.asarray(labels)
    blur = lambda b: np.stack([gaussian_blur(x, 2.0) for x in b])  # noqa: E731
    feats = blur(imgs).reshape(len(imgs), -1)
    centroids = np.stack([feats[labels == c].mean(0) for c in range(3)])

    def predict(batch):
        f = blur(batch).reshape(len(batch), -1)
        return np.argmin(((f[:, None] - centroids[None]) ** 2).sum(-1), axis=1)

    g = sensitivity_heatmap(predict, imgs, labels, v=1.5, seed=seed)
    r = g.radius()
    inner, outer = g.values[r <= 2].mean(), g.values[r >= 6].mean()
    assert outer <= inner + 0.02


def test_grid_writes_csv_pgm_and_sidecar(tmp):
    g = HeatmapGrid(values=np.arange(16.0).reshape(4, 4) / 16, perturbation_norm=0.5, clean_error=0.0,
                    meta={"seed": 1})
    paths = g.write(tmp / "hm")
    assert [p.suffix for p in paths] == [".csv", ".pgm", ".txt"]
    assert "pgm_normalization=min-max" in paths[2].read_text()
    rows = [l for l in paths[0].read_text().splitlines() if not l.startswith("#")]
    np.testing.assert_allclose(np.loadtxt(rows, delimiter=","), g.values, atol=1e-6)
