import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from freqvit.augment import (
    CORRUPTION_GROUPS,
    SEVERITY_TABLE,
    CorruptionSpec,
    GaussianPatchCfg,
    PatchMode,
    apply_corruption,
    apply_gaussian_patch,
    catalog_from_csv,
    catalog_to_csv,
    corruption_catalog,
    gaussian_blur,
)
from freqvit.coreio import Prng, derive
from freqvit.spectral import band_energy


def textured_batch(n=100, size=32, seed=0):
    rng = Prng(seed)
    y, x = np.mgrid[0:size, 0:size] / size
    imgs = []
    for k in range(n):
        f = 1 + rng.integers(0, 6)
        base = 0.5 + 0.3 * np.sin(2 * np.pi * f * (x + rng.uniform()) + y * rng.uniform())
        imgs.append(np.clip(base[:, :, None] + 0.05 * rng.gaussian((size, size, 3)), 0, 1))
    return np.asarray(imgs, np.float32)


@given(st.integers(0, 10**6), st.floats(0.05, 0.95), st.floats(0.01, 2.0))
def test_patch_changes_only_the_sampled_square(seed, frac, scale):
    img = np.full((24, 24, 3), 0.5, np.float32)
    cfg = GaussianPatchCfg(side_fraction=frac, scale=scale, probability=1.0)
    out, box = apply_gaussian_patch(img, Prng(seed), cfg, return_box=True)
    top, left, side = box
    assert side == int(frac * 24)
    mask = np.zeros((24, 24), bool)
    mask[top : top + side, left : left + side] = True
    changed = (out != img).any(axis=2)
    assert not changed[~mask].any()
    # with continuous noise every pixel in the square moves (ties have measure zero)
    assert changed[mask].mean() > 0.95


def test_patch_inputs_untouched():
    img = np.full((8, 8, 1), 0.4, np.float32)
    apply_gaussian_patch(img, Prng(0), GaussianPatchCfg(probability=1.0))
    assert (img == 0.4).all()


@pytest.mark.parametrize("cfg", [GaussianPatchCfg(scale=0.0, probability=1.0),
                                 GaussianPatchCfg(side_fraction=0.0, probability=1.0),
                                 GaussianPatchCfg(probability=0.0)])
def test_patch_identity_cases(cfg):
    img = Prng(3).uniform((16, 16, 3)).astype(np.float32)
    assert apply_gaussian_patch(img, Prng(1), cfg).tobytes() == img.tobytes()


def test_patch_noise_has_unit_mean():
    img = np.full((128, 128, 1), 0.5, np.float32)
    cfg = GaussianPatchCfg(side_fraction=0.5, scale=0.5, probability=1.0)
    out, (top, left, side) = apply_gaussian_patch(img, Prng(8), cfg, return_box=True)
    assert side == 64
    ratio = out[top : top + side, left : left + side] / 0.5
    unclipped = (ratio > 0) & (ratio < 2)
    # the clamp cuts both tails symmetrically about 1 (0 and 2 after dividing by 0.5)
    assert abs(ratio[unclipped].mean() - 1) <= 3 * 0.5 / 64


def test_patch_replace_mode_draws_around_one():
    img = np.zeros((64, 64, 1), np.float32)
    cfg = GaussianPatchCfg(side_fraction=0.5, scale=0.1, probability=1.0, mode="replace")
    assert cfg.mode is PatchMode.REPLACE
    out, (t, l, s) = apply_gaussian_patch(img, Prng(2), cfg, return_box=True)
    assert out[t : t + s, l : l + s].mean() > 0.9


def test_patch_probability_is_respected():
    cfg = GaussianPatchCfg(probability=0.3)
    hits = sum(apply_gaussian_patch(np.full((8, 8, 1), 0.5), derive(0, 0, i), cfg, True)[1] is not None
               for i in range(4000))
    assert abs(hits / 4000 - 0.3) < 0.03


def test_patch_cfg_validation():
    with pytest.raises(ValueError):
        GaussianPatchCfg(side_fraction=1.0)
    with pytest.raises(ValueError):
        GaussianPatchCfg(scale=-0.1)
    with pytest.raises(ValueError):
        GaussianPatchCfg(probability=1.5)


def test_catalog_shape_and_groups():
    cat = corruption_catalog()
    assert len(cat) == 40
    assert {s.kind for s in cat} == set(CORRUPTION_GROUPS)
    tags = {s.kind: s.group for s in cat}
    assert tags["gaussian_noise"] == "high"
    assert tags["pixelate"] == "hybrid"
    assert {k for k, g in tags.items() if g == "low"} == {"brightness", "contrast"}
    assert {k for k, g in tags.items() if g == "mid"} == {"gaussian_blur"}
    assert {k for k, g in tags.items() if g == "high"} == {
        "gaussian_noise", "shot_noise", "impulse_noise", "speckle_noise"}


def test_severity_table_frozen():
    assert SEVERITY_TABLE == {
        "gaussian_noise": ("sigma", (0.04, 0.06, 0.08, 0.09, 0.10)),
        "shot_noise": ("rate", (250.0, 100.0, 50.0, 30.0, 20.0)),
        "impulse_noise": ("fraction", (0.01, 0.02, 0.04, 0.06, 0.08)),
        "speckle_noise": ("sigma", (0.10, 0.15, 0.20, 0.25, 0.30)),
        "gaussian_blur": ("sigma", (0.5, 0.75, 1.0, 1.5, 2.0)),
        "contrast": ("factor", (0.75, 0.6, 0.45, 0.3, 0.2)),
        "brightness": ("shift", (0.1, 0.2, 0.3, 0.4, 0.5)),
        "pixelate": ("fraction", (0.75, 0.6, 0.5, 0.4, 0.3)),
    }


def test_brightness_severity_one():
    out = apply_corruption(np.full((4, 4, 3), 0.5), Prng(0), CorruptionSpec("brightness", 1))
    np.testing.assert_allclose(out, 0.6, atol=1e-7)


def test_contrast_one_is_identity():
    img = Prng(5).uniform((8, 8, 3)).astype(np.float32)
    out = apply_corruption(img, Prng(0), CorruptionSpec("contrast", 1, param=1.0))
    np.testing.assert_allclose(out, img, atol=1e-7)


@pytest.mark.parametrize("sev", range(1, 6))
def test_gaussian_noise_variance(sev):
    sigma = SEVERITY_TABLE["gaussian_noise"][1][sev - 1]
    img = np.full((100, 1000, 1), 0.5, np.float32)  # 1e5 pixels, clamp never reached at 5 sigma
    out = apply_corruption(img, Prng(sev), CorruptionSpec("gaussian_noise", sev))
    var = out.astype(np.float64).var()
    # sample variance has relative sd sqrt(2 / N) ~ 0.45%
    assert var == pytest.approx(sigma**2, rel=0.02)


def test_impulse_fraction():
    img = np.full((200, 500, 1), 0.5, np.float32)
    out = apply_corruption(img, Prng(0), CorruptionSpec("impulse_noise", 5))
    hit = out != 0.5
    assert hit.mean() == pytest.approx(0.08, abs=0.005)
    assert set(np.unique(out[hit])) <= {0.0, 1.0}


def test_shot_noise_is_unbiased():
    img = np.full((200, 500, 1), 0.4, np.float32)
    out = apply_corruption(img, Prng(0), CorruptionSpec("shot_noise", 3))
    assert out.mean() == pytest.approx(0.4, abs=0.003)
    assert out.var() == pytest.approx(0.4 / 50, rel=0.05)


def test_pixelate_keeps_shape():
    img = textured_batch(1)[0]
    assert apply_corruption(img, Prng(0), CorruptionSpec("pixelate", 5)).shape == img.shape


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        CorruptionSpec("fog", 1)
    with pytest.raises(ValueError):
        CorruptionSpec("contrast", 6)


def test_severity_is_monotone_on_a_fixed_batch():
    batch = textured_batch(100)
    for kind in SEVERITY_TABLE:
        dist = []
        for sev in range(1, 6):
            spec = CorruptionSpec(kind, sev)
            out = np.stack([apply_corruption(x, derive(0, sev, i, 7), spec) for i, x in enumerate(batch)])
            dist.append(float(np.sqrt(((out - batch) ** 2).sum(axis=(1, 2, 3))).mean()))
        assert all(a <= b for a, b in zip(dist, dist[1:])), (kind, dist)


@pytest.mark.parametrize("spec", corruption_catalog())
def test_corruption_is_deterministic(spec):
    img = textured_batch(1, 16)[0]
    a = apply_corruption(img, Prng(4, 2), spec)
    b = apply_corruption(img, Prng(4, 2), spec)
    assert a.dtype == np.float32 and a.tobytes() == b.tobytes()
    assert a.min() >= 0 and a.max() <= 1


def test_noise_spreads_energy_and_blur_removes_it():
    img = textured_batch(1, 64)[0][:, :, :1]
    low, high = band_energy(img, 8)
    noisy = apply_corruption(img, Prng(0), CorruptionSpec("gaussian_noise", 5))
    diff = noisy.astype(np.float64) - img
    dl, dh = band_energy(diff, 8)
    # white noise: band energy proportional to the number of bins
    r = np.hypot(*np.meshgrid(np.fft.fftfreq(64) * 64, np.fft.fftfreq(64) * 64))
    share = (r <= 8).mean()
    assert dl / (dl + dh) == pytest.approx(share, rel=0.2)
    ratio = high / (low + high)
    for sev in range(1, 6):
        bl, bh = band_energy(apply_corruption(img, Prng(0), CorruptionSpec("gaussian_blur", sev)), 8)
        assert bh / (bl + bh) < ratio
        ratio = bh / (bl + bh)


def test_gaussian_blur_preserves_constants():
    np.testing.assert_allclose(gaussian_blur(np.full((9, 9, 2), 0.7), 1.3), 0.7, atol=1e-12)


def test_catalog_csv_round_trip():
    cat = corruption_catalog()
    text = catalog_to_csv(cat)
    assert text.splitlines()[0] == "kind,severity,group,params"
    assert catalog_from_csv(text) == cat
    edited = text.replace("brightness,1,low,shift=0.1", "brightness,1,low,shift=0.05")
    assert catalog_from_csv(edited)[30].value == 0.05


def test_catalog_csv_rejects_bad_group():
    with pytest.raises(ValueError):
        catalog_from_csv("kind,severity,group,params\ncontrast,1,high,factor=0.75\n")
