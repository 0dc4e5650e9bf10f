import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from stan.interpret import (Heatmap, box_mask, contrast_ratio, error_map, guided_backprop_map, heatmap_to_uint8,
                            mass_fraction, receptive_field_radius, save_heatmap, save_montage)
from stan.models import Discriminator, DiscriminatorConfig
from stan.training import pixel_loss


@pytest.fixture(scope="module")
def disc():
    torch.manual_seed(0)
    return Discriminator(DiscriminatorConfig(16, 2))


def test_error_map_examples():
    a = np.random.default_rng(0).uniform(-1, 1, (8, 8))
    assert error_map(a, a).max_value == 0
    b = a.copy()
    b[3, 4] += 0.8
    m = error_map(b, a).values
    assert m[3, 4] == pytest.approx(0.8)
    m[3, 4] = 0
    assert np.all(m == 0)
    with pytest.raises(ValueError):
        error_map(a, a[:4])


def test_error_map_matches_pixel_loss():
    g = torch.Generator().manual_seed(1)
    x, y = torch.randn(1, 1, 8, 8, generator=g, dtype=torch.float64), torch.randn(1, 1, 8, 8, generator=g,
                                                                                   dtype=torch.float64)
    m = error_map(x, y).values
    assert pixel_loss(x, y).item() ** 2 == pytest.approx((m ** 2).sum(), rel=1e-12)


def test_zero_discriminator_gives_zero_map():
    d = Discriminator(DiscriminatorConfig(16, 2))
    with torch.no_grad():
        for p in d.parameters():
            p.zero_()
    assert guided_backprop_map(torch.randn(11, 1, 16, 16), d).max_value == 0


@settings(max_examples=10)
@given(seed=st.integers(0, 2**16))
def test_guided_map_nonnegative_finite_deterministic(disc, seed):
    seq = torch.randn(1, 11, 1, 16, 16, generator=torch.Generator().manual_seed(seed))
    a = guided_backprop_map(seq, disc).values
    assert a.shape == (16, 16)
    assert np.all(a >= 0) and np.all(np.isfinite(a))
    np.testing.assert_array_equal(a, guided_backprop_map(seq, disc).values)


def test_guided_map_differs_from_plain_gradient(disc):
    seq = torch.randn(1, 11, 1, 16, 16, generator=torch.Generator().manual_seed(3)).requires_grad_(True)
    (plain,) = torch.autograd.grad(disc(seq).mean(), seq)
    plain = plain[0, :, 0].abs().max(dim=0).values.numpy()
    guided = guided_backprop_map(seq.detach(), disc).values
    assert not np.allclose(plain, guided)
    assert seq.grad is None and all(p.grad is None for p in disc.parameters())


def test_receptive_field_radius():
    # rf grows by (k - 1) * jump per layer: 1 + 4 + 4*2 + 2*4 + 2*8 + 2*16 + 2*32 = 133
    assert receptive_field_radius() == 66


def test_box_mask_and_fractions():
    m = box_mask((10, 10), (2, 3, 4, 5))
    assert m.sum() == 3 * 3 and m[3, 2] and m[5, 4] and not m[6, 4]
    assert box_mask((10, 10), (2, 3, 4, 5), dilation=100).all()
    h = Heatmap(np.where(m, 4.0, 1.0))
    assert mass_fraction(h, m) == pytest.approx(36 / (36 + 91))
    assert contrast_ratio(h, m) == pytest.approx(4.0)
    assert mass_fraction(Heatmap(np.zeros((10, 10))), m) == 0


def test_save_heatmap(tmp_path):
    save_heatmap(Heatmap(np.zeros((5, 6))), tmp_path / "zero.png")
    assert np.all(np.asarray(Image.open(tmp_path / "zero.png")) == 0)
    v = np.zeros((5, 6))
    v[2, 3] = 0.01
    save_heatmap(Heatmap(v), tmp_path / "one.png")
    img = np.asarray(Image.open(tmp_path / "one.png"))
    assert img[2, 3] == 255 and img.sum() == 255


def test_heatmap_round_trip(tmp_path):
    h = Heatmap(np.random.default_rng(0).exponential(size=(12, 9)))
    save_heatmap(h, tmp_path / "h.png")
    back = np.asarray(Image.open(tmp_path / "h.png")).astype(float) / 255
    assert np.abs(back - h.normalized()).max() <= 1 / 255
    np.testing.assert_array_equal(np.asarray(Image.open(tmp_path / "h.png")), heatmap_to_uint8(h))


def test_montage(tmp_path, disc):
    real = np.zeros((16, 16), np.float32)
    save_montage(real, real, Heatmap(np.ones((16, 16))), Heatmap(np.zeros((16, 16))), tmp_path / "m.png")
    img = np.asarray(Image.open(tmp_path / "m.png"))
    assert img.shape == (16, 64)
    assert np.all(img[:, 32:48] == 255) and np.all(img[:, 48:] == 0)
