import numpy as np
import pytest

from gsdrag.ssim import psnr, ssim, ssim_map, ssim_map_with_grad


def test_self_similarity_is_exactly_one(rng):
    x = rng.uniform(0, 1, (20, 24, 3))
    assert np.array_equal(ssim_map(x, x), np.ones((20, 24)))
    assert ssim(x, x) == 1.0


def test_symmetry(rng):
    x = rng.uniform(0, 1, (16, 16, 3))
    y = rng.uniform(0, 1, (16, 16, 3))
    assert np.abs(ssim_map(x, y) - ssim_map(y, x)).max() < 1e-12


def test_dissimilar_images_score_lower(rng):
    x = rng.uniform(0, 1, (16, 16, 3))
    noisy = np.clip(x + rng.normal(0, 0.2, x.shape), 0, 1)
    assert ssim(x, noisy) < ssim(x, np.clip(x + 0.01, 0, 1))


def test_gradient_matches_finite_differences(rng):
    x = rng.uniform(0, 1, (14, 12, 3))
    y = rng.uniform(0, 1, (14, 12, 3))
    w = rng.uniform(0, 1, (14, 12))
    _, grad = ssim_map_with_grad(x, y, w)

    h = 1e-6
    for idx in [(0, 0, 0), (7, 5, 1), (13, 11, 2), (3, 9, 0)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = ((ssim_map(xp, y) * w).sum() - (ssim_map(xm, y) * w).sum()) / (2 * h)
        assert grad[idx] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_grayscale_images_supported(rng):
    x = rng.uniform(0, 1, (16, 16))
    y = rng.uniform(0, 1, (16, 16))
    assert ssim_map(x, y).shape == (16, 16)
    assert ssim(x, x) == 1.0


def test_psnr():
    x = np.full((8, 8, 3), 0.5)
    y = x + 0.1
    assert psnr(x, y) == pytest.approx(20.0, abs=1e-9)
    assert psnr(x, x) == float("inf")


def test_psnr_masked():
    x = np.full((8, 8, 3), 0.5)
    y = x.copy()
    y[:4] += 0.2
    mask = np.zeros((8, 8), dtype=bool)
    mask[4:] = True
    assert psnr(x, y, mask=mask[:, :, None].repeat(3, axis=2)) == float("inf")
