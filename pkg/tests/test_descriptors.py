"""Patch descriptor behavior against a direct per-pixel reference."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointcascade.descriptors import (
    DescriptorConfig,
    descriptors_at,
    extract_descriptor,
    gradient_maps,
    stacked_features,
)
from jointcascade.geometry import FaceBox, FaceShape, Frame


def reference_descriptor(image, center, radius, cfg):
    """Straight-line reimplementation: per-pixel loops, joint 2-D Gaussian
    weighting, explicit trilinear soft-assignment.  Slow but obvious."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape

    def pix(y, x):
        return img[min(max(y, 0), h - 1), min(max(x, 0), w - 1)]

    cx, cy = float(center[0]), float(center[1])
    ax, ay = int(np.floor(cx + 0.5)), int(np.floor(cy + 0.5))
    n = int(np.floor(radius))
    sigma = 0.5 * radius
    g, nbins = cfg.grid_cells, cfg.orientation_bins
    hist = np.zeros((g, g, nbins))
    for yy in range(ay - n, ay + n + 1):
        for xx in range(ax - n, ax + n + 1):
            qy = min(max(yy, 0), h - 1)
            qx = min(max(xx, 0), w - 1)
            gx = 0.5 * (pix(qy, qx + 1) - pix(qy, qx - 1))
            gy = 0.5 * (pix(qy + 1, qx) - pix(qy - 1, qx))
            m = float(np.hypot(gx, gy))
            if m == 0.0:
                continue
            theta = float(np.mod(np.arctan2(gy, gx), 2.0 * np.pi))
            weight = m * np.exp(
                -((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma**2)
            )
            cu = (xx - cx + radius) * g / (2.0 * radius) - 0.5
            cv = (yy - cy + radius) * g / (2.0 * radius) - 0.5
            ob = theta * nbins / (2.0 * np.pi)
            b0 = int(np.floor(ob))
            to = ob - b0
            if b0 >= nbins:
                b0, to = nbins - 1, 1.0
            b1 = (b0 + 1) % nbins
            iu, iv = int(np.floor(cu)), int(np.floor(cv))
            tu, tv = cu - np.floor(cu), cv - np.floor(cv)
            for rv, wv in ((iv, 1.0 - tv), (iv + 1, tv)):
                if not 0 <= rv < g:
                    continue
                for ru, wu in ((iu, 1.0 - tu), (iu + 1, tu)):
                    if not 0 <= ru < g:
                        continue
                    hist[rv, ru, b0] += weight * wv * wu * (1.0 - to)
                    hist[rv, ru, b1] += weight * wv * wu * to
    vec = hist.reshape(-1)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    vec = np.minimum(vec / norm, cfg.clip_threshold)
    return vec / np.linalg.norm(vec)


def _noise_image(seed, h=48, w=48):
    rng = np.random.default_rng(seed)
    return rng.random((h, w))


class TestGradientMaps:
    def test_horizontal_ramp(self):
        img = np.tile(np.arange(6.0), (5, 1)) * 0.1
        mag, ori = gradient_maps(img)
        # interior: gx = 0.1, gy = 0
        assert np.allclose(mag[:, 1:-1], 0.1)
        assert np.allclose(ori[:, 1:-1], 0.0)
        # replicate padding halves the one-sided border gradient
        assert np.allclose(mag[:, 0], 0.05)

    def test_vertical_ramp_orientation(self):
        img = np.tile(np.arange(6.0)[:, None], (1, 5)) * 0.1
        mag, ori = gradient_maps(img)
        assert np.allclose(ori[1:-1, :], np.pi / 2)

    def test_orientation_range(self):
        mag, ori = gradient_maps(_noise_image(0))
        assert ori.min() >= 0.0
        assert ori.max() < 2.0 * np.pi


class TestAgainstReference:
    @pytest.mark.parametrize("seed", [0, 1, 2, 3])
    def test_random_images_random_centers(self, seed):
        cfg = DescriptorConfig()
        img = _noise_image(seed)
        rng = np.random.default_rng(100 + seed)
        centers = rng.uniform(8.0, 40.0, size=(5, 2))
        radius = rng.uniform(4.0, 9.0)
        mag, ori = gradient_maps(img)
        fast = descriptors_at(mag, ori, centers, radius, cfg)
        for i, c in enumerate(centers):
            ref = reference_descriptor(img, c, radius, cfg)
            assert np.max(np.abs(fast[i] - ref)) < 1e-9

    def test_window_straddling_border(self):
        cfg = DescriptorConfig()
        img = _noise_image(7, 24, 24)
        centers = np.array([[1.0, 2.0], [23.0, 0.5], [11.0, 23.5]])
        mag, ori = gradient_maps(img)
        fast = descriptors_at(mag, ori, centers, 6.5, cfg)
        for i, c in enumerate(centers):
            ref = reference_descriptor(img, c, 6.5, cfg)
            assert np.max(np.abs(fast[i] - ref)) < 1e-9

    def test_nondefault_grid_and_bins(self):
        cfg = DescriptorConfig(grid_cells=3, orientation_bins=6, clip_threshold=0.3)
        img = _noise_image(11)
        c = np.array([20.3, 17.8])
        fast = extract_descriptor(img, c, 7.2, cfg)
        ref = reference_descriptor(img, c, 7.2, cfg)
        assert fast.shape == (3 * 3 * 6,)
        assert np.max(np.abs(fast - ref)) < 1e-9


class TestProperties:
    def test_constant_image_gives_zero_vector(self):
        cfg = DescriptorConfig()
        d = extract_descriptor(np.full((32, 32), 0.7), [16.0, 16.0], 6.0, cfg)
        assert np.array_equal(d, np.zeros(cfg.length))

    def test_unit_norm_when_energy_present(self):
        cfg = DescriptorConfig()
        d = extract_descriptor(_noise_image(5), [24.0, 20.0], 7.0, cfg)
        assert abs(np.linalg.norm(d) - 1.0) < 1e-9

    def test_integer_shift_equivariance(self):
        cfg = DescriptorConfig()
        img = _noise_image(13, 40, 40)
        dx, dy = 5, 3
        shifted = np.zeros((48, 48))
        shifted[dy : dy + 40, dx : dx + 40] = img
        # windows stay inside the pasted region on both sides
        c = np.array([20.4, 19.7])
        a = extract_descriptor(img, c, 6.0, cfg)
        b = extract_descriptor(shifted, c + [dx, dy], 6.0, cfg)
        assert np.max(np.abs(a - b)) < 1e-9

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000))
    def test_norm_is_unit_or_zero(self, seed):
        cfg = DescriptorConfig()
        rng = np.random.default_rng(seed)
        img = rng.random((20, 20))
        c = rng.uniform(0.0, 19.0, size=2)
        d = extract_descriptor(img, c, rng.uniform(2.0, 8.0), cfg)
        n = np.linalg.norm(d)
        assert n < 1.0 + 1e-9
        assert n < 1e-12 or abs(n - 1.0) < 1e-9


class TestStackedFeatures:
    def test_length_with_default_config(self):
        cfg = DescriptorConfig()
        img = _noise_image(3, 64, 64)
        pts = np.random.default_rng(0).uniform(10, 50, size=(28, 2))
        shape = FaceShape(pts, Frame.IMAGE_PIXELS)
        feats = stacked_features(img, shape, FaceBox(5, 5, 50, 50), cfg)
        assert feats.shape == (28 * 128 + 1,)
        assert feats[-1] == 1.0

    def test_constant_image_gives_zeros_plus_bias(self):
        cfg = DescriptorConfig()
        shape = FaceShape(np.full((4, 2), 16.0), Frame.IMAGE_PIXELS)
        feats = stacked_features(
            np.full((32, 32), 0.2), shape, FaceBox(8, 8, 16, 16), cfg
        )
        assert np.array_equal(feats[:-1], np.zeros(4 * cfg.length))
        assert feats[-1] == 1.0

    def test_landmark_reorder_permutes_blocks(self):
        cfg = DescriptorConfig()
        img = _noise_image(17, 64, 64)
        pts = np.random.default_rng(2).uniform(12, 50, size=(6, 2))
        box = FaceBox(6, 6, 52, 52)
        base = stacked_features(img, FaceShape(pts, Frame.IMAGE_PIXELS), box, cfg)
        perm = [3, 0, 5, 1, 4, 2]
        permuted = stacked_features(
            img, FaceShape(pts[perm], Frame.IMAGE_PIXELS), box, cfg
        )
        L = cfg.length
        for new_i, old_i in enumerate(perm):
            a = permuted[new_i * L : (new_i + 1) * L]
            b = base[old_i * L : (old_i + 1) * L]
            assert np.array_equal(a, b)

    def test_rejects_canonical_shape(self):
        cfg = DescriptorConfig()
        shape = FaceShape(np.zeros((2, 2)), Frame.CANONICAL)
        with pytest.raises(ValueError):
            stacked_features(np.zeros((8, 8)), shape, FaceBox(0, 0, 8, 8), cfg)


class TestValidation:
    def test_config_rejects_bad_values(self):
        for kwargs in (
            {"radius_fraction": 0.0},
            {"radius_fraction": 1.5},
            {"grid_cells": 0},
            {"orientation_bins": 1},
            {"clip_threshold": 0.0},
        ):
            with pytest.raises(ValueError):
                DescriptorConfig(**kwargs)

    def test_bad_radius_and_centers(self):
        mag, ori = gradient_maps(_noise_image(0, 16, 16))
        cfg = DescriptorConfig()
        with pytest.raises(ValueError):
            descriptors_at(mag, ori, np.zeros((1, 2)), 0.0, cfg)
        with pytest.raises(ValueError):
            descriptors_at(mag, ori, np.full((1, 2), np.nan), 4.0, cfg)
        with pytest.raises(ValueError):
            descriptors_at(mag, ori, np.zeros((2, 3)), 4.0, cfg)
