import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from synthface.augment import (AugmentationConfig, AugmentationSpec, apply_to_image, apply_to_labels,
                               homography_from_points, map_points, pixel_homography, rotation_homography,
                               sample_augmentation, warp_image, warp_nearest)
from synthface.errors import ConfigurationError, InvalidParameterError


def _random_homography(rng, jitter=0.08):
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    h = homography_from_points(corners, corners + rng.uniform(-jitter, jitter, size=(4, 2)))
    return h @ rotation_homography(rng.uniform(-0.5, 0.5))


def _homogeneous(h, p):
    # independent evaluation, one point at a time
    x, y = p
    u = h[0, 0] * x + h[0, 1] * y + h[0, 2]
    v = h[1, 0] * x + h[1, 1] * y + h[1, 2]
    w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
    return u / w, v / w


class TestSample:
    def test_none_is_identity(self, rng):
        spec = sample_augmentation(AugmentationConfig(mode="none"), rng)
        assert spec.to_dict() == AugmentationSpec().to_dict()

    def test_appearance_keeps_geometry(self, rng):
        cfg = AugmentationConfig(mode="appearance")
        specs = [sample_augmentation(cfg, rng) for _ in range(50)]
        assert all(s.is_geometric_identity for s in specs)
        assert len({s.brightness for s in specs}) == 50

    def test_full_rotation_uniform(self):
        rng = np.random.default_rng(4)
        cfg = AugmentationConfig(mode="full")
        angles = np.degrees([sample_augmentation(cfg, rng).rotation for _ in range(10_000)])
        assert angles.min() >= -30 and angles.max() <= 30
        counts, _ = np.histogram(angles, bins=20, range=(-30, 30))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_ranges_respected(self, rng):
        cfg = AugmentationConfig()
        for _ in range(500):
            s = sample_augmentation(cfg, rng)
            assert -0.2 <= s.brightness <= 0.2 and 0.7 <= s.contrast <= 1.3
            assert 0 <= s.blur_radius <= 2 and 0 <= s.noise_sigma <= 0.03

    def test_deterministic(self):
        cfg = AugmentationConfig()
        a = sample_augmentation(cfg, np.random.default_rng(9)).to_dict()
        b = sample_augmentation(cfg, np.random.default_rng(9)).to_dict()
        assert a == b

    def test_spec_round_trip(self, rng):
        s = sample_augmentation(AugmentationConfig(), rng)
        assert AugmentationSpec.from_dict(s.to_dict()).to_dict() == s.to_dict()

    def test_bad_config(self):
        with pytest.raises(ConfigurationError):
            AugmentationConfig(mode="heavy").validate()
        with pytest.raises(ConfigurationError):
            AugmentationConfig(rotation_deg=(10, -10)).validate()
        with pytest.raises(ConfigurationError):
            AugmentationConfig(noise_sigma=(float("nan"), 0.1)).validate()

    def test_singular_homography(self):
        with pytest.raises(InvalidParameterError):
            AugmentationSpec(homography=np.zeros((3, 3)))


class TestImage:
    def test_identity_bit_identical(self, rng):
        img = rng.random((20, 24, 3)).astype(np.float32)
        out = apply_to_image(AugmentationSpec(), img)
        assert np.array_equal(out, img) and out is not img

    def test_offset_example(self):
        img = np.full((8, 8, 3), 0.5, dtype=np.float32)
        assert np.allclose(apply_to_image(AugmentationSpec(brightness=0.25), img), 0.75)

    def test_gain_and_clamp(self):
        img = np.full((8, 8), 0.8)
        assert np.allclose(apply_to_image(AugmentationSpec(contrast=2.0), img), 1.0)

    def test_grayscale_idempotent(self, rng):
        gray = np.repeat(rng.random((10, 10, 1)), 3, axis=2).astype(np.float32)
        out = apply_to_image(AugmentationSpec(grayscale=True), gray)
        assert np.max(np.abs(out - gray)) <= 1 / 255

    def test_grayscale_luma(self):
        img = np.zeros((4, 4, 3))
        img[..., 0] = 1.0
        assert np.allclose(apply_to_image(AugmentationSpec(grayscale=True), img), 0.299)

    def test_noise_reproducible(self, rng):
        img = rng.random((16, 16))
        spec = AugmentationSpec(noise_sigma=0.05, noise_seed=3)
        assert np.array_equal(apply_to_image(spec, img), apply_to_image(spec, img))

    def test_empty_image(self):
        with pytest.raises(InvalidParameterError):
            apply_to_image(AugmentationSpec(), np.zeros((0, 0)))

    def test_warp_translation(self):
        img = np.zeros((16, 16))
        img[4, 5] = 1.0
        shift = np.array([[1, 0, 2 / 16], [0, 1, 3 / 16], [0, 0, 1.0]])
        out = warp_image(img, shift)
        assert out[7, 7] == pytest.approx(1.0) and out.sum() == pytest.approx(1.0)


class TestLabels:
    def test_identity(self, rng):
        mask = rng.integers(0, 11, size=(12, 12)).astype(np.uint8)
        lm = rng.random((68, 3)) * 12
        m, l, v = apply_to_labels(AugmentationSpec(), mask, lm)
        assert np.array_equal(m, mask) and np.array_equal(l, lm) and v.all()

    def test_rotation_fixed_centre(self):
        spec = AugmentationSpec(homography=rotation_homography(math.pi / 2))
        _, out, vis = apply_to_labels(spec, np.zeros((64, 64), np.uint8), np.array([[32.0, 32.0, 1.0]]))
        assert np.allclose(out[0, :2], [32, 32], atol=1e-12) and vis[0]
        assert out[0, 2] == 1.0

    def test_homogeneous_oracle(self, rng):
        for _ in range(50):
            h = _random_homography(rng)
            pts = rng.random((68, 2)) * [96, 80]
            spec = AugmentationSpec(homography=h)
            _, out, _ = apply_to_labels(spec, np.zeros((80, 96), np.uint8), pts)
            hp = pixel_homography(h, 96, 80)
            expect = np.array([_homogeneous(hp, p) for p in pts])
            assert np.allclose(out[:, :2], expect, rtol=0, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        h = pixel_homography(_random_homography(rng), 128, 128)
        pts = rng.random((68, 2)) * 128
        back = map_points(np.linalg.inv(h), map_points(h, pts))
        assert np.max(np.abs(back - pts)) < 1e-6

    def test_appearance_leaves_labels(self, rng):
        cfg = AugmentationConfig(mode="appearance")
        mask = rng.integers(0, 15, size=(32, 32)).astype(np.uint8)
        lm = rng.random((68, 3)) * 32
        for _ in range(20):
            m, l, _ = apply_to_labels(sample_augmentation(cfg, rng), mask, lm)
            assert m.tobytes() == mask.tobytes() and l.tobytes() == lm.tobytes()

    def test_out_of_frame_invisible(self):
        shift = AugmentationSpec(homography=np.array([[1, 0, 0.5], [0, 1, 0], [0, 0, 1.0]]))
        lm = np.array([[10.0, 5.0, 0], [40.0, 5.0, 0]])
        _, out, vis = apply_to_labels(shift, np.zeros((20, 64), np.uint8), lm)
        assert out[1, 0] == pytest.approx(72.0)
        assert list(vis) == [True, False]

    def test_mask_classes_preserved(self, rng):
        mask = rng.integers(0, 15, size=(40, 40)).astype(np.uint8)
        out = warp_nearest(mask, _random_homography(rng))
        assert set(np.unique(out)) <= set(np.unique(mask)) and out.dtype == mask.dtype

    def test_mask_and_image_share_geometry(self, rng):
        # a blocky mask warped as labels and as an image agree away from block edges
        mask = np.kron(rng.integers(0, 5, size=(8, 8)), np.ones((8, 8), dtype=np.int64)).astype(np.uint8)
        h = _random_homography(rng)
        as_label = warp_nearest(mask, h)
        as_image = warp_image(mask.astype(np.float64), h)
        flat = np.isclose(as_image, np.round(as_image), atol=1e-9)
        assert np.mean(as_label[flat] == np.round(as_image[flat])) > 0.99
