import numpy as np
import pytest
from scipy import ndimage

from ridgekit.annot_io import mask_bbox
from ridgekit.errors import InvalidInputError
from ridgekit.phantom import (
    DegradeSpec,
    PhantomSpec,
    RidgeArcSpec,
    degrade,
    generate_phantom,
    generate_phantom_full,
)
from ridgekit.raster import RasterImage, rgb_to_yiq
from ridgekit.rng import Xoshiro256StarStar


class TestDeterminism:
    def test_same_spec_bit_identical(self):
        spec = PhantomSpec(seed=42, degrade=DegradeSpec(0.1, 1.0, 0.02, 0.6))
        img1, ann1 = generate_phantom(spec)
        img2, ann2 = generate_phantom(spec)
        assert np.array_equal(img1.data, img2.data)
        assert np.array_equal(ann1.mask, ann2.mask)
        assert ann1.box == ann2.box

    def test_different_seeds_differ(self):
        img1, _ = generate_phantom(PhantomSpec(seed=1))
        img2, _ = generate_phantom(PhantomSpec(seed=2))
        assert not np.array_equal(img1.data, img2.data)


class TestGeometry:
    def test_ridge_contrast_measurable(self):
        # neutral degradations: stroke-vs-annulus difference reads the
        # configured contrast
        spec = PhantomSpec(seed=7)
        result = generate_phantom_full(spec)
        y = rgb_to_yiq(result.image).y_plane
        mask = result.annotation.mask
        annulus = ndimage.binary_dilation(mask, iterations=5) & ~mask
        measured = y[mask].mean() - y[annulus].mean()
        assert measured == pytest.approx(spec.ridge_arc.contrast, rel=0.10)

    def test_annotation_box_is_tight(self):
        for seed in (3, 11):
            result = generate_phantom_full(PhantomSpec(seed=seed))
            assert result.annotation.box == mask_bbox(result.annotation.mask)

    def test_avascular_side_has_no_vessels(self):
        for seed in (1, 9, 23):
            spec = PhantomSpec(seed=seed)
            result = generate_phantom_full(spec)
            h, w = result.vessel_mask.shape
            scale = min(w, h)
            ys, xs = np.mgrid[0:h, 0:w]
            arc = spec.ridge_arc
            dist = np.hypot(xs - arc.center[0] * w, ys - arc.center[1] * h)
            beyond_ridge = dist > arc.radius * scale
            assert not (result.vessel_mask & beyond_ridge).any()
            assert result.vessel_mask.any()

    def test_annotation_describes_pre_degradation_geometry(self):
        base = PhantomSpec(seed=5)
        heavy = PhantomSpec(
            seed=5, degrade=DegradeSpec(illum_gradient=0.3, blur_sigma=3.0, noise_sigma=0.05, contrast_factor=0.4)
        )
        _, ann_clean = generate_phantom(base)
        _, ann_degraded = generate_phantom(heavy)
        assert np.array_equal(ann_clean.mask, ann_degraded.mask)
        assert ann_clean.box == ann_degraded.box


class TestDegrade:
    def test_neutral_is_identity(self):
        img = RasterImage.from_array(np.random.default_rng(0).random((20, 20, 3)))
        out = degrade(img, DegradeSpec())
        assert np.array_equal(out.data, img.data)

    def test_contrast_scaling_about_mean(self):
        data = np.where(np.arange(2 * 2 * 3).reshape(2, 2, 3) % 2 == 0, 0.8, 0.2)
        out = degrade(RasterImage.from_array(data), DegradeSpec(contrast_factor=0.5))
        assert out.data.flat[0] == pytest.approx(0.65)
        assert out.data.flat[1] == pytest.approx(0.35)

    def test_noise_standard_deviation(self):
        img = RasterImage.from_array(np.full((64, 64, 3), 0.5))
        out = degrade(img, DegradeSpec(noise_sigma=0.05), rng=Xoshiro256StarStar(3))
        residual = out.data - img.data
        assert 0.045 <= residual.std() <= 0.055

    def test_noise_requires_rng(self):
        img = RasterImage.from_array(np.full((4, 4, 3), 0.5))
        with pytest.raises(InvalidInputError):
            degrade(img, DegradeSpec(noise_sigma=0.05))

    def test_illumination_ramp_spans_gradient(self):
        img = RasterImage.from_array(np.full((10, 50, 3), 0.5))
        out = degrade(img, DegradeSpec(illum_gradient=0.2))
        assert out.data[0, -1, 0] - out.data[0, 0, 0] == pytest.approx(0.2)

    def test_output_clamped(self):
        img = RasterImage.from_array(np.full((16, 16, 3), 0.95))
        out = degrade(img, DegradeSpec(illum_gradient=0.4, noise_sigma=0.1), rng=7)
        assert out.data.min() >= 0.0 and out.data.max() <= 1.0


class TestSpecValidation:
    def test_bad_fractions_rejected(self):
        with pytest.raises(InvalidInputError):
            PhantomSpec(disc_center=(1.2, 0.5))
        with pytest.raises(InvalidInputError):
            RidgeArcSpec(radius=0.0)
        with pytest.raises(InvalidInputError):
            RidgeArcSpec(angle_span=0.0)
        with pytest.raises(InvalidInputError):
            DegradeSpec(contrast_factor=0.0)
        with pytest.raises(InvalidInputError):
            DegradeSpec(blur_sigma=-1.0)


class TestRng:
    def test_stream_reproducible(self):
        a = Xoshiro256StarStar(99)
        b = Xoshiro256StarStar(99)
        assert np.array_equal(a.uniform(1000), b.uniform(1000))
        assert np.array_equal(a.normal(777), b.normal(777))

    def test_uniform_range_and_moments(self):
        u = Xoshiro256StarStar(1).uniform(200_000)
        assert u.min() >= 0.0 and u.max() < 1.0
        assert abs(u.mean() - 0.5) < 0.005
        assert abs(u.var() - 1 / 12) < 0.002

    def test_normal_moments(self):
        z = Xoshiro256StarStar(2).normal(200_000)
        assert abs(z.mean()) < 0.01
        assert abs(z.std() - 1.0) < 0.01

    def test_draw_splitting_consistent(self):
        a = Xoshiro256StarStar(5)
        b = Xoshiro256StarStar(5)
        joined = a.uniform(600)
        parts = np.concatenate([b.uniform(100), b.uniform(250), b.uniform(250)])
        assert np.array_equal(joined, parts)
