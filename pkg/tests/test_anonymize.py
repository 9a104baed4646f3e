import numpy as np
import pytest

from fedvision.anonymize import (
    AnonymizationReport,
    anonymize_detections,
    anonymize_image,
    blur_region,
    box_pixel_rect,
    build_kernel,
    default_sigma_rule,
    outline_regions,
    pad_box,
)
from fedvision.data import generate_dataset
from fedvision.detector import param_count, unpack_params
from fedvision.types import BoundingBox, Detection, RasterImage

from conftest import make_image


class TestKernel:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.5, 7.0, 20.0])
    def test_normalized(self, sigma):
        kernel = build_kernel(sigma)
        assert abs(kernel.weights.sum() - 1.0) <= 1e-9
        assert kernel.radius == int(np.ceil(3 * sigma))
        assert len(kernel.weights) == 2 * kernel.radius + 1

    def test_center_is_strict_maximum(self):
        kernel = build_kernel(1.0)
        center = kernel.weights[kernel.radius]
        others = np.delete(kernel.weights, kernel.radius)
        assert np.all(center > others)

    def test_symmetric(self):
        kernel = build_kernel(3.3)
        assert np.allclose(kernel.weights, kernel.weights[::-1], atol=1e-15)

    def test_unit_sigma_ratios(self):
        # unnormalized weights at offsets 0,1,2 are exp(0), exp(-1/2), exp(-2)
        kernel = build_kernel(1.0)
        r = kernel.radius
        assert kernel.weights[r + 1] / kernel.weights[r] == pytest.approx(np.exp(-0.5), abs=1e-12)
        assert kernel.weights[r + 2] / kernel.weights[r] == pytest.approx(np.exp(-2.0), abs=1e-12)

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            build_kernel(0.0)

    def test_default_sigma_rule(self):
        assert default_sigma_rule(30.0, 12.0) == pytest.approx(5.0)
        assert default_sigma_rule(3.0, 3.0) == pytest.approx(2.0)  # floor


class TestBlurRegion:
    def test_constant_image_unchanged(self):
        image = make_image(32)
        out = blur_region(image, BoundingBox(0.5, 0.5, 0.5, 0.5))
        assert out.pixels.tobytes() == image.pixels.tobytes()

    def test_locality(self):
        rng = np.random.default_rng(0)
        image = make_image(40, rng)
        box = BoundingBox(0.5, 0.5, 0.3, 0.25)
        out = blur_region(image, box)
        x0, y0, x1, y1 = box_pixel_rect(box, image)
        mask = np.zeros((40, 40), dtype=bool)
        mask[y0 : y1 + 1, x0 : x1 + 1] = True
        assert np.array_equal(out.pixels[~mask], image.pixels[~mask])
        assert not np.array_equal(out.pixels[mask], image.pixels[mask])

    def test_impulse_response(self):
        # bright pixel on black: blurred center = round(255 * w_center^2)
        size = 33
        pixels = np.zeros((size, size, 1), dtype=np.uint8)
        pixels[16, 16, 0] = 255
        image = RasterImage(size, size, 1, pixels)
        box = BoundingBox(0.5, 0.5, 0.4, 0.4)
        out = blur_region(image, box, sigma_rule=lambda w, h: 1.0)
        w0 = build_kernel(1.0).weights.max()
        expected = int(np.floor(255.0 * w0 * w0 + 0.5))
        assert out.pixels[16, 16, 0] == expected

    def test_range_preserved(self):
        rng = np.random.default_rng(1)
        image = make_image(32, rng)
        out = blur_region(image, BoundingBox(0.5, 0.5, 0.9, 0.9))
        assert out.pixels.min() >= 0 and out.pixels.max() <= 255
        assert out.pixels.min() >= image.pixels.min()
        assert out.pixels.max() <= image.pixels.max()

    def test_variance_does_not_increase(self):
        rng = np.random.default_rng(2)
        image = make_image(48, rng)
        box = BoundingBox(0.5, 0.5, 0.6, 0.6)
        out = blur_region(image, box)
        x0, y0, x1, y1 = box_pixel_rect(box, image)
        before = image.pixels[y0 : y1 + 1, x0 : x1 + 1].astype(float).var()
        after = out.pixels[y0 : y1 + 1, x0 : x1 + 1].astype(float).var()
        assert after <= before + 1e-9

    def test_box_outside_image_rejected(self):
        image = make_image(32)
        with pytest.raises(ValueError):
            blur_region(image, BoundingBox(3.0, 3.0, 0.2, 0.2))

    def test_three_channel_images(self):
        rng = np.random.default_rng(3)
        pixels = rng.integers(0, 256, size=(24, 24, 3)).astype(np.uint8)
        image = RasterImage(24, 24, 3, pixels)
        box = BoundingBox(0.5, 0.5, 0.5, 0.5)
        out = blur_region(image, box)
        x0, y0, x1, y1 = box_pixel_rect(box, image)
        mask = np.zeros((24, 24), dtype=bool)
        mask[y0 : y1 + 1, x0 : x1 + 1] = True
        assert np.array_equal(out.pixels[~mask], image.pixels[~mask])


class TestAnonymize:
    def test_no_detections_identity(self):
        rng = np.random.default_rng(4)
        image = make_image(32, rng)
        out, report = anonymize_detections(image, [])
        assert out.pixels.tobytes() == image.pixels.tobytes()
        assert report.blurred_boxes == [] and report.pixels_modified == 0

    def test_full_coverage_detection(self):
        rng = np.random.default_rng(5)
        image = make_image(32, rng)
        det = Detection(0, BoundingBox(0.5, 0.5, 1.0, 1.0), 0.9)
        _, report = anonymize_detections(image, [det])
        assert report.pixels_modified == 32 * 32

    def test_overlapping_boxes_order_independent(self):
        rng = np.random.default_rng(6)
        image = make_image(40, rng)
        d1 = Detection(0, BoundingBox(0.4, 0.4, 0.4, 0.4), 0.9)
        d2 = Detection(1, BoundingBox(0.55, 0.55, 0.4, 0.4), 0.8)
        out_a, _ = anonymize_detections(image, [d1, d2])
        out_b, _ = anonymize_detections(image, [d2, d1])
        assert out_a.pixels.tobytes() == out_b.pixels.tobytes()

    def test_oracle_detections_on_generated_sample(self):
        sample = next(
            s for s in generate_dataset(40, 64, 2, seed=6) if len(s.annotations) == 2
        )
        dets = [Detection(a.class_id, a.box, 1.0) for a in sample.annotations]
        out, report = anonymize_detections(sample.image, dets)
        assert len(report.blurred_boxes) == 2
        mask = np.zeros((64, 64), dtype=bool)
        for box, sigma in report.blurred_boxes:
            assert sigma >= 2.0
            x0, y0, x1, y1 = box_pixel_rect(box, sample.image)
            mask[y0 : y1 + 1, x0 : x1 + 1] = True
        inside_delta = np.abs(
            out.pixels[mask].astype(int) - sample.image.pixels[mask].astype(int)
        )
        assert inside_delta.mean() > 0.0
        assert np.array_equal(out.pixels[~mask], sample.image.pixels[~mask])

    def test_model_backed_anonymization(self, tiny_mc):
        # biased-off model: no detections, image unchanged
        params = np.zeros(param_count(tiny_mc))
        _, _, _, b2 = unpack_params(params, tiny_mc)
        b2[0 :: tiny_mc.cell_fields] = -30.0
        rng = np.random.default_rng(7)
        image = make_image(16, rng)
        out, report = anonymize_image(params, image, tiny_mc)
        assert out.pixels.tobytes() == image.pixels.tobytes()
        assert report.pixels_modified == 0

    def test_pad_box_grows_and_clips(self):
        box = BoundingBox(0.3, 0.5, 0.2, 0.2)
        padded = pad_box(box, 0.10)
        assert padded.w == pytest.approx(0.24) and padded.h == pytest.approx(0.24)
        edge = pad_box(BoundingBox(0.08, 0.5, 0.2, 0.2), 0.10)
        x0, _, x1, _ = edge.corners()
        assert x0 >= 0.0 and x1 <= 1.0

    def test_outline_regions(self):
        rng = np.random.default_rng(8)
        image = make_image(32, rng)
        box = BoundingBox(0.5, 0.5, 0.4, 0.4)
        outlined = outline_regions(image, [box])
        x0, y0, x1, y1 = box_pixel_rect(box, image)
        assert np.all(outlined.pixels[y0, x0 : x1 + 1, 0] == 255)
        assert np.all(outlined.pixels[y0 : y1 + 1, x1, 0] == 255)
        inner = outlined.pixels[y0 + 1 : y1, x0 + 1 : x1, 0]
        assert np.array_equal(inner, image.pixels[y0 + 1 : y1, x0 + 1 : x1, 0])
