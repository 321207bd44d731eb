import math

import numpy as np
from django.test import SimpleTestCase

from core_main.exceptions import DimensionMismatchError, RecordValidationError
from feature_autoencoder.domain import AutoencoderSpec
from feature_autoencoder.services import AutoencoderServices
from feature_data.domain import ROAD, BoundingBox, ClassMask, DetectionRecord, FlowField, ImagePatch
from feature_descriptors.services import DescriptorServices
from feature_flow.domain import FlowColorConfig


def loop_stats(values):
    """Scalar reference implementation"""
    values = [float(v) for v in np.asarray(values).reshape(-1)]
    n = len(values)
    mean = sum(values) / n
    m2 = sum((v - mean) ** 2 for v in values) / n
    m3 = sum((v - mean) ** 3 for v in values) / n
    m4 = sum((v - mean) ** 4 for v in values) / n
    energy = sum(v * v for v in values) / n
    counts = {}
    for v in values:
        b = min(int(v * 256), 255)
        counts[b] = counts.get(b, 0) + 1
    ent = 0.0
    for c in counts.values():
        p = c / n
        ent -= p * math.log2(p)
    if m2 == 0:
        return [mean, 0.0, 0.0, energy, 0.0, ent]
    return [mean, m2, m4 / m2 ** 2, energy, m3 / m2 ** 1.5, ent]


class FirstOrderStatsTests(SimpleTestCase):

    def test_constant_patch(self):
        stats = DescriptorServices.first_order_stats(np.full((4, 4), 0.5))
        np.testing.assert_array_equal(stats.as_array(), [0.5, 0.0, 0.0, 0.25, 0.0, 0.0])

    def test_two_point_distribution(self):
        stats = DescriptorServices.first_order_stats(np.array([[0.0, 1.0], [1.0, 0.0]]))
        np.testing.assert_allclose(stats.as_array(), [0.5, 0.25, 1.0, 0.5, 0.0, 1.0], atol=1e-15)

    def test_matches_scalar_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            shape = tuple(rng.integers(2, 9, size=2))
            patch = rng.random(shape) ** rng.uniform(0.5, 3.0)
            np.testing.assert_allclose(
                DescriptorServices.first_order_stats(patch).as_array(), loop_stats(patch), rtol=0, atol=1e-12
            )

    def test_invariant_under_shuffling(self):
        rng = np.random.default_rng(1)
        patch = rng.random((6, 6))
        shuffled = rng.permutation(patch.reshape(-1)).reshape(6, 6)
        np.testing.assert_allclose(
            DescriptorServices.first_order_stats(patch).as_array(),
            DescriptorServices.first_order_stats(shuffled).as_array(),
            atol=1e-12,
        )

    def test_invariants(self):
        stats = DescriptorServices.first_order_stats(np.random.default_rng(2).random((5, 5)))
        self.assertGreaterEqual(stats.variance, 0)
        self.assertGreaterEqual(stats.energy, 0)
        self.assertGreaterEqual(stats.entropy, 0)

    def test_empty_patch(self):
        with self.assertRaises(RecordValidationError):
            DescriptorServices.first_order_stats(np.zeros((0, 3)))


class ReconstructionStatsTests(SimpleTestCase):

    def test_grey_channels_match_single_channel(self):
        grey = np.random.default_rng(3).random((5, 5))
        rgb = np.repeat(grey[..., None], 3, axis=2)
        np.testing.assert_allclose(
            DescriptorServices.stats_of_reconstruction(ImagePatch(rgb)).as_array(),
            DescriptorServices.first_order_stats(grey).as_array(),
            atol=1e-12,
        )

    def test_pure_red(self):
        red = np.zeros((4, 4, 3))
        red[..., 0] = 1.0
        stats = DescriptorServices.stats_of_reconstruction(ImagePatch(red))
        self.assertAlmostEqual(stats.mean, 0.299, places=12)
        self.assertEqual(stats.variance, 0.0)

    def test_channel_order_matters(self):
        values = np.random.default_rng(4).random((4, 4, 3))
        a = DescriptorServices.stats_of_reconstruction(ImagePatch(values)).as_array()
        b = DescriptorServices.stats_of_reconstruction(ImagePatch(values[..., ::-1])).as_array()
        self.assertFalse(np.allclose(a, b))


class ContextTests(SimpleTestCase):

    def enumerate_region(self, bbox, width, height, ring=4):
        """Set-arithmetic oracle by enumeration"""
        pixels = set()
        for y in range(bbox.y - ring, bbox.y2 + ring):
            for x in range(bbox.x - ring, bbox.x2 + ring):
                inside_eroded = (bbox.x + ring <= x < bbox.x2 - ring) and (bbox.y + ring <= y < bbox.y2 - ring)
                if 0 <= x < width and 0 <= y < height and not inside_eroded:
                    pixels.add((y, x))
        return pixels

    def test_ten_by_ten_box(self):
        region = DescriptorServices.contextual_region(BoundingBox(45, 45, 10, 10), 100, 100)
        self.assertEqual(region.pixel_count, 320)
        self.assertEqual(set(map(tuple, region.pixels())), self.enumerate_region(BoundingBox(45, 45, 10, 10), 100, 100))

    def test_corner_box_is_clipped(self):
        box = BoundingBox(0, 0, 6, 6)
        region = DescriptorServices.contextual_region(box, 50, 40)
        pixels = region.pixels()
        self.assertTrue((pixels >= 0).all())
        self.assertEqual(set(map(tuple, pixels)), self.enumerate_region(box, 50, 40))

    def test_small_box_gives_full_dilation(self):
        region = DescriptorServices.contextual_region(BoundingBox(20, 20, 7, 7), 64, 64)
        self.assertIsNone(region.inner)
        self.assertEqual(region.pixel_count, 15 * 15)

    def test_box_outside_image(self):
        with self.assertRaises(RecordValidationError):
            DescriptorServices.contextual_region(BoundingBox(70, 70, 5, 5), 64, 64)

    def test_road_only(self):
        mask = ClassMask(np.full((40, 40), ROAD))
        region = DescriptorServices.contextual_region(BoundingBox(15, 15, 10, 10), 40, 40)
        np.testing.assert_array_equal(DescriptorServices.contextual_histogram(region, mask), [0, 1, 0, 0])

    def test_half_road_half_greenery(self):
        labels = np.zeros((40, 40), dtype=np.uint8)
        labels[:, 20:] = ROAD
        region = DescriptorServices.contextual_region(BoundingBox(15, 15, 10, 10), 40, 40)
        np.testing.assert_allclose(DescriptorServices.contextual_histogram(region, ClassMask(labels)), [0.5, 0.5, 0, 0])

    def test_histogram_matches_pixel_count_and_is_equivariant(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            labels = rng.integers(0, 4, size=(30, 30))
            box = BoundingBox(*rng.integers(-5, 25, size=2), *rng.integers(1, 15, size=2))
            if not box.intersects(30, 30):
                continue
            region = DescriptorServices.contextual_region(box, 30, 30)
            histogram = DescriptorServices.contextual_histogram(region, ClassMask(labels))
            expected = np.bincount(labels[region.mask()], minlength=4) / region.pixel_count
            np.testing.assert_allclose(histogram, expected, atol=1e-15)
            self.assertAlmostEqual(histogram.sum(), 1.0, places=12)

            permutation = rng.permutation(4)
            relabelled = DescriptorServices.contextual_histogram(region, ClassMask(permutation[labels]))
            np.testing.assert_allclose(relabelled[permutation], histogram, atol=1e-15)


class AssemblyTests(SimpleTestCase):

    def test_length(self):
        descriptor = DescriptorServices.assemble_descriptor(np.ones(4) / 4, np.ones(9), np.zeros(9))
        self.assertEqual(len(descriptor.as_array()), 22)

    def test_zero_vectors(self):
        descriptor = DescriptorServices.assemble_descriptor(np.zeros(4), np.zeros(9), np.zeros(9))
        np.testing.assert_array_equal(descriptor.as_array(), np.zeros(22))

    def test_nan_rejected(self):
        f_t = np.zeros(9)
        f_t[0] = np.nan
        with self.assertRaises(RecordValidationError):
            DescriptorServices.assemble_descriptor(np.zeros(4), f_t, np.zeros(9))


class ObjectDescriptorTests(SimpleTestCase):

    def setUp(self):
        spec = AutoencoderSpec(input_size=16, encoder_widths=(4, 4, 4, 4), decoder_widths=(4, 4, 4))
        self.ae_app = AutoencoderServices.ae_init(spec, 0)
        self.ae_temp = AutoencoderServices.ae_init(spec, 1)
        self.frame = ImagePatch(np.random.default_rng(6).random((48, 64, 3)))
        self.mask = ClassMask(np.full((48, 64), ROAD))
        self.flow = FlowField.zeros(64, 48)
        self.color = FlowColorConfig(v_max=4.0)

    def detection(self, bbox):
        return DetectionRecord('v', 3, 1, 'vehicle', bbox)

    def test_static_object_on_road(self):
        descriptor = DescriptorServices.extract_object_descriptor(
            self.detection(BoundingBox(20, 20, 12, 8)), self.frame, self.mask, self.flow,
            self.ae_app, self.ae_temp, self.color,
        )
        np.testing.assert_array_equal(descriptor.contextual, [0, 1, 0, 0])
        self.assertTrue(np.isfinite(descriptor.as_array()).all())

    def test_edge_box_still_produces_descriptor(self):
        descriptor = DescriptorServices.extract_object_descriptor(
            self.detection(BoundingBox(58, 40, 12, 12)), self.frame, self.mask, self.flow,
            self.ae_app, self.ae_temp, self.color,
        )
        self.assertEqual(len(descriptor.as_array()), 22)

    def test_recomputation_is_identical(self):
        args = (self.detection(BoundingBox(5, 5, 9, 9)), self.frame, self.mask, self.flow,
                self.ae_app, self.ae_temp, self.color)
        first = DescriptorServices.extract_object_descriptor(*args).as_array()
        second = DescriptorServices.extract_object_descriptor(*args).as_array()
        np.testing.assert_array_equal(first, second)

    def test_mask_smaller_than_frame(self):
        frame = ImagePatch(np.random.default_rng(7).random((32, 32, 3)))
        with self.assertRaises(DimensionMismatchError):
            DescriptorServices.extract_object_descriptor(
                self.detection(BoundingBox(12, 12, 10, 10)), frame, ClassMask(np.full((16, 16), ROAD)),
                FlowField.zeros(32, 32), self.ae_app, self.ae_temp, self.color,
            )
