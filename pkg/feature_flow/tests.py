import numpy as np
from django.test import SimpleTestCase

from core_main.exceptions import ConfigError, DimensionMismatchError, RecordValidationError
from core_main.validation import build_from
from feature_data.domain import BoundingBox, FlowField, ImagePatch
from feature_flow.domain import FlowColorConfig, HornSchunckParams
from feature_flow.serializers import FlowConfigSerializer
from feature_flow.services import FlowServices


def textured(size=32, period=16):
    y, x = np.mgrid[0:size, 0:size]
    return 0.5 + 0.25 * np.sin(2 * np.pi * x / period) + 0.25 * np.sin(2 * np.pi * y / period)


class DenseFlowTests(SimpleTestCase):

    params = HornSchunckParams(smoothness=0.1, iterations=200)

    def test_static_frames_give_zero_flow(self):
        frame = textured()
        flow = FlowServices.compute_dense_flow(frame, frame, self.params)
        self.assertEqual(np.abs(flow.u).max(), 0.0)
        self.assertEqual(np.abs(flow.v).max(), 0.0)

    def test_textureless_frames_give_zero_flow(self):
        flow = FlowServices.compute_dense_flow(np.full((16, 16), 0.3), np.full((16, 16), 0.3), self.params)
        self.assertEqual(np.abs(flow.u).max(), 0.0)

    def test_known_shift(self):
        frame = textured()
        shifted = np.roll(frame, 1, axis=1)
        flow = FlowServices.compute_dense_flow(frame, shifted, self.params)
        interior = (slice(4, -4), slice(4, -4))
        self.assertTrue(0.8 <= flow.u[interior].mean() <= 1.2, flow.u[interior].mean())
        self.assertTrue(-0.1 <= flow.v[interior].mean() <= 0.1, flow.v[interior].mean())

    def test_reversed_order_negates_flow(self):
        frame = textured()
        shifted = np.roll(frame, 1, axis=1)
        forward = FlowServices.compute_dense_flow(frame, shifted, self.params)
        backward = FlowServices.compute_dense_flow(shifted, frame, self.params)
        np.testing.assert_allclose(backward.u, -forward.u, atol=1e-12)

    def test_image_patch_input_uses_luminance(self):
        gray = textured(8)
        patch = ImagePatch(np.repeat(gray[..., None], 3, axis=2))
        np.testing.assert_allclose(FlowServices.frame_to_gray(patch), gray, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            FlowServices.compute_dense_flow(np.zeros((4, 4)), np.zeros((4, 5)), self.params)


class FlowColorTests(SimpleTestCase):

    cfg = FlowColorConfig(v_max=4.0)

    def render(self, u, v):
        return FlowServices.flow_to_rgb(FlowField([[u]], [[v]]), self.cfg).values[0, 0]

    def test_zero_flow_is_black(self):
        np.testing.assert_array_equal(self.render(0.0, 0.0), [0.0, 0.0, 0.0])

    def test_rightward_flow_at_cap_is_red(self):
        np.testing.assert_allclose(self.render(4.0, 0.0), [1.0, 0.0, 0.0], atol=1e-12)

    def test_magnitude_is_capped(self):
        np.testing.assert_array_equal(self.render(12.0, 0.0), self.render(4.0, 0.0))

    def test_value_non_decreasing_with_magnitude(self):
        magnitudes = np.linspace(0, 8, 33)
        angle = 0.7
        flow = FlowField([magnitudes * np.cos(angle)], [magnitudes * np.sin(angle)])
        values = FlowServices.flow_to_rgb(flow, self.cfg).values[0].max(axis=1)
        self.assertTrue(np.all(np.diff(values) >= -1e-12))
        self.assertTrue((values >= 0).all() and (values <= 1).all())

    def test_invalid_cap(self):
        with self.assertRaises(ConfigError):
            FlowColorConfig(v_max=0.0)


class CropTests(SimpleTestCase):

    def setUp(self):
        grid = np.arange(50, dtype=float).reshape(5, 10)
        self.flow = FlowField(grid, -grid)

    def test_inside(self):
        patch = FlowServices.crop_flow_patch(self.flow, BoundingBox(2, 1, 3, 2))
        np.testing.assert_array_equal(patch.u, [[12, 13, 14], [22, 23, 24]])

    def test_clipped_at_right_edge(self):
        patch = FlowServices.crop_flow_patch(self.flow, BoundingBox(8, 0, 5, 2))
        self.assertEqual(patch.width, 2)

    def test_outside(self):
        with self.assertRaises(RecordValidationError):
            FlowServices.crop_flow_patch(self.flow, BoundingBox(20, 20, 2, 2))


class FlowConfigTests(SimpleTestCase):

    def test_defaults(self):
        cfg = build_from(FlowConfigSerializer, {}, 'flow')
        self.assertEqual(cfg.source, 'computed')
        self.assertEqual(cfg.solver.iterations, 100)

    def test_rejects_bad_source(self):
        with self.assertRaises(ConfigError):
            build_from(FlowConfigSerializer, {'source': 'farneback'}, 'flow')
