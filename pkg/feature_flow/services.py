import logging

import numpy as np
from matplotlib.colors import hsv_to_rgb
from scipy import ndimage

from core_main.exceptions import DimensionMismatchError, RecordValidationError
from feature_data.domain import FlowField, ImagePatch

logger = logging.getLogger(__name__)

LUMINANCE_WEIGHTS = np.array([0.299, 0.587, 0.114])

# Weighted 8-neighbour average; the centre pixel is excluded
NEIGHBOUR_AVERAGE = np.array([
    [1 / 12, 1 / 6, 1 / 12],
    [1 / 6, 0.0, 1 / 6],
    [1 / 12, 1 / 6, 1 / 12],
])


class FlowServices:

    @staticmethod
    def frame_to_gray(frame):
        """Luminance of an ImagePatch (2-D arrays pass through unchanged)"""
        if isinstance(frame, ImagePatch):
            return frame.values @ LUMINANCE_WEIGHTS
        gray = np.asarray(frame, dtype=np.float64)
        if gray.ndim == 3 and gray.shape[2] == 3:
            return gray @ LUMINANCE_WEIGHTS
        if gray.ndim != 2:
            raise DimensionMismatchError(f"expected a grayscale grid, got shape {gray.shape}")
        return gray

    @staticmethod
    def compute_dense_flow(frame_a, frame_b, params):
        """
        Horn-Schunck flow from ``frame_a`` to ``frame_b``

        PHASE 1: Spatial gradients of the mean frame, temporal difference b - a
        PHASE 2: Jacobi fixed-point iterations on (u, v)
        """
        a = FlowServices.frame_to_gray(frame_a)
        b = FlowServices.frame_to_gray(frame_b)
        if a.shape != b.shape:
            raise DimensionMismatchError(f"frame shapes differ: {a.shape} vs {b.shape}")

        # PHASE 1: Derivatives
        mean_frame = 0.5 * (a + b)
        if min(mean_frame.shape) >= 2:
            iy, ix = np.gradient(mean_frame)
        else:
            iy = ix = np.zeros_like(mean_frame)
        it = b - a
        denominator = params.smoothness + ix ** 2 + iy ** 2

        # PHASE 2: Iterate
        u = np.zeros_like(a)
        v = np.zeros_like(a)
        for _ in range(params.iterations):
            u_bar = ndimage.convolve(u, NEIGHBOUR_AVERAGE, mode='nearest')
            v_bar = ndimage.convolve(v, NEIGHBOUR_AVERAGE, mode='nearest')
            residual = (ix * u_bar + iy * v_bar + it) / denominator
            u = u_bar - ix * residual
            v = v_bar - iy * residual

        logger.debug("horn-schunck %dx%d: %d iterations, mean flow (%.4f, %.4f)",
                     a.shape[1], a.shape[0], params.iterations, u.mean(), v.mean())
        return FlowField(u, v)

    @staticmethod
    def flow_to_rgb(flow, cfg):
        """Render flow on the fixed HSV wheel; zero flow is black"""
        hue = np.mod(np.arctan2(flow.v, flow.u), 2 * np.pi) / (2 * np.pi)
        # arctan2 of -0.0 can land exactly on 1.0
        hue[hue >= 1.0] = 0.0
        value = np.minimum(np.hypot(flow.u, flow.v), cfg.v_max) / cfg.v_max
        hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
        return ImagePatch(np.clip(hsv_to_rgb(hsv), 0.0, 1.0))

    @staticmethod
    def crop_flow_patch(flow, bbox):
        clipped = bbox.clipped(flow.width, flow.height)
        if clipped is None:
            raise RecordValidationError(f"bounding box {bbox.as_list()} lies outside the {flow.width}x{flow.height} field")
        rows = slice(clipped.y, clipped.y2)
        cols = slice(clipped.x, clipped.x2)
        return FlowField(flow.u[rows, cols], flow.v[rows, cols])

    @staticmethod
    def flow_rgb_patch(flow, bbox, cfg):
        return FlowServices.flow_to_rgb(FlowServices.crop_flow_patch(flow, bbox), cfg)

    @staticmethod
    def flow_for_frame(dataset, video_id, frame_index, flow_cfg):
        """Flow of frame t from the configured source (computed, ingested or ground truth)"""
        if flow_cfg.source != 'computed':
            return dataset.stored_flow(video_id, frame_index, flow_cfg.source)
        video = dataset.video(video_id)
        first, second = dataset.frame_pair(frame_index, video.frame_count)
        return FlowServices.compute_dense_flow(
            dataset.frame(video_id, first), dataset.frame(video_id, second), flow_cfg.solver
        )
