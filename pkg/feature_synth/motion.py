"""Agent motion kernels: waypoint patrol, placement on class regions, clamping."""
import numpy as np
from scipy import ndimage

from core_main.exceptions import ConfigError
from feature_data.domain import BACKGROUND_CLASSES


def rng_stream(seed, *key):
    """PCG64 generator for the named sub-stream ``key`` of ``seed``"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def polyline_point(waypoints, distance):
    """
    Point at arc length ``distance`` along the polyline walked back and forth
    """
    points = np.asarray(waypoints, dtype=np.float64)
    if len(points) == 1:
        return points[0].copy()
    steps = np.diff(points, axis=0)
    lengths = np.hypot(steps[:, 0], steps[:, 1])
    total = lengths.sum()
    if total == 0:
        return points[0].copy()
    d = np.mod(distance, 2 * total)
    if d > total:
        d = 2 * total - d
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    segment = int(np.clip(np.searchsorted(starts, d, side='right') - 1, 0, len(lengths) - 1))
    while lengths[segment] == 0 and segment > 0:
        segment -= 1
    if lengths[segment] == 0:
        return points[segment].copy()
    unit = steps[segment] / lengths[segment]
    return points[segment] + unit * (d - starts[segment])


def clamp_centre(centre, size, width, height):
    """Keep a box of ``size`` centred at ``centre`` inside the scene"""
    half_w, half_h = size[0] / 2, size[1] / 2
    return np.array([
        min(max(centre[0], half_w), width - half_w),
        min(max(centre[1], half_h), height - half_h),
    ])


def nearest_interior_pixel(labels, classes, point, margin):
    """
    Centre of the pixel of ``classes`` closest to ``point`` whose distance to
    any other class is greater than ``margin``; falls back to the deepest
    pixel when no pixel is that deep
    """
    inside = np.isin(labels, classes)
    if not inside.any():
        names = ', '.join(BACKGROUND_CLASSES[c] for c in classes)
        raise ConfigError(f"scene has no {names} pixels to place an agent on")
    depth = ndimage.distance_transform_edt(inside)
    candidates = depth > margin
    if not candidates.any():
        candidates = depth == depth.max()
    indices = ndimage.distance_transform_edt(~candidates, return_distances=False, return_indices=True)
    height, width = labels.shape
    x = min(max(int(np.floor(point[0])), 0), width - 1)
    y = min(max(int(np.floor(point[1])), 0), height - 1)
    return np.array([indices[1][y, x] + 0.5, indices[0][y, x] + 0.5])


def placement_margin(size):
    """Depth a box needs so that it and a thin band around it stay inside a region"""
    return float(np.hypot(*size)) / 2 + 2.0
