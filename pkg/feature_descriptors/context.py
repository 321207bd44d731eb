"""
Context band around a bounding box and the class histogram over it.

The band is the box grown by ``width`` pixels on every side minus the box
shrunk by ``width`` pixels, both clipped to the image.
"""
from dataclasses import dataclass

import numpy as np

from core_main.exceptions import DimensionMismatchError, RecordValidationError
from feature_data.domain import BACKGROUND_CLASSES, BoundingBox


def dilate(bbox, width):
    return BoundingBox(bbox.x - width, bbox.y - width, bbox.w + 2 * width, bbox.h + 2 * width)


def erode(bbox, width):
    """Shrunken box, or None once it vanishes"""
    w, h = bbox.w - 2 * width, bbox.h - 2 * width
    if w < 1 or h < 1:
        return None
    return BoundingBox(bbox.x + width, bbox.y + width, w, h)


@dataclass(frozen=True)
class ContextRegion:
    """Pixels of ``outer`` not in ``inner``; both rectangles lie inside the image"""

    outer: BoundingBox
    inner: BoundingBox | None
    image_width: int
    image_height: int

    @property
    def pixel_count(self):
        inner = self.inner.w * self.inner.h if self.inner is not None else 0
        return self.outer.w * self.outer.h - inner

    def mask(self):
        grid = np.zeros((self.image_height, self.image_width), dtype=bool)
        grid[self.outer.y:self.outer.y2, self.outer.x:self.outer.x2] = True
        if self.inner is not None:
            grid[self.inner.y:self.inner.y2, self.inner.x:self.inner.x2] = False
        return grid

    def pixels(self):
        """(row, col) coordinates in row-major order"""
        return np.argwhere(self.mask())


def contextual_region(bbox, image_width, image_height, width=4):
    if not bbox.intersects(image_width, image_height):
        raise RecordValidationError(f"bounding box {bbox.as_list()} does not intersect the {image_width}x{image_height} image")
    outer = dilate(bbox, width).clipped(image_width, image_height)
    inner = erode(bbox, width)
    if inner is not None:
        inner = inner.clipped(image_width, image_height)
    return ContextRegion(outer, inner, image_width, image_height)


def require_matching_mask(class_mask, frame):
    if (class_mask.width, class_mask.height) != (frame.width, frame.height):
        raise DimensionMismatchError(
            f"mask is {class_mask.width}x{class_mask.height} but the frame is {frame.width}x{frame.height}"
        )


def contextual_histogram(region, class_mask):
    """Fractions of greenery, road, construction and water pixels in ``region``"""
    if (class_mask.width, class_mask.height) != (region.image_width, region.image_height):
        raise DimensionMismatchError(
            f"mask is {class_mask.width}x{class_mask.height}, region expects {region.image_width}x{region.image_height}"
        )
    labels = class_mask.labels
    bins = len(BACKGROUND_CLASSES)
    outer = labels[region.outer.y:region.outer.y2, region.outer.x:region.outer.x2]
    counts = np.bincount(outer.reshape(-1), minlength=bins)
    if region.inner is not None:
        inner = labels[region.inner.y:region.inner.y2, region.inner.x:region.inner.x2]
        counts = counts - np.bincount(inner.reshape(-1), minlength=bins)
    total = counts.sum()
    if total == 0:
        raise RecordValidationError("context region is empty")
    return counts / total
