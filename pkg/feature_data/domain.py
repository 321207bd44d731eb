"""
Domain value types shared by every stage of the pipeline.

All types are immutable after construction: dataclasses are frozen and the
numpy arrays they hold are copied and marked read-only, so values can be
shared freely between threads and processes.
"""
from dataclasses import dataclass, field

import numpy as np

from core_main.exceptions import RecordValidationError

OBJECT_CLASSES = ('vehicle', 'human')

# Class-index convention of segmentation masks
BACKGROUND_CLASSES = ('greenery', 'road', 'construction', 'water')
GREENERY, ROAD, CONSTRUCTION, WATER = range(4)

# Descriptor layout: 0-3 contextual, 4-12 temporal, 13-21 appearance
STAT_NAMES = ('mean', 'variance', 'kurtosis', 'energy', 'skewness', 'entropy')
CONTEXT_COLUMNS = tuple(f'ctx_{name}' for name in BACKGROUND_CLASSES)
TEMPORAL_COLUMNS = ('tmp_err_r', 'tmp_err_g', 'tmp_err_b') + tuple(f'tmp_{name}' for name in STAT_NAMES)
APPEARANCE_COLUMNS = ('app_err_r', 'app_err_g', 'app_err_b') + tuple(f'app_{name}' for name in STAT_NAMES)
DESCRIPTOR_COLUMNS = CONTEXT_COLUMNS + TEMPORAL_COLUMNS + APPEARANCE_COLUMNS
DESCRIPTOR_SIZE = len(DESCRIPTOR_COLUMNS)


def frozen_array(values, dtype=np.float64):
    """Copy ``values`` into a read-only array"""
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box; ``x``/``y`` is the top-left corner"""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ('x', 'y', 'w', 'h'):
            value = getattr(self, name)
            if isinstance(value, (bool, np.bool_)) or not isinstance(value, (int, np.integer)):
                raise RecordValidationError(f"bounding box {name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.w < 1 or self.h < 1:
            raise RecordValidationError(f"bounding box extents must be >= 1, got w={self.w} h={self.h}")

    @property
    def x2(self):
        """Exclusive right edge"""
        return self.x + self.w

    @property
    def y2(self):
        """Exclusive bottom edge"""
        return self.y + self.h

    def intersects(self, width, height):
        return self.x < width and self.y < height and self.x2 > 0 and self.y2 > 0

    def clipped(self, width, height):
        """Intersection with the image rectangle, or None when empty"""
        if not self.intersects(width, height):
            return None
        x0, y0 = max(self.x, 0), max(self.y, 0)
        x1, y1 = min(self.x2, width), min(self.y2, height)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    def as_list(self):
        return [self.x, self.y, self.w, self.h]


@dataclass(frozen=True)
class DetectionRecord:
    video_id: str
    frame_index: int
    object_id: int
    object_class: str
    bbox: BoundingBox

    def __post_init__(self):
        if self.object_class not in OBJECT_CLASSES:
            raise RecordValidationError(f"unknown object class {self.object_class!r}")
        if self.frame_index < 0 or self.object_id < 0:
            raise RecordValidationError("frame index and object id must be non-negative")

    @property
    def key(self):
        return self.video_id, self.frame_index, self.object_id


@dataclass(frozen=True, eq=False)
class ClassMask:
    """Per-pixel background class indices (row-major, shape height x width)"""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.size == 0:
            raise RecordValidationError(f"class mask must be a non-empty 2-D grid, got shape {labels.shape}")
        if labels.min() < 0 or labels.max() >= len(BACKGROUND_CLASSES):
            raise RecordValidationError(
                f"class mask values must lie in 0..{len(BACKGROUND_CLASSES) - 1}, "
                f"found range {labels.min()}..{labels.max()}"
            )
        object.__setattr__(self, 'labels', frozen_array(labels, np.uint8))

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]


@dataclass(frozen=True, eq=False)
class FlowField:
    """Dense displacement field in pixels per frame"""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u, v = np.asarray(self.u, dtype=np.float64), np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape or u.size == 0:
            raise RecordValidationError(f"flow components must be equal non-empty 2-D grids, got {u.shape} and {v.shape}")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise RecordValidationError("flow field contains non-finite values")
        object.__setattr__(self, 'u', frozen_array(u))
        object.__setattr__(self, 'v', frozen_array(v))

    @property
    def width(self):
        return self.u.shape[1]

    @property
    def height(self):
        return self.u.shape[0]

    @classmethod
    def zeros(cls, width, height):
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass(frozen=True, eq=False)
class ImagePatch:
    """RGB raster with intensities normalized to [0, 1] (shape height x width x 3)"""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 3 or values.shape[0] == 0 or values.shape[1] == 0:
            raise RecordValidationError(f"image patch must have shape (h, w, 3), got {values.shape}")
        if not np.isfinite(values).all() or values.min() < 0.0 or values.max() > 1.0:
            raise RecordValidationError("image patch intensities must be finite and lie in [0, 1]")
        object.__setattr__(self, 'values', frozen_array(values))

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @classmethod
    def from_uint8(cls, pixels):
        return cls(np.asarray(pixels, dtype=np.float64) / 255.0)

    def to_uint8(self):
        return np.clip(np.rint(self.values * 255.0), 0, 255).astype(np.uint8)

    def crop(self, bbox):
        """Sub-patch under ``bbox`` clipped to the image; None when disjoint"""
        clipped = bbox.clipped(self.width, self.height)
        if clipped is None:
            return None
        return ImagePatch(self.values[clipped.y:clipped.y2, clipped.x:clipped.x2])


@dataclass(frozen=True)
class FrameAnnotation:
    frame_index: int
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise RecordValidationError(f"frame label must be 0 or 1, got {self.label!r}")


@dataclass(frozen=True, eq=False)
class FeatureDescriptor:
    """
    22-value object descriptor: contextual histogram (4), temporal features (9)
    and appearance features (9), in that order
    """

    contextual: np.ndarray
    temporal: np.ndarray
    appearance: np.ndarray
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        parts = {'contextual': 4, 'temporal': 9, 'appearance': 9}
        for name, size in parts.items():
            values = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if values.size != size:
                raise RecordValidationError(f"{name} component must have {size} entries, got {values.size}")
            if not np.isfinite(values).all():
                raise RecordValidationError(f"{name} component contains non-finite values")
            object.__setattr__(self, name, frozen_array(values))
        object.__setattr__(self, '_flat', frozen_array(np.concatenate([self.contextual, self.temporal, self.appearance])))

    def as_array(self):
        return self._flat

    def __len__(self):
        return DESCRIPTOR_SIZE
