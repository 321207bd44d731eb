"""Raster drawing of scenes: textured class backgrounds and object sprites (Pillow)."""
import numpy as np
from PIL import Image, ImageDraw

from feature_data.domain import CONSTRUCTION, GREENERY, ROAD, WATER

# Mean colour per background class (RGB in [0, 1])
CLASS_COLORS = {
    GREENERY: (0.30, 0.55, 0.25),
    ROAD: (0.45, 0.45, 0.48),
    CONSTRUCTION: (0.72, 0.58, 0.36),
    WATER: (0.18, 0.33, 0.62),
}
VEHICLE_COLOR = (215, 40, 40)
VEHICLE_ROOF_COLOR = (120, 20, 20)
HUMAN_COLOR = (245, 220, 60)


def background_texture(labels, amplitude, rng):
    """Class colours plus uniform noise in [-amplitude, amplitude]"""
    palette = np.array([CLASS_COLORS[c] for c in sorted(CLASS_COLORS)])
    texture = palette[labels]
    if amplitude > 0:
        texture = texture + rng.uniform(-amplitude, amplitude, size=texture.shape)
    return np.clip(texture, 0.0, 1.0)


def _draw_sprite(draw, object_class, x, y, w, h, fill, roof=None):
    corners = [x, y, x + w - 1, y + h - 1]
    if object_class == 'human':
        draw.ellipse(corners, fill=fill)
        return
    draw.rectangle(corners, fill=fill)
    if roof is not None and w >= 4 and h >= 4:
        draw.rectangle([x + 1, y + 1, x + w - 2, y + h // 2 - 1], fill=roof)


def draw_objects(background, sprites):
    """
    Paint ``sprites`` (object_class, x, y, w, h) in order over ``background``

    Returns the uint8 RGB frame and a footprint grid holding, per pixel, the
    1-based index of the topmost sprite (0 where no sprite is drawn).
    """
    height, width = background.shape[:2]
    image = Image.fromarray(np.clip(np.rint(background * 255.0), 0, 255).astype(np.uint8), mode='RGB')
    footprint = Image.new('L', (width, height), 0)
    draw, mark = ImageDraw.Draw(image), ImageDraw.Draw(footprint)
    for index, (object_class, x, y, w, h) in enumerate(sprites, start=1):
        if object_class == 'human':
            _draw_sprite(draw, object_class, x, y, w, h, HUMAN_COLOR)
        else:
            _draw_sprite(draw, object_class, x, y, w, h, VEHICLE_COLOR, VEHICLE_ROOF_COLOR)
        _draw_sprite(mark, object_class, x, y, w, h, index)
    return np.array(image), np.array(footprint)
