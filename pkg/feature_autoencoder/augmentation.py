"""Geometric augmentation of training patches: flips, rotations, translations and shear."""
import numpy as np
from scipy import ndimage

from feature_data.domain import ImagePatch


def _patch(values):
    return ImagePatch(np.clip(values, 0.0, 1.0))


def flip_horizontal(patch):
    return _patch(patch.values[:, ::-1])


def flip_vertical(patch):
    return _patch(patch.values[::-1])


def rotate_quarter_turns(patch, turns):
    return _patch(np.rot90(patch.values, k=turns, axes=(0, 1)))


def rotate_degrees(patch, degrees):
    """Rotation about the patch centre, same size, border pixels replicated"""
    rotated = ndimage.rotate(patch.values, degrees, axes=(1, 0), reshape=False, order=1, mode='nearest')
    return _patch(rotated)


def translate_patch(patch, dx, dy):
    """Integer shift by (dx, dy) with edge padding"""
    dx, dy = int(dx), int(dy)
    if dx == 0 and dy == 0:
        return patch
    pad_x, pad_y = abs(dx), abs(dy)
    padded = np.pad(patch.values, ((pad_y, pad_y), (pad_x, pad_x), (0, 0)), mode='edge')
    top = pad_y - dy
    left = pad_x - dx
    return _patch(padded[top:top + patch.height, left:left + patch.width])


def shear_patch(patch, factor):
    """Horizontal shear x' = x + factor * (y - cy) about the patch centre"""
    matrix = np.array([[1.0, 0.0], [-factor, 1.0]])
    centre = np.array([(patch.height - 1) / 2, (patch.width - 1) / 2])
    offset = centre - matrix @ centre
    channels = [
        ndimage.affine_transform(patch.values[..., c], matrix, offset=offset, order=1, mode='nearest')
        for c in range(3)
    ]
    return _patch(np.stack(channels, axis=-1))


def augment_patch(patch, seed, cfg):
    """
    The original patch followed by its transformed copies

    Random magnitudes (small angle, translation, shear sign) come from a
    generator seeded with ``seed`` so each call is reproducible.
    """
    rng = np.random.default_rng(seed)
    angle = rng.uniform(-cfg.max_rotation_degrees, cfg.max_rotation_degrees)
    dx, dy = rng.integers(-cfg.max_translation, cfg.max_translation + 1, size=2)
    shear = cfg.shear if rng.random() < 0.5 else -cfg.shear

    return [
        patch,
        flip_horizontal(patch),
        flip_vertical(patch),
        *(rotate_quarter_turns(patch, turns) for turns in (1, 2, 3)),
        rotate_degrees(patch, angle),
        translate_patch(patch, dx, dy),
        shear_patch(patch, shear),
    ]
