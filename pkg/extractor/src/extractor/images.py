"""Image-folder enumeration and deterministic preprocessing.

Layout contract: one subdirectory per class under the root; the label of a
class is its index in lexicographic subdirectory order. Preprocessing is
fixed (RGB, 224x224 bicubic, ImageNet normalization) so repeated runs see
bit-identical tensors.
"""

import os
from typing import Optional

import numpy as np
from PIL import Image

from .errors import ExtractError

SIDE = 224
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def list_classes(image_root) -> list:
    if not os.path.isdir(image_root):
        raise ExtractError(f"image root '{image_root}' is not a directory")
    classes = sorted(
        name for name in os.listdir(image_root)
        if os.path.isdir(os.path.join(image_root, name))
    )
    if not classes:
        raise ExtractError(
            f"image root '{image_root}' has no class subdirectories"
        )
    return classes


def enumerate_files(image_root, classes) -> list:
    """(relative path, label) pairs in deterministic enumeration order."""
    out = []
    for label, cls in enumerate(classes):
        folder = os.path.join(image_root, cls)
        for name in sorted(os.listdir(folder)):
            full = os.path.join(folder, name)
            if os.path.isfile(full):
                out.append((os.path.join(cls, name), label))
    return out


def decode(path) -> Optional[np.ndarray]:
    """CHW float32 tensor for the backbone, or None if undecodable."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB").resize((SIDE, SIDE), Image.BICUBIC)
    except Exception:
        return None
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return np.ascontiguousarray(arr.transpose(2, 0, 1))
