"""Standalone EUDF writer.

The training engine consumes feature files in this layout; the format is
the interface between the two tools, so the writer is implemented against
the byte spec rather than imported:

    magic "EUDF" | version u16 | flags u16 (bit0 = labels present)
    | n u64 | d u64 | num_classes u32 | tag_len u16 | tag UTF-8
    | features f32 little-endian row-major | labels u32 little-endian
"""

import struct

import numpy as np

from .errors import ExtractError

MAGIC = b"EUDF"
VERSION = 1
FLAG_LABELS = 1
_HEADER = struct.Struct("<4sHHQQIH")


def encode(features: np.ndarray, labels: np.ndarray, num_classes: int,
           tag: str) -> bytes:
    feats = np.ascontiguousarray(features, dtype="<f4")
    if feats.ndim != 2:
        raise ExtractError(f"features must be 2-D, got ndim={feats.ndim}")
    if not np.all(np.isfinite(feats)):
        raise ExtractError("features contain non-finite entries")
    lab = np.ascontiguousarray(labels, dtype="<u4")
    if lab.shape != (feats.shape[0],):
        raise ExtractError(
            f"labels shape {lab.shape} does not match {feats.shape[0]} rows"
        )
    if num_classes < 1 or int(lab.max(initial=0)) >= num_classes:
        raise ExtractError(
            f"labels must lie in [0, {num_classes})"
        )
    tag_bytes = tag.encode("utf-8")
    if len(tag_bytes) > 0xFFFF:
        raise ExtractError("tag longer than 65535 UTF-8 bytes")
    header = _HEADER.pack(MAGIC, VERSION, FLAG_LABELS, feats.shape[0],
                          feats.shape[1], num_classes, len(tag_bytes))
    return header + tag_bytes + feats.tobytes(order="C") + lab.tobytes()


def write(path, features: np.ndarray, labels: np.ndarray,
          num_classes: int, tag: str) -> None:
    payload = encode(features, labels, num_classes, tag)
    with open(path, "wb") as fh:
        fh.write(payload)
