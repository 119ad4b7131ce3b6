"""Directory tree -> frozen ViT class-token embeddings -> EUDF file."""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch

from . import eudf
from .backbone import EMBED_DIM, load_frozen
from .errors import ExtractError
from .images import decode, enumerate_files, list_classes

log = logging.getLogger("extractor")


@dataclass(frozen=True)
class ExtractSpec:
    image_root: str
    output_path: str
    backbone_size: str = "base"
    batch_size: int = 8
    device: str = "cpu"
    weights: str = "pretrained"
    seed: int = 0

    def validate(self) -> None:
        if self.backbone_size not in EMBED_DIM:
            raise ExtractError(
                f"backbone_size must be one of {sorted(EMBED_DIM)}, "
                f"got '{self.backbone_size}'"
            )
        if self.batch_size < 1:
            raise ExtractError(
                f"batch_size must be >= 1, got {self.batch_size}"
            )


def extract(spec: ExtractSpec) -> dict:
    """Embed every decodable image under the root; returns the manifest.

    Rows appear in enumeration order (classes sorted, files sorted within
    each class) regardless of batching. Undecodable files are skipped with
    a warning and a manifest entry. The sidecar manifest is written next
    to the output as <output>.manifest.json.
    """
    spec.validate()
    classes = list_classes(spec.image_root)
    files = enumerate_files(spec.image_root, classes)

    tensors = []
    rows = []
    skipped = []
    for relpath, label in files:
        arr = decode(os.path.join(spec.image_root, relpath))
        if arr is None:
            log.warning("skipping undecodable file %s", relpath)
            skipped.append({"file": relpath, "reason": "undecodable"})
            continue
        rows.append({"row": len(tensors), "file": relpath, "label": label})
        tensors.append(arr)
    if not tensors:
        raise ExtractError(
            f"no decodable images under '{spec.image_root}'"
        )

    model, checkpoint_id = load_frozen(spec.backbone_size, spec.weights,
                                       spec.seed, spec.device)
    chunks = []
    with torch.no_grad():
        for start in range(0, len(tensors), spec.batch_size):
            batch = torch.from_numpy(
                np.stack(tensors[start:start + spec.batch_size])
            ).to(spec.device)
            out = model(pixel_values=batch)
            # class token is the single-vector image summary
            chunks.append(out.last_hidden_state[:, 0, :].cpu().numpy())
    features = np.concatenate(chunks, axis=0).astype(np.float32)
    labels = np.array([r["label"] for r in rows], dtype=np.uint32)

    tag = os.path.basename(os.path.normpath(spec.image_root))
    eudf.write(spec.output_path, features, labels,
               num_classes=len(classes), tag=tag)

    manifest = {
        "checkpoint": checkpoint_id,
        "backbone_size": spec.backbone_size,
        "embed_dim": EMBED_DIM[spec.backbone_size],
        "output": str(spec.output_path),
        "classes": classes,
        "rows": rows,
        "skipped": skipped,
    }
    manifest_path = str(spec.output_path) + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    log.info("wrote %s (%d rows, %d skipped) and %s",
             spec.output_path, len(rows), len(skipped), manifest_path)
    return manifest
