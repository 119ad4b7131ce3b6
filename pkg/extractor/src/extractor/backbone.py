"""Frozen self-supervised ViT encoders.

Three weight sources: a hub checkpoint ('pretrained'), a local checkpoint
directory ('local:<path>'), or deterministic random initialization
('seeded-init') for hermetic testing where no weights can be downloaded.
The weights are frozen in every mode; only inference runs.
"""

import torch
from transformers import Dinov2Config, Dinov2Model

from .errors import ExtractError

EMBED_DIM = {"base": 768, "large": 1024}

_HUB_IDS = {"base": "facebook/dinov2-base", "large": "facebook/dinov2-large"}

_CONFIGS = {
    "base": dict(hidden_size=768, num_hidden_layers=12,
                 num_attention_heads=12, intermediate_size=3072),
    "large": dict(hidden_size=1024, num_hidden_layers=24,
                  num_attention_heads=16, intermediate_size=4096),
}


def load_frozen(backbone_size: str, weights: str, seed: int,
                device: str) -> tuple:
    """Return (model in eval mode with grads disabled, checkpoint id)."""
    if backbone_size not in EMBED_DIM:
        raise ExtractError(
            f"backbone_size must be one of {sorted(EMBED_DIM)}, "
            f"got '{backbone_size}'"
        )
    if weights == "seeded-init":
        torch.manual_seed(seed)
        model = Dinov2Model(Dinov2Config(**_CONFIGS[backbone_size]))
        checkpoint_id = f"seeded-init:{backbone_size}:seed={seed}"
    elif weights == "pretrained":
        checkpoint_id = _HUB_IDS[backbone_size]
        model = Dinov2Model.from_pretrained(checkpoint_id)
    elif weights.startswith("local:"):
        checkpoint_id = weights[len("local:"):]
        model = Dinov2Model.from_pretrained(checkpoint_id)
    else:
        raise ExtractError(
            "weights must be 'pretrained', 'seeded-init', or 'local:<dir>', "
            f"got '{weights}'"
        )
    actual = model.config.hidden_size
    if actual != EMBED_DIM[backbone_size]:
        raise ExtractError(
            f"checkpoint hidden size {actual} does not match "
            f"{backbone_size} (= {EMBED_DIM[backbone_size]})"
        )
    model.eval()
    model.requires_grad_(False)
    return model.to(device), checkpoint_id
