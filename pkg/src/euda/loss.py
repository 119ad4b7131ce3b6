"""Classification loss and the blended objective.

The total objective is lambda * CE + (1 - lambda) * MMD. This module owns
the CE term (batch-mean softmax cross-entropy, log-sum-exp stabilized) and
the combiner that scales the gradient seeds handed to the backward pass:
the classifier path carries only CE gradient, the bottleneck outputs carry
the alignment gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    ce: float
    mmd: float
    lam: float

    def __post_init__(self):
        if not (0.0 <= self.lam <= 1.0):
            raise ContractError("lambda must lie in [0, 1]")
        if abs(self.total - (self.lam * self.ce + (1.0 - self.lam) * self.mmd)) > 1e-12:
            raise ContractError("loss breakdown does not add up")


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Batch-mean CE and its logit gradient (softmax minus one-hot, over b)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ContractError("logits must be b x C")
    b, C = logits.shape
    if labels.shape != (b,):
        raise ContractError("labels must be a length-b vector")
    if not np.all(np.isfinite(logits)):
        raise ContractError("non-finite logits")
    if labels.min() < 0 or labels.max() >= C:
        raise ContractError("label outside [0, C)")
    labels = labels.astype(np.intp)

    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=1))
    log_probs = shifted - lse[:, None]
    ce = float(-np.mean(log_probs[np.arange(b), labels]))

    grad = np.exp(log_probs)
    grad[np.arange(b), labels] -= 1.0
    grad /= b
    return ce, grad


def sdal_combine(
    ce: float,
    grad_logits: np.ndarray,
    mmd: float,
    grad_Z_s: np.ndarray,
    grad_Z_t: np.ndarray,
    lam: float,
):
    """Blend the two losses and scale their gradient seeds.

    Returns (breakdown, lam * grad_logits, (1-lam) * grad_Z_s,
    (1-lam) * grad_Z_t). At lam=1 the alignment seeds vanish exactly; at
    lam=0 the CE seed does.
    """
    if not (0.0 <= lam <= 1.0):
        raise ContractError("lambda must lie in [0, 1]")
    total = lam * ce + (1.0 - lam) * mmd
    breakdown = LossBreakdown(total=total, ce=float(ce), mmd=float(mmd), lam=lam)
    return (
        breakdown,
        lam * np.asarray(grad_logits, dtype=np.float64),
        (1.0 - lam) * np.asarray(grad_Z_s, dtype=np.float64),
        (1.0 - lam) * np.asarray(grad_Z_t, dtype=np.float64),
    )
