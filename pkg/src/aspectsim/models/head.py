"""Multi-label classification head: one sigmoid per class, binary cross-entropy
summed over classes and averaged over the batch."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import torch
import torch.nn.functional as F


def multilabel_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    per_class = F.binary_cross_entropy_with_logits(logits, targets.to(logits.dtype), reduction="none")
    return per_class.sum(dim=1).mean()


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def head_loss(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray) -> float:
    """Loss of a linear head ``z = X W^T + b`` on features ``X`` and 0/1 targets ``Y``."""
    z = X @ W.T + b
    ll = Y * _log_sigmoid(z) + (1 - Y) * _log_sigmoid(-z)
    return float(-ll.sum(axis=1).mean())


def head_loss_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray):
    """Closed-form gradient of :func:`head_loss` with respect to ``(W, b)``.

    dL/dz = (sigmoid(z) - y) / n for every (sample, class) logit.
    """
    z = X @ W.T + b
    g = (1.0 / (1.0 + np.exp(-z)) - Y) / X.shape[0]
    return g.T @ X, g.sum(axis=0)


def threshold_labels(probs: Sequence[float], classes: Sequence[str], threshold: float) -> frozenset[str]:
    """Every class whose probability reaches ``threshold``; may be empty."""
    return frozenset(c for c, p in zip(classes, probs) if p >= threshold)
