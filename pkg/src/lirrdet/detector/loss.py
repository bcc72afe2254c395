"""Detection training loss for one image.

Cross entropy over sampled anchors plus smooth L1 over positive anchors'
offsets, divided by the positive count (floored at 1). Negatives are
hard-mined: the 3:1 highest background cross entropy among negatives,
with the ratio applied to max(num_positive, 1).
"""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, default_dtype, gather_rows, smooth_l1, softmax_cross_entropy
from .matching import NEGATIVE, MatchResult


def _background_ce(logits: np.ndarray) -> np.ndarray:
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    return lse - logits[:, 0]


def detection_loss_terms(cls_logits: Tensor, box_offsets: Tensor, match: MatchResult,
                         neg_ratio: int = 3):
    """Unnormalized (classification_sum, localization_sum | None, num_positive)."""
    pos_idx = np.flatnonzero(match.gt_index >= 0)
    neg_idx = np.flatnonzero(match.gt_index == NEGATIVE)
    npos = len(pos_idx)

    take = min(len(neg_idx), neg_ratio * max(npos, 1))
    if take:
        scores = _background_ce(cls_logits.data[neg_idx])
        order = np.argsort(-scores, kind="stable")
        neg_sampled = neg_idx[order[:take]]
    else:
        neg_sampled = neg_idx[:0]

    sampled = np.concatenate([pos_idx, neg_sampled])
    if sampled.size == 0:
        return Tensor(np.zeros((), dtype=default_dtype())), None, 0
    labels = np.concatenate([match.class_targets[pos_idx],
                             np.zeros(len(neg_sampled), dtype=np.int64)])
    cls_loss = softmax_cross_entropy(gather_rows(cls_logits, sampled), labels, reduction="sum")
    loc_loss = None
    if npos:
        loc_loss = smooth_l1(gather_rows(box_offsets, pos_idx),
                             match.box_targets[pos_idx], reduction="sum")
    return cls_loss, loc_loss, npos


def detection_loss(cls_logits: Tensor, box_offsets: Tensor, match: MatchResult,
                   neg_ratio: int = 3) -> Tensor:
    cls_loss, loc_loss, npos = detection_loss_terms(cls_logits, box_offsets, match, neg_ratio)
    total = cls_loss if loc_loss is None else cls_loss + loc_loss
    return total * (1.0 / max(npos, 1))
