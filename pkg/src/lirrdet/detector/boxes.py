"""Box geometry: IoU, anchor offset encoding, and greedy NMS.

Boxes are corner-format (x1, y1, x2, y2) in continuous pixel coordinates,
so width is x2 - x1 with no +1 convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VARIANCES = (0.1, 0.1, 0.2, 0.2)


@dataclass
class Detection:
    bbox: tuple  # (x1, y1, x2, y2)
    class_id: int
    score: float


def iou(a, b) -> float:
    ix1 = max(a[0], b[0])
    iy1 = max(a[1], b[1])
    ix2 = min(a[2], b[2])
    iy2 = min(a[3], b[3])
    inter = max(0.0, ix2 - ix1) * max(0.0, iy2 - iy1)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N,4) and (M,4) corner boxes, result (N,M)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ix1 = np.maximum(a[:, None, 0], b[None, :, 0])
    iy1 = np.maximum(a[:, None, 1], b[None, :, 1])
    ix2 = np.minimum(a[:, None, 2], b[None, :, 2])
    iy2 = np.minimum(a[:, None, 3], b[None, :, 3])
    inter = np.clip(ix2 - ix1, 0.0, None) * np.clip(iy2 - iy1, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def _to_center(boxes: np.ndarray):
    w = boxes[..., 2] - boxes[..., 0]
    h = boxes[..., 3] - boxes[..., 1]
    cx = boxes[..., 0] + 0.5 * w
    cy = boxes[..., 1] + 0.5 * h
    return cx, cy, w, h


def encode_boxes(gt: np.ndarray, anchors: np.ndarray,
                 variances=VARIANCES) -> np.ndarray:
    """Offsets (dx, dy, dw, dh) mapping anchors onto gt boxes.

    dx = (cx_g - cx_a) / (w_a * vx), dw = ln(w_g / w_a) / vw, and likewise
    for y/h. Raises ValueError on non-positive gt width or height.
    """
    gt = np.asarray(gt, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    gcx, gcy, gw, gh = _to_center(gt)
    acx, acy, aw, ah = _to_center(anchors)
    if np.any(gw <= 0) or np.any(gh <= 0):
        raise ValueError("encode_boxes: ground-truth box has non-positive width or height")
    vx, vy, vw, vh = variances
    return np.stack([
        (gcx - acx) / (aw * vx),
        (gcy - acy) / (ah * vy),
        np.log(gw / aw) / vw,
        np.log(gh / ah) / vh,
    ], axis=-1)


def decode_boxes(offsets: np.ndarray, anchors: np.ndarray,
                 variances=VARIANCES, image_size=None) -> np.ndarray:
    """Inverse of encode_boxes; clamps to [0, image_size] when given."""
    offsets = np.asarray(offsets, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    acx, acy, aw, ah = _to_center(anchors)
    vx, vy, vw, vh = variances
    cx = offsets[..., 0] * vx * aw + acx
    cy = offsets[..., 1] * vy * ah + acy
    w = np.exp(offsets[..., 2] * vw) * aw
    h = np.exp(offsets[..., 3] * vh) * ah
    boxes = np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=-1)
    if image_size is not None:
        np.clip(boxes, 0.0, float(image_size), out=boxes)
    return boxes


def nms(dets: list, iou_thr: float) -> list:
    """Greedy non-maximum suppression.

    Score-descending order (ties keep lower input index); a kept box
    suppresses later boxes of the same class with IoU > iou_thr.
    """
    if not 0.0 <= iou_thr <= 1.0:
        raise ValueError(f"nms: iou_thr {iou_thr} outside [0, 1]")
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    keep = []
    suppressed = [False] * len(dets)
    for pos, idx in enumerate(order):
        if suppressed[idx]:
            continue
        keep.append(dets[idx])
        for later in order[pos + 1:]:
            if suppressed[later]:
                continue
            if dets[later].class_id == dets[idx].class_id and \
                    iou(dets[later].bbox, dets[idx].bbox) > iou_thr:
                suppressed[later] = True
    return keep
