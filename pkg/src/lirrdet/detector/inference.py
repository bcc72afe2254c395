"""Image to detections, and the JSON-lines detection dump."""

from __future__ import annotations

import json

import numpy as np

from ..autodiff import Tensor, default_dtype, no_grad
from .boxes import Detection, decode_boxes, nms


def forward_detect(model, image, score_thr: float = 0.05, nms_thr: float = 0.5,
                   max_dets: int = 100) -> list:
    """Run the always-on head over one image and return kept detections.

    Softmax per anchor, background dropped, score threshold, decode with
    clamping to the image, class-aware greedy NMS, then the top max_dets
    by score.
    """
    x = np.asarray(image, dtype=default_dtype())
    if x.ndim == 3:
        x = x[None]
    spec = model.spec
    if x.shape != (1, spec.in_channels, spec.image_size, spec.image_size):
        raise ValueError(
            f"forward_detect: image shape {x.shape[1:]} does not match configured "
            f"({spec.in_channels}, {spec.image_size}, {spec.image_size})")

    with no_grad():
        feats = model.features(Tensor(x))
        cls, loc = model.predict(feats, "invariant")

    z = cls.data[0].astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    boxes = decode_boxes(loc.data[0], model.anchors.boxes, image_size=spec.image_size)

    dets = []
    for k in range(1, spec.num_logits):
        for a in np.flatnonzero(probs[:, k] >= score_thr):
            dets.append(Detection(tuple(float(v) for v in boxes[a]), int(k),
                                  float(probs[a, k])))
    return nms(dets, nms_thr)[:max_dets]


def save_detections(path, records) -> None:
    """Write (image_id, Detection) pairs as JSON lines."""
    with open(path, "w") as f:
        for image_id, det in records:
            f.write(json.dumps({
                "image_id": int(image_id),
                "class_id": int(det.class_id),
                "score": float(det.score),
                "bbox": [float(v) for v in det.bbox],
            }) + "\n")


def load_detections(path) -> list:
    """Read a detection dump back as a list of dicts."""
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
