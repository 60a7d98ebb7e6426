"""Per-class AP at IoU 0.5, mAP and CorLoc."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import BBox, iou


@dataclass(frozen=True)
class Detection:
    sample_id: str
    object: int
    box: BBox
    score: float
    frame: int = 0

    @property
    def image(self) -> tuple[str, int]:
        return (self.sample_id, self.frame)

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "frame": int(self.frame),
            "object": int(self.object),
            "box": [float(v) for v in self.box],
            "score": float(self.score),
        }

    @classmethod
    def from_json(cls, d: dict) -> "Detection":
        score = float(d["score"])
        if not math.isfinite(score):
            raise ValueError(f"detection for {d.get('sample_id')!r}: non-finite score")
        return cls(str(d["sample_id"]), int(d["object"]), BBox(*map(float, d["box"])), score, int(d.get("frame", 0)))


def dump_detections(dets: Iterable[Detection]) -> str:
    return json.dumps([d.to_json() for d in dets], sort_keys=True, separators=(",", ":"))


def load_detections(text: str) -> list[Detection]:
    return [Detection.from_json(d) for d in json.loads(text)]


def sort_detections(dets: Sequence[Detection]) -> list[Detection]:
    """Score descending; ties by sample id, then input order."""
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].sample_id, dets[i].frame, i))
    return [dets[i] for i in order]


def match_detections(
    dets: Sequence[Detection],
    gts: dict,
    iou_thresh: float = 0.5,
) -> list[bool]:
    """TP flags for ``dets`` of one class, already in ranking order.

    ``gts`` maps image key -> list of boxes of that class. Each detection
    takes its best-IoU still-unmatched ground truth in the same image.
    """
    used = {k: [False] * len(v) for k, v in gts.items()}
    flags = []
    for d in dets:
        boxes = gts.get(d.image, [])
        best, best_j = -1.0, -1
        for j, g in enumerate(boxes):
            if used[d.image][j]:
                continue
            o = iou(d.box, g)
            if o > best:
                best, best_j = o, j
        if best_j >= 0 and best >= iou_thresh:
            used[d.image][best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return flags


def average_precision(flags: Sequence[bool], n_gt: int) -> float:
    """All-point AP over a ranked TP/FP list with the monotone precision envelope."""
    if n_gt <= 0:
        return float("nan")
    tp = np.cumsum(np.asarray(flags, dtype=float))
    if len(tp) == 0:
        return 0.0
    fp = np.arange(1, len(tp) + 1) - tp
    recall = tp / n_gt
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall])
    mpre = np.concatenate([[0.0], precision])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _gts_by_class(gt_boxes: dict, n_objects: int) -> list[dict]:
    """gt_boxes: image key -> [(object, BBox)] reorganized per class."""
    out = [dict() for _ in range(n_objects)]
    for key, items in gt_boxes.items():
        for o, b in items:
            out[o].setdefault(key, []).append(b)
    return out


def per_class_ap(dets: Sequence[Detection], gt_boxes: dict, n_objects: int, iou_thresh: float = 0.5) -> list[float]:
    by_class = _gts_by_class(gt_boxes, n_objects)
    aps = []
    for o in range(n_objects):
        ranked = sort_detections([d for d in dets if d.object == o])
        n_gt = sum(len(v) for v in by_class[o].values())
        aps.append(average_precision(match_detections(ranked, by_class[o], iou_thresh), n_gt))
    return aps


def corloc(dets: Sequence[Detection], gt_boxes: dict, n_objects: int, iou_thresh: float = 0.5) -> list[float]:
    """Fraction of images containing a class whose top detection of it has IoU > thresh."""
    by_class = _gts_by_class(gt_boxes, n_objects)
    top: dict = {}
    for d in sort_detections(dets):
        top.setdefault((d.image, d.object), d)
    out = []
    for o in range(n_objects):
        images = by_class[o]
        if not images:
            out.append(float("nan"))
            continue
        hits = 0
        for key, boxes in images.items():
            d = top.get((key, o))
            if d is not None and any(iou(d.box, b) > iou_thresh for b in boxes):
                hits += 1
        out.append(hits / len(images))
    return out


def nanmean(values: Sequence[float]) -> float:
    vals = [v for v in values if not math.isnan(v)]
    return float(sum(vals) / len(vals)) if vals else float("nan")


def _clean(v: float) -> Optional[float]:
    return None if math.isnan(v) else float(v)


def report(
    dets: Sequence[Detection],
    gt_boxes: dict,
    object_names: Sequence[str],
    ap_iou: float = 0.5,
    corloc_iou: float = 0.5,
) -> dict:
    n = len(object_names)
    aps = per_class_ap(dets, gt_boxes, n, ap_iou)
    cls = corloc(dets, gt_boxes, n, corloc_iou)
    return {
        "per_class_ap": {name: _clean(v) for name, v in zip(object_names, aps)},
        "map": _clean(nanmean(aps)),
        "per_class_corloc": {name: _clean(v) for name, v in zip(object_names, cls)},
        "corloc_mean": _clean(nanmean(cls)),
    }
