"""Axis-aligned box arithmetic in normalized image coordinates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np


class Point2(NamedTuple):
    x: float
    y: float


class BBox(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def area(self) -> float:
        return max(0.0, self.x2 - self.x1) * max(0.0, self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


@dataclass
class Proposal:
    box: BBox
    confidence: float
    feature: np.ndarray


def iou(a: BBox, b: BBox) -> float:
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (N, 4) and (M, 4) arrays."""
    a = np.asarray(boxes_a, dtype=float).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=float).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def center(b: BBox) -> Point2:
    return Point2((b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0)


def nms(dets: Sequence[tuple[BBox, float]], iou_threshold: float) -> list[tuple[BBox, float]]:
    """Greedy NMS. Ties in score go to the lower input index."""
    return [dets[i] for i in nms_indices([d[0] for d in dets], [d[1] for d in dets], iou_threshold)]


def nms_indices(boxes, scores, iou_threshold: float) -> list[int]:
    n = len(scores)
    if n == 0:
        return []
    scores = np.asarray(scores, dtype=float)
    # stable sort on -score keeps lower index first among ties
    order = np.argsort(-scores, kind="stable")
    ious = iou_matrix(np.asarray(boxes, dtype=float), np.asarray(boxes, dtype=float))
    alive = np.ones(n, dtype=bool)
    keep = []
    for i in order:
        if not alive[i]:
            continue
        keep.append(int(i))
        alive &= ~(ious[i] > iou_threshold)
    return keep


def filter_proposals(
    props: Sequence[Proposal],
    person: Optional[BBox],
    theta_h: float,
    n_r: int,
) -> list[Proposal]:
    """Drop proposals overlapping the person by more than ``theta_h``, keep the top ``n_r``."""
    return [props[i] for i in filter_proposal_indices(props, person, theta_h, n_r)]


def filter_proposal_indices(props, person, theta_h, n_r) -> list[int]:
    if n_r < 1:
        raise ValueError("n_r must be >= 1")
    idx = [i for i, p in enumerate(props) if person is None or iou(p.box, person) <= theta_h]
    idx.sort(key=lambda i: -props[i].confidence)
    return idx[:n_r]


def box_from_points(points: np.ndarray, dilate: float = 0.0) -> BBox:
    """Tight box around ``points`` (N, 2), grown by ``dilate`` of its size on each axis."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    pad = (hi - lo) * dilate / 2.0
    lo, hi = lo - pad, hi + pad
    return BBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))
