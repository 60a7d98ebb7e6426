"""Frame sampling, tubelet linking and temporal score pooling for video clips."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import iou_matrix


@dataclass(frozen=True)
class Tubelet:
    indices: tuple[int, ...]  # one proposal index per sampled frame
    score: float


def sample_frames(clip_len: int, n: int) -> list[int]:
    """Uniformly spaced indices floor(i*T/n); short clips repeat frames."""
    if clip_len < 1 or n < 1:
        raise ValueError("clip_len and n must be >= 1")
    return [i * clip_len // n for i in range(n)]


def best_path(
    confs: Sequence[np.ndarray],
    pair_iou: Sequence[np.ndarray],
    alive: Sequence[np.ndarray],
    lam: float,
) -> tuple[list[int], float]:
    """Viterbi over frames maximizing sum(conf) + lam * sum(iou of consecutive boxes).

    ``pair_iou[t]`` is the (n_t, n_{t+1}) IoU matrix, ``alive[t]`` masks usable
    proposals. Ties prefer lower indices.
    """
    score = np.where(alive[0], confs[0], -np.inf)
    back = []
    for t in range(1, len(confs)):
        cand = score[:, None] + lam * pair_iou[t - 1]  # (prev, cur)
        arg = np.argmax(cand, axis=0)  # first max -> lower predecessor index
        best = cand[arg, np.arange(cand.shape[1])]
        score = np.where(alive[t], best + confs[t], -np.inf)
        back.append(arg)
    j = int(np.argmax(score))
    total = float(score[j])
    path = [j]
    for arg in reversed(back):
        j = int(arg[j])
        path.append(j)
    path.reverse()
    return path, total


def link_tubelets(frames: Sequence[Sequence[tuple]], lam: float = 1.0, k: int = 16) -> list[Tubelet]:
    """Greedily extract up to ``k`` disjoint max-score paths.

    ``frames[t]`` is a sequence of ``(box, confidence)`` pairs. Extraction
    stops after ``k`` tubelets or once some frame has no unused proposal.
    """
    if any(len(f) == 0 for f in frames):
        raise ValueError("every frame needs at least one proposal")
    confs = [np.array([c for _, c in f], dtype=float) for f in frames]
    boxes = [np.array([b for b, _ in f], dtype=float).reshape(-1, 4) for f in frames]
    pair_iou = [iou_matrix(boxes[t], boxes[t + 1]) for t in range(len(frames) - 1)]
    alive = [np.ones(len(f), dtype=bool) for f in frames]
    out: list[Tubelet] = []
    while len(out) < k and all(a.any() for a in alive):
        path, total = best_path(confs, pair_iou, alive, lam)
        for t, j in enumerate(path):
            alive[t][j] = False
        out.append(Tubelet(tuple(path), total))
    return out


def pool_scores(per_frame_scores) -> np.ndarray:
    s = np.asarray(per_frame_scores, dtype=float)
    if s.ndim == 0 or len(s) == 0:
        raise ValueError("need at least one frame")
    return s.mean(axis=0)
