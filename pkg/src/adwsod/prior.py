"""Action-conditional spatial prior over object locations relative to a person.

Each action owns a softmax over keypoints (giving an anchor point as a
weighted sum of keypoint locations) and a diagonal Gaussian over the offset
from that anchor to the object center. Two ablations are supported: a
``center`` variant anchored at the frame center, and a ``grid`` variant that
replaces the Gaussian by learned probabilities over a 3x3 offset grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import diff
from .diff import Node, Tape
from .geometry import Point2

VARIANTS = ("normal", "grid", "center")
SIGMA_MIN = 1e-3
LOG_SIGMA_MIN = math.log(SIGMA_MIN)
GRID_SIZE = 3
GRID_EXTENT = 0.5
NORM_EPS = 1e-12
FRAME_CENTER = Point2(0.5, 0.5)

KEYPOINT_NAMES = (
    "head",
    "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow",
    "l_wrist", "r_wrist",
    "l_hip", "r_hip",
    "l_knee", "r_knee",
    "l_ankle", "r_ankle",
)


@dataclass
class Keypoints:
    points: np.ndarray  # (P, 2)
    visible: np.ndarray  # (P,) bool

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(self.points) != len(self.visible):
            raise ValueError("keypoint points and visibility flags differ in length")

    def __len__(self):
        return len(self.points)


@dataclass
class PriorParams:
    key_logits: np.ndarray  # (A, P)
    mu: np.ndarray  # (A, 2)
    log_sigma: np.ndarray  # (A, 2)
    grid_logits: np.ndarray  # (A, 3, 3)
    variant: str = "normal"
    learn_mu: bool = True
    learn_sigma: bool = True
    normalize: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prior variant {self.variant!r}")

    @classmethod
    def init(
        cls,
        n_actions: int,
        n_keypoints: int,
        variant: str = "normal",
        sigma0: float = 0.25,
        learn_mu: bool = True,
        learn_sigma: bool = True,
        normalize: bool = True,
    ) -> "PriorParams":
        return cls(
            key_logits=np.zeros((n_actions, n_keypoints)),
            mu=np.zeros((n_actions, 2)),
            log_sigma=np.full((n_actions, 2), math.log(sigma0)),
            grid_logits=np.zeros((n_actions, GRID_SIZE, GRID_SIZE)),
            variant=variant,
            learn_mu=learn_mu,
            learn_sigma=learn_sigma,
            normalize=normalize,
        )

    @property
    def n_actions(self) -> int:
        return self.key_logits.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "prior.key_logits": self.key_logits,
            "prior.mu": self.mu,
            "prior.log_sigma": self.log_sigma,
            "prior.grid_logits": self.grid_logits,
        }

    def clamp_(self) -> None:
        np.maximum(self.log_sigma, LOG_SIGMA_MIN, out=self.log_sigma)

    def key_weights(self) -> np.ndarray:
        z = self.key_logits - self.key_logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)


def grid_cell(offset) -> Optional[tuple[int, int]]:
    """(row, col) of ``offset`` in the 3x3 grid over [-0.5, 0.5]^2; rows run top to bottom."""
    idx = int(grid_cells(np.asarray(offset, dtype=float).reshape(1, 2))[0])
    if idx < 0:
        return None
    return divmod(idx, GRID_SIZE)


def grid_cells(offsets: np.ndarray) -> np.ndarray:
    """Flat cell index row*3+col for offsets (..., 2); -1 outside the grid."""
    offsets = np.asarray(offsets, dtype=float)
    width = 2.0 * GRID_EXTENT / GRID_SIZE
    inside = np.all(np.abs(offsets) <= GRID_EXTENT, axis=-1)
    cell = np.floor((offsets + GRID_EXTENT) / width).astype(int)
    cell = np.clip(cell, 0, GRID_SIZE - 1)  # the +0.5 edge belongs to the last cell
    flat = cell[..., 1] * GRID_SIZE + cell[..., 0]
    return np.where(inside, flat, -1)


def _learnable(tape: Tape, node: Node, learn: bool) -> Node:
    return node if learn else tape.const(node.value)


def anchor_nodes(
    tape: Tape,
    key_logits: Node,
    variant: str,
    kps: Optional[Keypoints],
    frame_center: Point2 = FRAME_CENTER,
) -> Node:
    """Per-action anchor points (A, 2)."""
    n_actions = key_logits.shape[0]
    if variant == "center" or kps is None or not kps.visible.any():
        return tape.const(np.tile(np.asarray(frame_center, dtype=float), (n_actions, 1)))
    if len(kps) != key_logits.shape[1]:
        raise ValueError(f"expected {key_logits.shape[1]} keypoints, got {len(kps)}")
    vis = np.flatnonzero(kps.visible)
    logits = key_logits if len(vis) == len(kps) else diff.take(key_logits, (slice(None), vis))
    weights = diff.softmax(logits, axis=1)
    return weights @ kps.points[vis]


def weight_nodes(
    tape: Tape,
    nodes: dict[str, Node],
    prior: PriorParams,
    anchors: Node,
    centers: np.ndarray,
) -> Node:
    """Prior weights (A, R) of proposals with ``centers`` (R, 2) for every action."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    n_actions, n_props = anchors.shape[0], len(centers)
    if n_props == 0:
        raise ValueError("at least one proposal center is required")
    offsets = tape.const(centers[None, :, :]) - diff.reshape(anchors, (n_actions, 1, 2))
    if prior.variant == "grid":
        cells = grid_cells(offsets.value)
        probs = diff.softmax(diff.reshape(nodes["prior.grid_logits"], (n_actions, GRID_SIZE * GRID_SIZE)), axis=1)
        density = diff.gather_or_zero(probs, cells)
        if not prior.normalize:
            return density
        total = density.value.sum(axis=1)
        dead = total <= 0.0
        w = density / diff.reshape(diff.sum(density, axis=1) + NORM_EPS, (n_actions, 1))
        if dead.any():
            keep = (~dead).astype(float)[:, None]
            w = w * keep + tape.const((1.0 - keep) * np.full((n_actions, n_props), 1.0 / n_props))
        return w
    mu = _learnable(tape, nodes["prior.mu"], prior.learn_mu)
    log_sigma = _learnable(tape, nodes["prior.log_sigma"], prior.learn_sigma)
    logpdf = diff.gaussian_logpdf(offsets, mu, log_sigma)
    if prior.normalize:
        # d_r / sum(d) evaluated in the log domain, immune to underflow
        return diff.softmax(logpdf, axis=1)
    return diff.exp(logpdf)


def frame_weight_nodes(
    tape: Tape,
    nodes: dict[str, Node],
    prior: PriorParams,
    kps: Optional[Keypoints],
    centers: np.ndarray,
    frame_center: Point2 = FRAME_CENTER,
) -> Node:
    anchors = anchor_nodes(tape, nodes["prior.key_logits"], prior.variant, kps, frame_center)
    return weight_nodes(tape, nodes, prior, anchors, centers)


def _const_nodes(tape: Tape, prior: PriorParams) -> dict[str, Node]:
    return {k: tape.const(v) for k, v in prior.arrays().items()}


def anchor_location(
    params: PriorParams,
    action: int,
    kps: Optional[Keypoints],
    frame_center: Point2 = FRAME_CENTER,
) -> Point2:
    tape = Tape()
    a = anchor_nodes(tape, tape.const(params.key_logits), params.variant, kps, frame_center).value[action]
    return Point2(float(a[0]), float(a[1]))


def proposal_weights(
    params: PriorParams,
    action: int,
    anchor: Point2,
    centers: Sequence[Point2],
) -> np.ndarray:
    tape = Tape()
    anchors = tape.const(np.tile(np.asarray(anchor, dtype=float), (params.n_actions, 1)))
    return weight_nodes(tape, _const_nodes(tape, params), params, anchors, np.asarray(centers)).value[action]


def raw_density(params: PriorParams, action: int, offset) -> float:
    """Unnormalized Gaussian density of a single offset under action ``action``."""
    offset = np.asarray(offset, dtype=float)
    sigma = params.sigma()[action]
    z = (offset - params.mu[action]) / sigma
    return float(np.exp(-0.5 * z @ z) / (2.0 * math.pi * sigma[0] * sigma[1]))
