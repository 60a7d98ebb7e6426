"""Synthetic scenes with a planted action-conditional object location.

A stick figure with 13 keypoints is drawn per sample. For action ``a`` the
interacted object sits at keypoint ``anchor_keypoints[a]`` plus a Gaussian
offset N(offset_means[a], offset_stds[a]^2), and carries the feature
prototype of object ``o_a``. Every other proposal is a distractor: a random
box with a background prototype feature, except that with probability
``context_prob`` one distractor slot holds the action's context object
(an unannotated thing that co-occurs with the action, centred within
``context_radius`` of a keypoint chosen uniformly at random, so it is near the
person but at no fixed offset from any keypoint). Weak labels alone cannot tell the context object
from the interacted one; only its position relative to the person can.
A fraction ``near_object`` of background distractors sits in a ring of radius
``near_ring`` around the interacted object, in a uniformly random direction, so
that no direction away from the anchor is free of clutter.

Template (body units, y pointing down, scaled by person height ``s``):
hips at pelvis +-0.08, thigh and shin 0.25 each (swing +-0.35 rad), shoulders
0.45 above the pelvis at +-0.10, head 0.12 above the shoulders (tilt +-0.8 rad), upper arm
0.17 and forearm 0.15 with shoulder swing in [-2.2, 2.2] rad and elbow bend in
[-1.2, 1.2] rad. The torso leans by up to +-0.15 rad.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Frame, GTBox, Sample, TaskSpec
from .geometry import BBox, Proposal, box_from_points
from .prior import KEYPOINT_NAMES, Keypoints

N_KEYPOINTS = len(KEYPOINT_NAMES)
MAX_TRIES = 100


@dataclass
class SyntheticConfig:
    n_actions: int = 4
    n_objects: int = 4
    feature_dim: int = 32
    num_keypoints: int = 13
    # planted ground truth, cycled when there are more actions than entries
    anchor_keypoints: tuple = (6, 0, 11, 5)  # r_wrist, head, l_ankle, l_wrist
    offset_means: tuple = ((0.06, 0.0), (0.0, -0.08), (0.05, 0.04), (-0.06, 0.02))
    offset_stds: tuple = ((0.02, 0.02),)
    distractors: int = 8
    context_radius: float = 0.15
    near_object: float = 0.25
    near_ring: tuple = (0.06, 0.15)
    context_prob: float = 0.8
    n_background: int = 4
    feature_noise: float = 0.1
    person_signal: float = 0.3
    object_size: tuple = (0.06, 0.14)
    distractor_size: tuple = (0.05, 0.35)
    invisible_prob: float = 0.0
    frames_per_clip: int = 1
    drift: float = 0.01
    train_per_action: int = 200
    val_per_action: int = 25
    test_per_action: int = 50
    seed: int = 0

    def __post_init__(self):
        self.anchor_keypoints = tuple(int(k) for k in self.anchor_keypoints)
        self.offset_means = tuple(tuple(float(v) for v in m) for m in _pairs(self.offset_means))
        self.offset_stds = tuple(tuple(float(v) for v in s) for s in _pairs(self.offset_stds))
        self.object_size = tuple(float(v) for v in self.object_size)
        self.distractor_size = tuple(float(v) for v in self.distractor_size)
        self.near_ring = tuple(float(v) for v in self.near_ring)

    def validate(self) -> None:
        if self.num_keypoints != N_KEYPOINTS:
            raise ValueError(f"the stick-figure template has {N_KEYPOINTS} keypoints")
        if self.n_actions < 1 or self.n_objects < 1 or self.feature_dim < 1:
            raise ValueError("n_actions, n_objects and feature_dim must be >= 1")
        if not all(0 <= k < N_KEYPOINTS for k in self.anchor_keypoints):
            raise ValueError("anchor_keypoints out of range")
        if any(min(s) < 1e-3 and min(s) != 0.0 for s in self.offset_stds) or any(min(s) < 0 for s in self.offset_stds):
            raise ValueError("offset_stds must be >= 1e-3 (or exactly 0 for a degenerate prior)")
        if self.distractors < 0 or self.frames_per_clip < 1:
            raise ValueError("distractors >= 0 and frames_per_clip >= 1 required")
        if not 0.0 <= self.context_prob <= 1.0:
            raise ValueError("context_prob must be in [0, 1]")
        if not 0.0 <= self.near_object <= 1.0:
            raise ValueError("near_object must be in [0, 1]")
        if not 0.0 <= self.near_ring[0] <= self.near_ring[1]:
            raise ValueError("near_ring must be 0 <= inner <= outer")

    def planted_keypoint(self, a: int) -> int:
        return self.anchor_keypoints[a % len(self.anchor_keypoints)]

    def planted_mean(self, a: int) -> np.ndarray:
        return np.array(self.offset_means[a % len(self.offset_means)])

    def planted_std(self, a: int) -> np.ndarray:
        return np.array(self.offset_stds[a % len(self.offset_stds)])

    def task(self) -> TaskSpec:
        return TaskSpec(
            actions=[f"action_{a}" for a in range(self.n_actions)],
            objects=[f"object_{o}" for o in range(self.n_objects)],
            action_object=[a % self.n_objects for a in range(self.n_actions)],
            num_keypoints=self.num_keypoints,
            feature_dim=self.feature_dim,
        )


def _pairs(v):
    v = list(v)
    if v and not isinstance(v[0], (list, tuple)):
        return [tuple(v[i : i + 2]) for i in range(0, len(v), 2)]
    return v


@dataclass
class Prototypes:
    objects: np.ndarray  # (n_o, D)
    background: np.ndarray  # (n_bg, D)
    context: np.ndarray  # (n_a, D)
    person: np.ndarray  # (n_a, D)


def make_prototypes(cfg: SyntheticConfig) -> Prototypes:
    rng = np.random.default_rng([cfg.seed, 7919])
    n = cfg.n_objects + cfg.n_background + 2 * cfg.n_actions
    g = rng.normal(size=(cfg.feature_dim, n))
    if n <= cfg.feature_dim:
        q, r = np.linalg.qr(g)
        vecs = (q * np.sign(np.diag(r))).T  # orthonormal rows
    else:
        vecs = (g / np.linalg.norm(g, axis=0)).T
    i = np.cumsum([0, cfg.n_objects, cfg.n_background, cfg.n_actions, cfg.n_actions])
    return Prototypes(vecs[i[0] : i[1]], vecs[i[1] : i[2]], vecs[i[2] : i[3]], vecs[i[3] : i[4]])


@dataclass
class _Pose:
    root: np.ndarray
    scale: float
    lean: float
    legs: np.ndarray = field(default_factory=lambda: np.zeros(4))
    arms: np.ndarray = field(default_factory=lambda: np.zeros(4))
    head: float = 0.0


def _rot(v, ang):
    c, s = math.cos(ang), math.sin(ang)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def _limb(start, length, ang):
    # angle measured from straight down
    return start + length * np.array([math.sin(ang), math.cos(ang)])


def pose_keypoints(pose: _Pose) -> np.ndarray:
    s, r = pose.scale, pose.root
    kp = np.zeros((N_KEYPOINTS, 2))
    hip_l, hip_r = r + s * np.array([-0.08, 0.0]), r + s * np.array([0.08, 0.0])
    kp[7], kp[8] = hip_l, hip_r
    kp[9] = _limb(hip_l, 0.25 * s, pose.legs[0])
    kp[10] = _limb(hip_r, 0.25 * s, pose.legs[1])
    kp[11] = _limb(kp[9], 0.25 * s, pose.legs[0] + pose.legs[2])
    kp[12] = _limb(kp[10], 0.25 * s, pose.legs[1] + pose.legs[3])
    neck = r + _rot(np.array([0.0, -0.45 * s]), pose.lean)
    kp[1] = neck + _rot(np.array([-0.10 * s, 0.0]), pose.lean)
    kp[2] = neck + _rot(np.array([0.10 * s, 0.0]), pose.lean)
    kp[0] = neck + _rot(np.array([0.0, -0.12 * s]), pose.lean + pose.head)
    # left arm swings towards -x, right arm towards +x
    kp[3] = _limb(kp[1], 0.17 * s, -pose.arms[0])
    kp[4] = _limb(kp[2], 0.17 * s, pose.arms[1])
    kp[5] = _limb(kp[3], 0.15 * s, -(pose.arms[0] + pose.arms[2]))
    kp[6] = _limb(kp[4], 0.15 * s, pose.arms[1] + pose.arms[3])
    return kp


def _random_pose(rng: np.random.Generator) -> _Pose:
    return _Pose(
        root=np.array([rng.uniform(0.3, 0.7), rng.uniform(0.5, 0.6)]),
        scale=rng.uniform(0.35, 0.5),
        lean=rng.uniform(-0.15, 0.15),
        legs=np.concatenate([rng.uniform(-0.35, 0.35, 2), rng.uniform(-0.35, 0.35, 2)]),
        arms=np.concatenate([rng.uniform(-2.2, 2.2, 2), rng.uniform(-1.2, 1.2, 2)]),
        head=rng.uniform(-0.8, 0.8),
    )


def _step_pose(pose: _Pose, rng: np.random.Generator, drift: float) -> _Pose:
    return _Pose(
        root=pose.root + rng.normal(0.0, drift, 2),
        scale=pose.scale,
        lean=pose.lean,
        legs=pose.legs + rng.normal(0.0, 0.05, 4),
        arms=pose.arms + rng.normal(0.0, 0.1, 4),
        head=pose.head + rng.normal(0.0, 0.05),
    )


def _box_at(c, w, h) -> BBox:
    return BBox(float(c[0] - w / 2), float(c[1] - h / 2), float(c[0] + w / 2), float(c[1] + h / 2))


def _inside(b: BBox) -> bool:
    return b.x1 >= 0.0 and b.y1 >= 0.0 and b.x2 <= 1.0 and b.y2 <= 1.0


def _object_box(anchor, mean, std, size, rng) -> BBox:
    w, h = rng.uniform(*size, 2)
    for _ in range(MAX_TRIES):
        c = anchor + mean + std * rng.normal(size=2)
        b = _box_at(c, w, h)
        if _inside(b):
            return b
    c = np.clip(c, [w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    return _box_at(c, w, h)


def _random_box(size, rng) -> BBox:
    w, h = rng.uniform(*size, 2)
    c = rng.uniform([w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    return _box_at(c, w, h)


def _near_keypoint_box(points, radius, size, rng) -> BBox:
    w, h = rng.uniform(*size, 2)
    c = points[rng.integers(len(points))] + rng.uniform(-radius, radius, 2)
    c = np.clip(c, [w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    return _box_at(c, w, h)


def _ring_box(around, ring, size, rng) -> BBox:
    w, h = rng.uniform(*size, 2)
    r, ang = rng.uniform(*ring), rng.uniform(0.0, 2.0 * math.pi)
    c = around + r * np.array([math.cos(ang), math.sin(ang)])
    c = np.clip(c, [w / 2, h / 2], [1 - w / 2, 1 - h / 2])
    return _box_at(c, w, h)


def _jitter_box(b: BBox, rng, drift) -> BBox:
    d = rng.normal(0.0, drift, 2)
    moved = BBox(b.x1 + d[0], b.y1 + d[1], b.x2 + d[0], b.y2 + d[1])
    return moved if _inside(moved) else b


def _feature(proto, noise, rng):
    return proto + noise * rng.normal(size=proto.shape)


def make_sample(
    cfg: SyntheticConfig,
    protos: Prototypes,
    action: int,
    sample_id: str,
    rng: np.random.Generator,
) -> Sample:
    obj = action % cfg.n_objects
    kp_idx = cfg.planted_keypoint(action)
    mean, std = cfg.planted_mean(action), cfg.planted_std(action)
    pose = _random_pose(rng)
    obj_box = _object_box(pose_keypoints(pose)[kp_idx], mean, std, cfg.object_size, rng)
    obj_center = np.array([(obj_box.x1 + obj_box.x2) / 2, (obj_box.y1 + obj_box.y2) / 2])
    # persistent scene layout across the clip: (kind, box, prototype)
    n_ctx = 1 if cfg.distractors > 0 and rng.uniform() < cfg.context_prob else 0
    points0 = pose_keypoints(pose)
    clutter = [("context", _near_keypoint_box(points0, cfg.context_radius, cfg.object_size, rng), protos.context[action])] * n_ctx
    for _ in range(cfg.distractors - n_ctx):
        if rng.uniform() < cfg.near_object:
            box = _ring_box(obj_center, cfg.near_ring, cfg.object_size, rng)
        else:
            box = _random_box(cfg.distractor_size, rng)
        clutter.append(("background", box, protos.background[rng.integers(len(protos.background))]))
    frames, gts = [], []
    offset_draw = None
    size = (obj_box.x2 - obj_box.x1, obj_box.y2 - obj_box.y1)
    for t in range(cfg.frames_per_clip):
        if t > 0:
            pose = _step_pose(pose, rng, cfg.drift)
            clutter = [(k, _jitter_box(b, rng, cfg.drift), p) for k, b, p in clutter]
        points = pose_keypoints(pose)
        visible = rng.uniform(size=N_KEYPOINTS) >= cfg.invisible_prob
        anchor = points[kp_idx]
        if offset_draw is None:
            offset_draw = obj_center - anchor
        else:
            c = np.clip(anchor + offset_draw, [size[0] / 2, size[1] / 2], [1 - size[0] / 2, 1 - size[1] / 2])
            obj_box = _box_at(c, *size)
        props = [Proposal(obj_box, float(rng.uniform(0.5, 1.0)), _feature(protos.objects[obj], cfg.feature_noise, rng))]
        for _, b, p in clutter:
            props.append(Proposal(b, float(rng.uniform(0.0, 1.0)), _feature(p, cfg.feature_noise, rng)))
        order = rng.permutation(len(props))
        props = [props[i] for i in order]
        person_feature = _feature(cfg.person_signal * protos.person[action], cfg.feature_noise, rng)
        frames.append(
            Frame(
                proposals=props,
                person_box=box_from_points(points, dilate=0.1),
                person_feature=person_feature,
                keypoints=Keypoints(points, visible),
            )
        )
        gts.append(GTBox(obj, obj_box, t))
    return Sample(id=sample_id, frames=frames, actions=[action], gt_boxes=gts)


def generate_synthetic(cfg: SyntheticConfig) -> tuple[TaskSpec, dict[str, list[Sample]]]:
    """Task plus deterministic ``train``/``val``/``test`` splits."""
    cfg.validate()
    protos = make_prototypes(cfg)
    out = {}
    counts = {"train": cfg.train_per_action, "val": cfg.val_per_action, "test": cfg.test_per_action}
    for k, (name, per_action) in enumerate(counts.items()):
        rng = np.random.default_rng([cfg.seed, k])
        samples = []
        for i in range(per_action):
            for a in range(cfg.n_actions):
                samples.append(make_sample(cfg, protos, a, f"{name}-{a}-{i:04d}", rng))
        out[name] = samples
    return cfg.task(), out
