"""Dataset types and the ``.wsod.json`` file format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import BBox, Proposal
from .prior import Keypoints

EXTENSION = ".wsod.json"
SPLITS = ("train", "val", "test")


class SchemaError(ValueError):
    pass


@dataclass
class TaskSpec:
    actions: list[str]
    objects: list[str]
    action_object: list[int]  # object id of each action
    num_keypoints: int = 13
    feature_dim: int = 32

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_objects(self) -> int:
        return len(self.objects)

    def validate(self) -> None:
        if not self.actions or not self.objects:
            raise SchemaError("task: actions and objects must be non-empty")
        if len(self.action_object) != len(self.actions):
            raise SchemaError("task.action_object: one object id per action required")
        for a, o in enumerate(self.action_object):
            if not 0 <= o < len(self.objects):
                raise SchemaError(f"task.action_object[{a}]: unknown object id {o}")
        if self.num_keypoints < 1 or self.feature_dim < 1:
            raise SchemaError("task: num_keypoints and feature_dim must be >= 1")

    def to_json(self) -> dict:
        return {
            "actions": list(self.actions),
            "objects": list(self.objects),
            "action_object": [int(o) for o in self.action_object],
            "num_keypoints": int(self.num_keypoints),
            "feature_dim": int(self.feature_dim),
        }

    @classmethod
    def from_json(cls, d: dict) -> "TaskSpec":
        try:
            task = cls(
                actions=[str(a) for a in d["actions"]],
                objects=[str(o) for o in d["objects"]],
                action_object=[int(o) for o in d["action_object"]],
                num_keypoints=int(d.get("num_keypoints", 13)),
                feature_dim=int(d.get("feature_dim", 32)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"task: {e}") from None
        task.validate()
        return task


@dataclass
class GTBox:
    object: int
    box: BBox
    frame: int = 0


@dataclass
class Frame:
    proposals: list[Proposal]
    person_box: Optional[BBox] = None
    person_feature: Optional[np.ndarray] = None
    keypoints: Optional[Keypoints] = None


@dataclass
class Sample:
    id: str
    frames: list[Frame]
    actions: list[int]
    gt_boxes: list[GTBox] = field(default_factory=list)

    def gts_in_frame(self, t: int) -> list[GTBox]:
        return [g for g in self.gt_boxes if g.frame == t]

    @property
    def annotated_frames(self) -> list[int]:
        return sorted({g.frame for g in self.gt_boxes})


# --- serialization -------------------------------------------------------


def _num(x: float) -> float:
    return float(x)


def _frame_to_json(f: Frame) -> dict:
    out = {
        "proposals": [
            {"box": [_num(v) for v in p.box], "confidence": _num(p.confidence), "feature": [_num(v) for v in p.feature]}
            for p in f.proposals
        ],
        "person_box": None if f.person_box is None else [_num(v) for v in f.person_box],
        "person_feature": None if f.person_feature is None else [_num(v) for v in f.person_feature],
        "keypoints": None
        if f.keypoints is None
        else [[_num(x), _num(y), bool(v)] for (x, y), v in zip(f.keypoints.points, f.keypoints.visible)],
    }
    return out


def sample_to_json(s: Sample) -> dict:
    return {
        "id": s.id,
        "actions": [int(a) for a in s.actions],
        "frames": [_frame_to_json(f) for f in s.frames],
        "gt_boxes": [{"object": int(g.object), "box": [_num(v) for v in g.box], "frame": int(g.frame)} for g in s.gt_boxes],
    }


def dataset_to_json(task: TaskSpec, samples: Sequence[Sample]) -> dict:
    return {"task": task.to_json(), "samples": [sample_to_json(s) for s in samples]}


def dumps(task: TaskSpec, samples: Sequence[Sample]) -> str:
    return json.dumps(dataset_to_json(task, samples), sort_keys=True, separators=(",", ":"))


def save_dataset(path, task: TaskSpec, samples: Sequence[Sample]) -> None:
    Path(path).write_text(dumps(task, samples))


# --- parsing with validation --------------------------------------------


def _box(v, where: str) -> BBox:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise SchemaError(f"{where}: box must be [x1,y1,x2,y2]")
    try:
        b = BBox(*(float(x) for x in v))
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: box values must be numbers") from None
    if not all(math.isfinite(x) for x in b):
        raise SchemaError(f"{where}: box values must be finite")
    if b.x1 > b.x2 or b.y1 > b.y2:
        raise SchemaError(f"{where}: box requires x1<=x2 and y1<=y2")
    return b


def _vector(v, dim: int, where: str) -> np.ndarray:
    if not isinstance(v, list):
        raise SchemaError(f"{where}: expected a number array")
    if len(v) != dim:
        raise SchemaError(f"{where}: feature length {len(v)} != feature_dim {dim}")
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: feature values must be numbers") from None
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: feature values must be finite")
    return arr


def _frame(d, task: TaskSpec, where: str) -> Frame:
    if not isinstance(d, dict) or "proposals" not in d:
        raise SchemaError(f"{where}: frame needs a 'proposals' array")
    props = []
    for j, p in enumerate(d["proposals"]):
        w = f"{where}.proposals[{j}]"
        if not isinstance(p, dict):
            raise SchemaError(f"{w}: expected an object")
        for key in ("box", "confidence", "feature"):
            if key not in p:
                raise SchemaError(f"{w}: missing field '{key}'")
        try:
            conf = float(p["confidence"])
        except (TypeError, ValueError):
            raise SchemaError(f"{w}.confidence: must be a number") from None
        props.append(Proposal(_box(p["box"], f"{w}.box"), conf, _vector(p["feature"], task.feature_dim, f"{w}.feature")))
    person_box = d.get("person_box")
    person_feature = d.get("person_feature")
    kps = d.get("keypoints")
    keypoints = None
    if kps is not None:
        if not isinstance(kps, list) or len(kps) != task.num_keypoints:
            raise SchemaError(f"{where}.keypoints: expected {task.num_keypoints} [x,y,visible] triples")
        try:
            pts = np.array([[float(k[0]), float(k[1])] for k in kps])
            vis = np.array([bool(k[2]) for k in kps])
        except (TypeError, ValueError, IndexError):
            raise SchemaError(f"{where}.keypoints: entries must be [x,y,visible]") from None
        keypoints = Keypoints(pts, vis)
    return Frame(
        proposals=props,
        person_box=None if person_box is None else _box(person_box, f"{where}.person_box"),
        person_feature=None
        if person_feature is None
        else _vector(person_feature, task.feature_dim, f"{where}.person_feature"),
        keypoints=keypoints,
    )


def sample_from_json(d: dict, task: TaskSpec, index: int = 0) -> Sample:
    sid = d.get("id") if isinstance(d, dict) else None
    where = f"sample {sid!r}" if sid is not None else f"samples[{index}]"
    if not isinstance(d, dict):
        raise SchemaError(f"{where}: expected an object")
    for key in ("id", "actions", "frames"):
        if key not in d:
            raise SchemaError(f"{where}: missing field '{key}'")
    actions = d["actions"]
    if not isinstance(actions, list):
        raise SchemaError(f"{where}.actions: expected an array of action ids")
    for a in actions:
        if not isinstance(a, int) or isinstance(a, bool) or not 0 <= a < task.n_actions:
            raise SchemaError(f"{where}.actions: unknown action id {a!r}")
    frames = d["frames"]
    if not isinstance(frames, list) or not frames:
        raise SchemaError(f"{where}.frames: at least one frame required")
    parsed = [_frame(f, task, f"{where}.frames[{t}]") for t, f in enumerate(frames)]
    gts = []
    for j, g in enumerate(d.get("gt_boxes") or []):
        w = f"{where}.gt_boxes[{j}]"
        if not isinstance(g, dict) or "object" not in g or "box" not in g:
            raise SchemaError(f"{w}: needs 'object' and 'box'")
        o = g["object"]
        if not isinstance(o, int) or isinstance(o, bool) or not 0 <= o < task.n_objects:
            raise SchemaError(f"{w}.object: unknown object id {o!r}")
        frame = g.get("frame", 0)
        if not isinstance(frame, int) or not 0 <= frame < len(parsed):
            raise SchemaError(f"{w}.frame: frame index {frame!r} out of range")
        gts.append(GTBox(o, _box(g["box"], f"{w}.box"), frame))
    return Sample(id=str(d["id"]), frames=parsed, actions=list(actions), gt_boxes=gts)


def parse_dataset(doc: dict) -> tuple[TaskSpec, list[Sample]]:
    if not isinstance(doc, dict) or "task" not in doc or "samples" not in doc:
        raise SchemaError("dataset: top-level 'task' and 'samples' required")
    task = TaskSpec.from_json(doc["task"])
    samples = [sample_from_json(s, task, i) for i, s in enumerate(doc["samples"])]
    seen = set()
    for s in samples:
        if s.id in seen:
            raise SchemaError(f"sample {s.id!r}: duplicate id")
        seen.add(s.id)
    return task, samples


def load_dataset(path) -> tuple[TaskSpec, list[Sample]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: invalid JSON ({e})") from None
    return parse_dataset(doc)


def split_path(directory, split: str) -> Path:
    return Path(directory) / f"{split}{EXTENSION}"


def split(samples: Sequence, fractions: Sequence[float], seed: int = 0) -> list[list]:
    """Seeded, disjoint, exhaustive partition by the given fractions."""
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions < 0) or not math.isclose(fractions.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must be non-negative and sum to 1")
    order = np.random.default_rng(seed).permutation(len(samples))
    bounds = np.round(np.cumsum(fractions) * len(samples)).astype(int)
    bounds[-1] = len(samples)
    parts, start = [], 0
    for end in bounds:
        parts.append([samples[i] for i in order[start:end]])
        start = end
    return parts
