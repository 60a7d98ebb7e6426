import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adwsod import data
from adwsod.data import SchemaError, dumps, load_dataset, parse_dataset, save_dataset, split
from adwsod.synth import SyntheticConfig, generate_synthetic, make_prototypes, pose_keypoints, _random_pose

MINIMAL = {
    "task": {"actions": ["drink"], "objects": ["cup"], "action_object": [0], "num_keypoints": 2, "feature_dim": 3},
    "samples": [
        {
            "id": "v0",
            "actions": [0],
            "frames": [
                {
                    "proposals": [{"box": [0.1, 0.1, 0.3, 0.3], "confidence": 0.9, "feature": [1.0, 0.0, 0.0]}],
                    "keypoints": [[0.2, 0.2, True], [0.4, 0.5, False]],
                }
            ],
        }
    ],
}


def _mutated(fn):
    doc = copy.deepcopy(MINIMAL)
    fn(doc)
    return doc


def test_minimal_file_parses(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps(MINIMAL))
    task, samples = load_dataset(path)
    assert task.n_actions == 1 and len(samples) == 1
    f = samples[0].frames[0]
    assert f.person_box is None and f.keypoints.visible.tolist() == [True, False]


@pytest.mark.parametrize(
    "mutate,needle",
    [
        (lambda d: d["samples"][0].update(actions=[1]), "v0"),
        (lambda d: d["samples"][0]["frames"][0]["proposals"][0].update(feature=[1.0, 0.0]), "v0"),
        (lambda d: d["samples"][0]["frames"][0]["proposals"][0].update(box=[0.5, 0.1, 0.3, 0.3]), "box"),
        (lambda d: d["samples"][0]["frames"][0]["proposals"][0].pop("confidence"), "confidence"),
        (lambda d: d["samples"][0].update(gt_boxes=[{"object": 3, "box": [0, 0, 1, 1]}]), "object"),
        (lambda d: d["samples"][0].update(gt_boxes=[{"object": 0, "box": [0, 0, 1, 1], "frame": 2}]), "frame"),
        (lambda d: d["samples"][0]["frames"][0].update(keypoints=[[0.2, 0.2, True]]), "keypoints"),
        (lambda d: d["samples"].append(copy.deepcopy(d["samples"][0])), "duplicate"),
        (lambda d: d["task"].update(action_object=[4]), "action_object"),
        (lambda d: d.pop("task"), "task"),
    ],
)
def test_schema_violations_name_the_field(mutate, needle):
    with pytest.raises(SchemaError, match=needle):
        parse_dataset(_mutated(mutate))


def test_non_finite_feature_rejected():
    doc = _mutated(lambda d: d["samples"][0]["frames"][0]["proposals"][0].update(feature=[1.0, float("nan"), 0.0]))
    with pytest.raises(SchemaError, match="finite"):
        parse_dataset(json.loads(json.dumps(doc)))


def test_invalid_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_dataset(path)


SMALL = dict(train_per_action=3, val_per_action=1, test_per_action=2, frames_per_clip=2)


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(SyntheticConfig(**SMALL))


def test_round_trip(small, tmp_path):
    task, splits = small
    path = tmp_path / "train.json"
    save_dataset(path, task, splits["train"])
    task2, samples2 = load_dataset(path)
    assert task2 == task
    assert dumps(task2, samples2) == dumps(task, splits["train"])


def test_generation_is_byte_deterministic(small):
    task, splits = small
    again_task, again = generate_synthetic(SyntheticConfig(**SMALL))
    for name in ("train", "val", "test"):
        assert dumps(again_task, again[name]) == dumps(task, splits[name])
    _, other = generate_synthetic(SyntheticConfig(**SMALL, seed=1))
    assert dumps(task, other["train"]) != dumps(task, splits["train"])


def test_split_counts_and_ids(small):
    _, splits = small
    assert [len(splits[k]) for k in ("train", "val", "test")] == [12, 4, 8]
    ids = [s.id for k in splits for s in splits[k]]
    assert len(ids) == len(set(ids))


def test_person_box_is_dilated_keypoint_box(small):
    frame = small[1]["train"][0].frames[0]
    pts = frame.keypoints.points
    lo, hi = pts.min(0), pts.max(0)
    pad = 0.1 * (hi - lo) / 2
    expected = np.clip(np.concatenate([lo - pad, hi + pad]), 0.0, 1.0)
    assert np.allclose(list(frame.person_box), expected)


def test_zero_noise_zero_sigma_places_object_exactly():
    cfg = SyntheticConfig(feature_noise=0.0, offset_stds=((0.0, 0.0),), train_per_action=20, val_per_action=0, test_per_action=0)
    _, splits = generate_synthetic(cfg)
    checked = 0
    for s in splits["train"]:
        a = s.actions[0]
        frame, gt = s.frames[0], s.gt_boxes[0].box
        target = frame.keypoints.points[cfg.planted_keypoint(a)] + cfg.planted_mean(a)
        half = np.array([gt.x2 - gt.x1, gt.y2 - gt.y1]) / 2
        if np.all(target - half >= 0) and np.all(target + half <= 1):
            centre = np.array([(gt.x1 + gt.x2) / 2, (gt.y1 + gt.y2) / 2])
            assert np.allclose(centre, target, atol=1e-12)
            checked += 1
    assert checked >= 60


def test_zero_distractors_single_true_proposal():
    cfg = SyntheticConfig(distractors=0, train_per_action=2, val_per_action=0, test_per_action=0)
    _, splits = generate_synthetic(cfg)
    for s in splits["train"]:
        assert len(s.frames[0].proposals) == 1
        assert s.frames[0].proposals[0].box == s.gt_boxes[0].box


def test_prototypes_distinct_unit_norm():
    p = make_prototypes(SyntheticConfig())
    allv = np.vstack([p.objects, p.background, p.context, p.person])
    assert np.allclose(np.linalg.norm(allv, axis=1), 1.0)
    gram = allv @ allv.T
    assert np.abs(gram - np.eye(len(allv))).max() < 1e-9


def test_pose_keypoints_inside_frame():
    rng = np.random.default_rng(0)
    for _ in range(500):
        pts = pose_keypoints(_random_pose(rng))
        assert pts.shape == (13, 2) and np.all(pts >= 0) and np.all(pts <= 1)


@settings(max_examples=25)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0, 0.05, 0.1]))
def test_true_box_has_highest_prototype_similarity(seed, noise):
    cfg = SyntheticConfig(seed=seed, feature_noise=noise, train_per_action=2, val_per_action=0, test_per_action=0, frames_per_clip=2)
    protos = make_prototypes(cfg)
    _, splits = generate_synthetic(cfg)
    for s in splits["train"]:
        o = s.actions[0] % cfg.n_objects
        for t, frame in enumerate(s.frames):
            sims = [float(p.feature @ protos.objects[o]) for p in frame.proposals]
            assert frame.proposals[int(np.argmax(sims))].box == s.gts_in_frame(t)[0].box


def test_invalid_synthetic_config():
    for kw in ({"num_keypoints": 12}, {"anchor_keypoints": (13,)}, {"offset_stds": ((1e-4, 1e-4),)}, {"context_prob": 1.5}):
        with pytest.raises(ValueError):
            generate_synthetic(SyntheticConfig(**kw))


def test_split_examples():
    (whole,) = split(list(range(7)), [1.0])
    assert sorted(whole) == list(range(7))
    a, b = split(list(range(10)), [0.5, 0.5], seed=3)
    assert len(a) == len(b) == 5 and sorted(a + b) == list(range(10))
    with pytest.raises(ValueError):
        split([1, 2], [0.5, 0.6])


@given(st.integers(0, 60), st.lists(st.integers(1, 5), min_size=1, max_size=4), st.integers(0, 100))
def test_split_is_seeded_disjoint_exhaustive(n, parts, seed):
    fr = np.array(parts, dtype=float) / sum(parts)
    items = list(range(n))
    out = split(items, fr, seed)
    assert sorted(i for p in out for i in p) == items
    assert out == split(items, fr, seed)


def test_split_path():
    assert data.split_path("/tmp/x", "val").name.startswith("val")
