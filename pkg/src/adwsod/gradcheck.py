"""Finite-difference check of the full training loss on small random problems."""

from __future__ import annotations

import numpy as np

from . import diff
from .geometry import BBox
from .model import HyperWeights, ModelParams, PreparedSample, SupervisedFrame, sample_loss
from .prior import Keypoints, PriorParams

GROUPS = ("key_logits", "mu", "log_sigma", "grid_logits", "obj", "act_h", "act_o")

# perturbed parameters and whether the supervised term is on, per variant;
# the grid variant has no mu or sigma and the supervised term never sees the prior
_CHECKED = {
    "normal": (("prior.key_logits", "prior.mu", "prior.log_sigma", "obj", "act_h", "act_o"), 1.0),
    "grid": (("prior.key_logits", "prior.grid_logits"), 0.0),
}


def group_of(name: str) -> str:
    head, _, leaf = name.partition(".")
    return leaf if head == "prior" else head


def _random_box(rng) -> BBox:
    c = rng.uniform(0.2, 0.8, 2)
    w, h = rng.uniform(0.05, 0.3, 2)
    return BBox(c[0] - w / 2, c[1] - h / 2, c[0] + w / 2, c[1] + h / 2)


def random_problem(seed: int, variant: str, n_actions=2, n_objects=3, n_keypoints=4, dim=3, hidden=2, n_props=3):
    """A 2-frame sample with one revealed frame, random parameters away from clamps."""
    rng = np.random.default_rng([seed, 11])
    prior = PriorParams.init(n_actions, n_keypoints, variant=variant)
    prior.key_logits = rng.normal(size=prior.key_logits.shape)
    prior.mu = rng.normal(0.0, 0.1, prior.mu.shape)
    prior.log_sigma = np.log(rng.uniform(0.1, 0.4, prior.log_sigma.shape))
    prior.grid_logits = rng.normal(size=prior.grid_logits.shape)
    params = ModelParams.init(prior, dim, n_objects, hidden, seed)
    for k, v in params.heads.items():
        v += rng.normal(0.0, 0.3, v.shape)  # non-zero biases
    kps = [Keypoints(rng.uniform(0.2, 0.8, (n_keypoints, 2)), rng.uniform(size=n_keypoints) > 0.2) for _ in range(2)]
    boxes = [[_random_box(rng) for _ in range(n_props)] for _ in range(2)]
    centers = np.array([[[(b.x1 + b.x2) / 2, (b.y1 + b.y2) / 2] for b in fb] for fb in boxes])
    features = rng.normal(size=(2, n_props, dim))
    gts = [(int(rng.integers(n_objects)), boxes[0][0]), (int(rng.integers(n_objects)), _random_box(rng))]
    sup = SupervisedFrame(features[0], np.array([list(b) for b in boxes[0]]), gts)
    actions = tuple(sorted(set(rng.choice(n_actions, size=int(rng.integers(1, n_actions + 1)), replace=False).tolist())))
    prep = PreparedSample(f"gc-{seed}", features, centers, kps, rng.normal(size=(2, dim)), actions, [sup])
    object_of_action = [a % n_objects for a in range(n_actions)]
    return params, prep, object_of_action


def check(seed: int, h: float = 1e-5) -> dict[str, float]:
    """Max relative error per parameter group over both prior variants."""
    errors = {g: 0.0 for g in GROUPS}
    for variant, (wanted, alpha_sup) in _CHECKED.items():
        params, prep, object_of_action = random_problem(seed, variant)
        prior = params.prior

        def f(tape, nodes):
            return sample_loss(
                tape,
                nodes,
                prior,
                prep,
                object_of_action,
                prior.n_actions,
                HyperWeights(alpha_sup=alpha_sup),
                rng=np.random.default_rng([seed, 13]),
                prior_grad_from_negatives=True,
            )

        arrays = params.arrays()
        names = [k for k in arrays if k in wanted or k.split(".")[0] in wanted]
        for name, err in diff.grad_check_groups(f, arrays, h, names).items():
            g = group_of(name)
            errors[g] = max(errors[g], err)
    return errors
