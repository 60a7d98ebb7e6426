"""Classification heads and the weak/strong losses built on the tape."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import diff
from .diff import Node, Tape
from .geometry import iou_matrix
from .prior import Keypoints, PriorParams, frame_weight_nodes

HEADS = ("obj", "act_h", "act_o")
LOSS_STYLES = ("paper", "sigmoid_bce")
POS_IOU = 0.45
NEG_RATIO = 5


@dataclass
class HyperWeights:
    alpha_o: float = 2.0
    alpha_a: float = 1.0
    alpha_sup: float = 1.0


@dataclass
class ModelParams:
    prior: PriorParams
    heads: dict[str, np.ndarray]

    @classmethod
    def init(
        cls,
        prior: PriorParams,
        feature_dim: int,
        n_objects: int,
        hidden: int = 16,
        seed: int = 0,
    ) -> "ModelParams":
        rng = np.random.default_rng(seed)
        n_actions = prior.n_actions
        heads = {}
        for name, width in (("obj", n_objects), ("act_h", n_actions), ("act_o", n_actions)):
            heads[f"{name}.w1"] = rng.normal(0.0, 1.0 / np.sqrt(feature_dim), (feature_dim, hidden))
            heads[f"{name}.b1"] = np.zeros(hidden)
            heads[f"{name}.w2"] = rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, width))
            heads[f"{name}.b2"] = np.zeros(width)
        return cls(prior=prior, heads=heads)

    def arrays(self) -> dict[str, np.ndarray]:
        out = dict(self.prior.arrays())
        out.update(self.heads)
        return out

    @property
    def feature_dim(self) -> int:
        return self.heads["obj.w1"].shape[0]

    @property
    def n_objects(self) -> int:
        return self.heads["obj.b2"].shape[0]


def mlp(x, nodes: dict[str, Node], name: str) -> Node:
    h = diff.relu(x @ nodes[f"{name}.w1"] + nodes[f"{name}.b1"])
    return h @ nodes[f"{name}.w2"] + nodes[f"{name}.b2"]


def mlp_numpy(x: np.ndarray, heads: dict[str, np.ndarray], name: str) -> np.ndarray:
    h = np.maximum(x @ heads[f"{name}.w1"] + heads[f"{name}.b1"], 0.0)
    return h @ heads[f"{name}.w2"] + heads[f"{name}.b2"]


def probabilities(scores: Node, style: str = "paper") -> Node:
    if style == "paper":
        return diff.softmax(scores, axis=-1)
    if style == "sigmoid_bce":
        return diff.sigmoid(scores)
    raise ValueError(f"unknown loss style {style!r}")


def probabilities_numpy(scores: np.ndarray, style: str = "paper") -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    if style == "sigmoid_bce":
        return 0.5 * (1.0 + np.tanh(0.5 * scores))
    e = np.exp(scores - scores.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def object_scores(heads: dict[str, np.ndarray], features: np.ndarray, style: str = "paper"):
    """Object scores s_O (R, n_o) and P(o|r)."""
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != heads["obj.w1"].shape[0]:
        raise ValueError(f"feature dim {features.shape[-1]} != head input {heads['obj.w1'].shape[0]}")
    s = mlp_numpy(features, heads, "obj")
    return s, probabilities_numpy(s, style)


def _tape(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return Tape()


def _node(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.const(x)


def per_proposal_bce(P: Node, targets: np.ndarray) -> Node:
    """-(1/n_o) sum_o [y log P + (1-y) log(1-P)] for each row of P and of ``targets``.

    P: (R, n_o); targets: (T, n_o). Returns (R, T).
    """
    n_o = P.shape[1]
    targets = np.asarray(targets, dtype=float).reshape(-1, n_o)
    pos = diff.log(P) @ targets.T
    neg = diff.log(1.0 - P) @ (1.0 - targets).T
    return (pos + neg) * (-1.0 / n_o)


def loss_obj(P, w, object_of_action: Sequence[int], gt_actions: Sequence[int]) -> Node:
    """Prior-weighted object BCE, averaged over the ground-truth actions.

    P: (R, n_o) class probabilities; w: (A, R) prior weights for every action.
    """
    gt_actions = sorted(set(int(a) for a in gt_actions))
    if not gt_actions:
        raise ValueError("object loss needs at least one ground-truth action")
    tape = _tape(P, w)
    P, w = _node(tape, P), _node(tape, w)
    n_r, n_o = P.shape
    targets = np.zeros((len(gt_actions), n_o))
    targets[np.arange(len(gt_actions)), [object_of_action[a] for a in gt_actions]] = 1.0
    bce = per_proposal_bce(P, targets)  # (R, G)
    w_gt = diff.take(w, np.asarray(gt_actions)) if len(gt_actions) != w.shape[0] else w
    return diff.sum(w_gt * diff.transpose(bce)) * (1.0 / (n_r * len(gt_actions)))


def action_logit(person_scores, proposal_scores, w) -> Node:
    """s_A^H(h;a) + sum_r w_r^a s_A^O(r;a); person (A,), proposals (R, A), w (A, R)."""
    tape = _tape(person_scores, proposal_scores, w)
    sh, so, w = _node(tape, person_scores), _node(tape, proposal_scores), _node(tape, w)
    return sh + diff.sum(w * diff.transpose(so), axis=1)


def loss_act(logits, y_a, style: str = "paper") -> Node:
    tape = _tape(logits)
    logits = _node(tape, logits)
    y = np.asarray(y_a, dtype=float)
    n_a = len(y)
    if n_a < 1:
        raise ValueError("need at least one action class")
    p = probabilities(logits, style)
    ll = diff.log(p) @ y + diff.log(1.0 - p) @ (1.0 - y)
    return ll * (-1.0 / n_a)


def loss_total(l_obj, l_act, hw: HyperWeights):
    return hw.alpha_o * l_obj + hw.alpha_a * l_act


def supervised_targets(
    boxes: np.ndarray,
    gts: Sequence[tuple[int, object]],
    n_objects: int,
    rng: np.random.Generator,
    pos_iou: float = POS_IOU,
    neg_ratio: int = NEG_RATIO,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick positive/negative proposals and their one-hot (or all-zero) targets.

    Returns (row indices, targets) with positives first in input order.
    """
    boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
    n = len(boxes)
    if n == 0:
        return np.zeros(0, dtype=int), np.zeros((0, n_objects))
    if gts:
        gt_boxes = np.array([list(b) for _, b in gts], dtype=float)
        gt_cls = np.array([o for o, _ in gts], dtype=int)
        ious = iou_matrix(boxes, gt_boxes)
        # best IoU first, then lowest class index
        order = np.lexsort((gt_cls[None, :].repeat(n, 0), -ious), axis=1)
        best = order[:, 0]
        best_iou = ious[np.arange(n), best]
        pos = np.flatnonzero(best_iou >= pos_iou)
        labels = gt_cls[best[pos]]
    else:
        pos = np.zeros(0, dtype=int)
        labels = np.zeros(0, dtype=int)
    rest = np.setdiff1d(np.arange(n), pos)
    n_neg = min(len(rest), neg_ratio * len(pos) if len(pos) else neg_ratio)
    neg = np.sort(rng.choice(rest, size=n_neg, replace=False)) if n_neg else np.zeros(0, dtype=int)
    rows = np.concatenate([pos, neg]).astype(int)
    targets = np.zeros((len(rows), n_objects))
    targets[np.arange(len(pos)), labels] = 1.0
    return rows, targets


def loss_supervised(
    P,
    boxes: np.ndarray,
    gts: Sequence[tuple[int, object]],
    rng: np.random.Generator,
    pos_iou: float = POS_IOU,
    neg_ratio: int = NEG_RATIO,
) -> Node:
    """Mean object BCE over sampled positive and negative proposals."""
    tape = _tape(P)
    P = _node(tape, P)
    rows, targets = supervised_targets(boxes, gts, P.shape[1], rng, pos_iou, neg_ratio)
    if len(rows) == 0:
        return tape.const(0.0)
    sel = diff.take(P, rows)
    n_o = P.shape[1]
    ll = diff.log(sel) * targets + diff.log(1.0 - sel) * (1.0 - targets)
    return diff.sum(ll) * (-1.0 / (n_o * len(rows)))


@dataclass
class SupervisedFrame:
    features: np.ndarray  # (m, D)
    boxes: np.ndarray  # (m, 4)
    gts: list  # [(object_id, BBox)]


@dataclass
class PreparedSample:
    """Parameter-independent inputs of one training instance.

    ``features`` and ``centers`` are (F, K, ...) with unit k of every frame
    belonging to tubelet k; for still images F == 1 and units are proposals.
    """

    sample_id: str
    features: np.ndarray  # (F, K, D)
    centers: np.ndarray  # (F, K, 2)
    keypoints: list  # per frame Optional[Keypoints]
    person_features: np.ndarray  # (F, D)
    actions: tuple[int, ...]
    supervised: list = field(default_factory=list)  # [SupervisedFrame]

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]

    @property
    def n_units(self) -> int:
        return self.features.shape[1]


def pooled_head(x: np.ndarray, nodes: dict[str, Node], name: str) -> Node:
    """Head logits per unit, averaged over frames: (F, K, D) -> (K, C)."""
    n_f, n_k, d = x.shape
    s = mlp(x.reshape(n_f * n_k, d), nodes, name)
    if n_f == 1:
        return s
    return diff.mean(diff.reshape(s, (n_f, n_k, s.shape[1])), axis=0)


def detach_rows(w: Node, rows: Sequence[int]) -> Node:
    """Rows outside ``rows`` become constants (no gradient)."""
    mask = np.zeros((w.shape[0], 1))
    mask[list(rows)] = 1.0
    if mask.all():
        return w
    return w * mask + w.tape.const(w.value * (1.0 - mask))


def prior_weights(tape: Tape, nodes: dict[str, Node], prior: PriorParams, prep: PreparedSample) -> Node:
    per_frame = [
        frame_weight_nodes(tape, nodes, prior, prep.keypoints[t], prep.centers[t]) for t in range(prep.n_frames)
    ]
    if len(per_frame) == 1:
        return per_frame[0]
    return diff.mean(diff.stack(per_frame), axis=0)


def sample_loss(
    tape: Tape,
    nodes: dict[str, Node],
    prior: PriorParams,
    prep: PreparedSample,
    object_of_action: Sequence[int],
    n_actions: int,
    hw: HyperWeights,
    style: str = "paper",
    rng: Optional[np.random.Generator] = None,
    prior_grad_from_negatives: bool = False,
) -> Node:
    """Combined weak loss of one sample, plus the supervised term when boxes are revealed.

    Unless ``prior_grad_from_negatives`` is set, the action loss treats the prior
    weights of actions absent from the sample as constants, so each action's
    prior only learns from samples in which that action occurs.
    """
    total = tape.const(0.0)
    if hw.alpha_o or hw.alpha_a:
        w = prior_weights(tape, nodes, prior, prep)
        if hw.alpha_o:
            p_obj = probabilities(pooled_head(prep.features, nodes, "obj"), style)
            total = total + hw.alpha_o * loss_obj(p_obj, w, object_of_action, prep.actions)
        if hw.alpha_a:
            person = mlp(prep.person_features, nodes, "act_h")
            if prep.n_frames > 1:
                person = diff.mean(person, axis=0)
            else:
                person = diff.reshape(person, (n_actions,))
            w_act = w if prior_grad_from_negatives else detach_rows(w, prep.actions)
            logits = action_logit(person, pooled_head(prep.features, nodes, "act_o"), w_act)
            y_a = np.zeros(n_actions)
            y_a[list(prep.actions)] = 1.0
            total = total + hw.alpha_a * loss_act(logits, y_a, style)
    if hw.alpha_sup and prep.supervised:
        if rng is None:
            rng = np.random.default_rng(0)
        sup = [
            loss_supervised(probabilities(mlp(f.features, nodes, "obj"), style), f.boxes, f.gts, rng)
            for f in prep.supervised
        ]
        l_sup = sup[0] if len(sup) == 1 else diff.mean(diff.stack(sup), axis=0)
        total = total + hw.alpha_sup * l_sup
    return total
