"""Training, inference, checkpointing and evaluation."""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import diff, metrics
from .config import TrainConfig, config_hash
from .data import Sample, TaskSpec
from .diff import AdamState, Tape
from .geometry import BBox, filter_proposal_indices, nms_indices
from .model import HyperWeights, ModelParams, PreparedSample, SupervisedFrame, object_scores, sample_loss
from .prior import PriorParams
from .temporal import link_tubelets, sample_frames

log = logging.getLogger(__name__)

PRIOR_KEYS = ("prior.key_logits", "prior.mu", "prior.log_sigma", "prior.grid_logits")


@dataclass
class Checkpoint:
    params: ModelParams
    adam: AdamState
    epoch: int
    config: TrainConfig
    task: TaskSpec
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)

    def to_json(self) -> dict:
        arrays = self.params.arrays()
        return {
            "config_hash": self.config_hash,
            "config": dataclasses.asdict(self.config),
            "task": self.task.to_json(),
            "epoch": self.epoch,
            "params": {k: {"shape": list(v.shape), "data": [float(x) for x in v.reshape(-1)]} for k, v in arrays.items()},
            "adam": {
                "t": self.adam.t,
                "lr": self.adam.lr,
                "beta1": self.adam.beta1,
                "beta2": self.adam.beta2,
                "eps": self.adam.eps,
                "m": {k: [float(x) for x in v.reshape(-1)] for k, v in self.adam.m.items()},
                "v": {k: [float(x) for x in v.reshape(-1)] for k, v in self.adam.v.items()},
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def from_json(cls, d: dict) -> "Checkpoint":
        config = TrainConfig(**d["config"])
        if config_hash(config) != d["config_hash"]:
            raise ValueError("checkpoint config hash does not match its config")
        task = TaskSpec.from_json(d["task"])
        arrays = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in d["params"].items()}
        prior = PriorParams(
            key_logits=arrays.pop("prior.key_logits"),
            mu=arrays.pop("prior.mu"),
            log_sigma=arrays.pop("prior.log_sigma"),
            grid_logits=arrays.pop("prior.grid_logits"),
            variant=config.prior_variant,
            learn_mu=config.learn_mu,
            learn_sigma=config.learn_sigma,
            normalize=config.prior_normalize,
        )
        params = ModelParams(prior=prior, heads=arrays)
        a = d["adam"]
        shapes = params.arrays()
        adam = AdamState(
            lr=a["lr"],
            beta1=a["beta1"],
            beta2=a["beta2"],
            eps=a["eps"],
            t=a["t"],
            m={k: np.array(v, dtype=float).reshape(shapes[k].shape) for k, v in a["m"].items()},
            v={k: np.array(v, dtype=float).reshape(shapes[k].shape) for k, v in a["v"].items()},
        )
        return cls(params, adam, d["epoch"], config, task, d["config_hash"])

    @classmethod
    def load(cls, path) -> "Checkpoint":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class EpochLog:
    epoch: int
    loss: float
    val_map: Optional[float] = None
    skipped: int = 0


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best validation epoch (last epoch without validation)
    final: Checkpoint
    history: list[EpochLog] = field(default_factory=list)


# --- preprocessing --------------------------------------------------------


def _person_feature(frame, dim: int) -> np.ndarray:
    return np.zeros(dim) if frame.person_feature is None else np.asarray(frame.person_feature, dtype=float)


def prepare_sample(sample: Sample, cfg: TrainConfig, task: TaskSpec, reveal: bool = False) -> Optional[PreparedSample]:
    """Filter proposals, and for clips sample frames and link tubelets. None if nothing survives."""
    dim = task.feature_dim
    if len(sample.frames) == 1:
        frame_ids = [0]
    else:
        frame_ids = sample_frames(len(sample.frames), cfg.n_frames)
    kept = []
    for t in frame_ids:
        f = sample.frames[t]
        idx = filter_proposal_indices(f.proposals, f.person_box, cfg.theta_h, cfg.n_r)
        if not idx:
            return None
        kept.append([f.proposals[i] for i in idx])
    if len(frame_ids) == 1:
        units = [list(range(len(kept[0])))]
    else:
        tubes = link_tubelets([[(p.box, p.confidence) for p in ps] for ps in kept], cfg.link_lambda, cfg.n_tubelets)
        units = [[tb.indices[t] for tb in tubes] for t in range(len(frame_ids))]
    features = np.stack([np.stack([kept[t][j].feature for j in units[t]]) for t in range(len(frame_ids))])
    centers = np.stack(
        [
            np.array([[(kept[t][j].box[0] + kept[t][j].box[2]) / 2, (kept[t][j].box[1] + kept[t][j].box[3]) / 2] for j in units[t]])
            for t in range(len(frame_ids))
        ]
    )
    supervised = []
    if reveal:
        for pos, t in enumerate(frame_ids):
            if pos != frame_ids.index(t):
                continue
            gts = [(g.object, g.box) for g in sample.gts_in_frame(t)]
            if gts:
                supervised.append(
                    SupervisedFrame(
                        features=np.stack([p.feature for p in kept[pos]]),
                        boxes=np.array([list(p.box) for p in kept[pos]]),
                        gts=gts,
                    )
                )
    return PreparedSample(
        sample_id=sample.id,
        features=features,
        centers=centers,
        keypoints=[sample.frames[t].keypoints for t in frame_ids],
        person_features=np.stack([_person_feature(sample.frames[t], dim) for t in frame_ids]),
        actions=tuple(sorted(set(sample.actions))),
        supervised=supervised,
    )


def revealed_ids(samples: Sequence[Sample], fraction: float, seed: int) -> set[str]:
    """Seeded subset (``fraction`` of the samples carrying boxes) whose boxes are used in training."""
    eligible = [s.id for s in samples if s.gt_boxes]
    n = int(round(fraction * len(eligible)))
    order = np.random.default_rng([seed, 1]).permutation(len(eligible))
    return {eligible[i] for i in order[:n]}


# --- training -------------------------------------------------------------


def init_params(cfg: TrainConfig, task: TaskSpec) -> ModelParams:
    prior = PriorParams.init(
        task.n_actions,
        task.num_keypoints,
        variant=cfg.prior_variant,
        sigma0=cfg.sigma0,
        learn_mu=cfg.learn_mu,
        learn_sigma=cfg.learn_sigma,
        normalize=cfg.prior_normalize,
    )
    return ModelParams.init(prior, task.feature_dim, task.n_objects, cfg.hidden, cfg.seed)


def hyper_weights(cfg: TrainConfig) -> HyperWeights:
    return HyperWeights(cfg.alpha_o, cfg.alpha_a, cfg.alpha_sup)


def loss_and_grads(
    params: ModelParams,
    prep: PreparedSample,
    task: TaskSpec,
    cfg: TrainConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[float, dict[str, np.ndarray]]:
    tape = Tape()
    nodes = {k: tape.param(k, v) for k, v in params.arrays().items()}
    loss = sample_loss(
        tape,
        nodes,
        params.prior,
        prep,
        task.action_object,
        task.n_actions,
        hyper_weights(cfg),
        cfg.loss_style,
        rng,
        cfg.prior_grad_from_negatives,
    )
    grads = diff.backward(tape, loss)
    if not params.prior.learn_mu:
        grads["prior.mu"][:] = 0.0
    if not params.prior.learn_sigma:
        grads["prior.log_sigma"][:] = 0.0
    return float(loss.value), grads


def _snapshot(params, adam, epoch, cfg, task) -> Checkpoint:
    return Checkpoint(copy.deepcopy(params), copy.deepcopy(adam), epoch, dataclasses.replace(cfg), task)


def train(
    cfg: TrainConfig,
    task: TaskSpec,
    train_samples: Sequence[Sample],
    val_samples: Optional[Sequence[Sample]] = None,
) -> TrainResult:
    cfg.validate()
    params = init_params(cfg, task)
    reveal = revealed_ids(train_samples, cfg.supervised_fraction, cfg.seed)
    prepared = []
    skipped = 0
    for s in train_samples:
        prep = prepare_sample(s, cfg, task, reveal=s.id in reveal)
        if prep is None:
            log.warning("sample %s: no proposals left after filtering, skipped", s.id)
            skipped += 1
            continue
        prepared.append(prep)
    if not prepared:
        raise ValueError("no trainable samples")

    adam = AdamState(lr=cfg.lr)
    prior_adam = AdamState(lr=cfg.prior_lr)
    history: list[EpochLog] = []
    best: Optional[Checkpoint] = None
    best_map = -math.inf
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 2, epoch]).permutation(len(prepared))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.arrays().items()}
            for i in batch:
                rng = np.random.default_rng([cfg.seed, 3, epoch, int(i)])
                value, grads = loss_and_grads(params, prepared[i], task, cfg, rng)
                total += value
                for k, g in grads.items():
                    acc[k] += g
            arrays = params.arrays()
            scale = 1.0 / len(batch)
            heads = {k: v for k, v in arrays.items() if k not in PRIOR_KEYS}
            prior = {k: arrays[k] for k in PRIOR_KEYS}
            diff.adam_step(adam, heads, {k: acc[k] * scale for k in heads})
            diff.adam_step(prior_adam, prior, {k: acc[k] * scale for k in prior})
            params.prior.clamp_()
        entry = EpochLog(epoch, total / len(prepared), skipped=skipped)
        snap = None
        if val_samples and (cfg.validate_every_epoch or epoch == cfg.epochs):
            snap = _snapshot(params, _merge_adam(adam, prior_adam), epoch, cfg, task)
            entry.val_map = evaluate(infer(snap, val_samples), task, val_samples)["map"] or 0.0
            if entry.val_map >= best_map:  # ties go to the later epoch
                best_map, best = entry.val_map, snap
        history.append(entry)
        log.info("epoch %d loss %.5f val_map %s", epoch, entry.loss, entry.val_map)
    final = _snapshot(params, _merge_adam(adam, prior_adam), cfg.epochs, cfg, task)
    return TrainResult(checkpoint=best or final, final=final, history=history)


def _merge_adam(heads: AdamState, prior: AdamState) -> AdamState:
    # one step counter drives both; the prior group keeps its own lr in the config
    return AdamState(
        lr=heads.lr,
        beta1=heads.beta1,
        beta2=heads.beta2,
        eps=heads.eps,
        t=heads.t,
        m={**heads.m, **prior.m},
        v={**heads.v, **prior.v},
    )


# --- inference and evaluation ---------------------------------------------


@dataclass
class InferenceFrame:
    """What inference is allowed to see: proposals only (no person, no keypoints)."""

    sample_id: str
    frame: int
    boxes: np.ndarray  # (R, 4)
    confidences: np.ndarray  # (R,)
    features: np.ndarray  # (R, D)


def inference_frames(sample: Sample) -> list[InferenceFrame]:
    frames = sample.annotated_frames or list(range(len(sample.frames)))
    out = []
    for t in frames:
        props = sample.frames[t].proposals
        out.append(
            InferenceFrame(
                sample.id,
                t,
                np.array([list(p.box) for p in props], dtype=float).reshape(-1, 4),
                np.array([p.confidence for p in props], dtype=float),
                np.array([p.feature for p in props], dtype=float).reshape(len(props), -1),
            )
        )
    return out


def detect_frame(ckpt: Checkpoint, frame: InferenceFrame) -> list[metrics.Detection]:
    cfg = ckpt.config
    if len(frame.boxes) == 0:
        return []
    order = np.argsort(-frame.confidences, kind="stable")[: cfg.n_r]
    boxes, feats = frame.boxes[order], frame.features[order]
    _, probs = object_scores(ckpt.params.heads, feats, cfg.loss_style)
    dets = []
    for o in range(probs.shape[1]):
        keep = nms_indices(boxes, probs[:, o], cfg.nms_threshold)
        for i in keep:
            if probs[i, o] >= cfg.score_threshold:
                dets.append(metrics.Detection(frame.sample_id, o, BBox(*map(float, boxes[i])), float(probs[i, o]), frame.frame))
    return dets


def infer(ckpt: Checkpoint, samples: Sequence[Sample]) -> list[metrics.Detection]:
    dets = []
    for s in samples:
        for frame in inference_frames(s):
            dets.extend(detect_frame(ckpt, frame))
    return dets


def ground_truth(samples: Sequence[Sample]) -> dict:
    gts: dict = {}
    for s in samples:
        for g in s.gt_boxes:
            gts.setdefault((s.id, g.frame), []).append((g.object, g.box))
    return gts


def evaluate(
    dets: Sequence[metrics.Detection],
    task: TaskSpec,
    samples: Sequence[Sample],
    ap_iou: float = 0.5,
    corloc_iou: float = 0.5,
) -> dict:
    return metrics.report(dets, ground_truth(samples), task.objects, ap_iou, corloc_iou)


def dumps_report(rep: dict) -> str:
    return json.dumps(rep, sort_keys=True, indent=2) + "\n"
