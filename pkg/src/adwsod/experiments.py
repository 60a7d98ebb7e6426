"""Named training variants and seed-averaged benchmark runs."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import pipeline
from .config import TrainConfig
from .synth import SyntheticConfig, generate_synthetic

log = logging.getLogger(__name__)

# overrides on top of a base TrainConfig
VARIANTS = {
    "full": {},
    "object_only": {"alpha_a": 0.0},
    "action_only": {"alpha_o": 0.0},
    "center": {"prior_variant": "center"},
    "grid": {"prior_variant": "grid"},
    "mu_only": {"learn_sigma": False},
    "sigma_only": {"learn_mu": False},
    "rho_0.1": {"supervised_fraction": 0.1},
    "rho_0.5": {"supervised_fraction": 0.5},
    "rho_1.0": {"supervised_fraction": 1.0},
    "supervised_only": {"supervised_fraction": 1.0, "alpha_o": 0.0, "alpha_a": 0.0},
}

ABLATION_SYNTH = SyntheticConfig(feature_noise=0.2, context_prob=1.0)
SEEDS = (0, 1, 2, 3)


def variant_config(name: str, base: TrainConfig = TrainConfig(), seed: int = 0) -> TrainConfig:
    if name not in VARIANTS:
        raise KeyError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}")
    return dataclasses.replace(base, seed=seed, **VARIANTS[name])


@dataclass
class Benchmark:
    """One synthetic dataset with a cache of test mAPs per (variant, seed)."""

    synth: SyntheticConfig = field(default_factory=lambda: ABLATION_SYNTH)
    base: TrainConfig = field(default_factory=TrainConfig)
    results: dict = field(default_factory=dict)

    def __post_init__(self):
        self.task, self.splits = generate_synthetic(self.synth)

    def run(self, name: str, seed: int) -> float:
        key = (name, seed)
        if key not in self.results:
            cfg = variant_config(name, self.base, seed)
            res = pipeline.train(cfg, self.task, self.splits["train"], self.splits["val"])
            test = self.splits["test"]
            self.results[key] = float(pipeline.evaluate(pipeline.infer(res.checkpoint, test), self.task, test)["map"])
            log.info("%s seed %d: test mAP %.4f", name, seed, self.results[key])
        return self.results[key]

    def mean_map(self, name: str, seeds: Sequence[int] = SEEDS) -> float:
        return float(np.mean([self.run(name, s) for s in seeds]))


def recovery_errors(ckpt: pipeline.Checkpoint, synth: SyntheticConfig) -> list[dict]:
    """Per action: learned vs planted anchor keypoint and the max-norm error of the mean offset."""
    prior = ckpt.params.prior
    kw = prior.key_weights()
    rows = []
    for a in range(prior.mu.shape[0]):
        rows.append(
            {
                "action": a,
                "keypoint": int(np.argmax(kw[a])),
                "planted_keypoint": synth.planted_keypoint(a),
                "mu": prior.mu[a].tolist(),
                "planted_mu": synth.planted_mean(a).tolist(),
                "mu_error": float(np.abs(prior.mu[a] - synth.planted_mean(a)).max()),
            }
        )
    return rows


def recovered(rows: Sequence[dict], tol: float = 0.05) -> int:
    return sum(r["keypoint"] == r["planted_keypoint"] and r["mu_error"] < tol for r in rows)
