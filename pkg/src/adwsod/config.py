"""Flat ``key = value`` config files mapped onto dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass
from pathlib import Path


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 4
    lr: float = 1e-3
    prior_lr: float = 3e-3
    alpha_o: float = 2.0
    alpha_a: float = 1.0
    alpha_sup: float = 1.0
    theta_h: float = 0.5
    n_r: int = 32
    n_frames: int = 8
    hidden: int = 16
    prior_variant: str = "normal"
    learn_mu: bool = True
    learn_sigma: bool = True
    prior_normalize: bool = True
    sigma0: float = 0.5
    loss_style: str = "paper"
    prior_grad_from_negatives: bool = False
    supervised_fraction: float = 0.0
    link_lambda: float = 1.0
    n_tubelets: int = 16
    nms_threshold: float = 0.5
    score_threshold: float = 0.05
    ap_iou: float = 0.5
    corloc_iou: float = 0.5
    validate_every_epoch: bool = True
    seed: int = 0

    def validate(self) -> None:
        for name in ("epochs", "batch_size", "n_r", "n_frames", "hidden", "n_tubelets"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.supervised_fraction <= 1.0:
            raise ValueError("supervised_fraction must be in [0, 1]")
        if min(self.alpha_o, self.alpha_a, self.alpha_sup) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.prior_variant not in ("normal", "grid", "center"):
            raise ValueError(f"unknown prior_variant {self.prior_variant!r}")
        if self.loss_style not in ("paper", "sigmoid_bce"):
            raise ValueError(f"unknown loss_style {self.loss_style!r}")

    def hash(self) -> str:
        return config_hash(self)


def config_hash(cfg) -> str:
    text = json.dumps(dataclasses.asdict(cfg), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _parse_value(text: str, typ):
    text = text.strip()
    if typ is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    if typ is str:
        return text
    # tuples: comma separated numbers, ';' separating pairs
    if ";" in text:
        return tuple(tuple(float(v) for v in part.split(",")) for part in text.split(";") if part.strip())
    return tuple(json.loads(f"[{text}]"))


def parse_config(text: str, cls):
    hints = typing.get_type_hints(cls)
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in hints:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        typ = hints[key]
        if typing.get_origin(typ) is tuple:
            typ = tuple
        try:
            values[key] = _parse_value(value, typ)
        except (ValueError, json.JSONDecodeError) as e:
            raise ValueError(f"line {lineno}: bad value for {key}: {e}") from None
    return cls(**values)


def load_config(path, cls):
    return parse_config(Path(path).read_text(), cls)


def format_config(cfg) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, tuple):
            if v and isinstance(v[0], tuple):
                v = "; ".join(", ".join(repr(x) for x in pair) for pair in v)
            else:
                v = ", ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
