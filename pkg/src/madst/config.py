"""Model and training configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional


@dataclass
class ModelConfig:
    static_dim: int = 300
    char_dim: int = 20
    char_out: int = 100
    ctx_dim: int = 32
    ctx_layers: int = 3
    tag_dim: int = 5
    n_pos: int = 17
    n_ner: int = 19
    max_turns: int = 40
    hidden: int = 400
    att_dim: Optional[int] = None  # defaults to hidden
    dropout: float = 0.2
    ctx_dropout: float = 0.5
    max_decode_len: int = 10
    finetune_static: bool = True
    ctx_l2: float = 0.0
    word_xattn: bool = True
    high_xattn: bool = True
    self_attn: bool = True
    slot_summarizer: bool = True

    def __post_init__(self):
        for name in ("static_dim", "char_dim", "char_out", "ctx_dim", "ctx_layers", "tag_dim",
                     "max_turns", "hidden", "max_decode_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("dropout", "ctx_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    @property
    def attention_dim(self) -> int:
        return self.att_dim or self.hidden

    @property
    def embed_dim(self) -> int:
        return self.static_dim + self.char_out + self.ctx_dim + 3 * self.tag_dim

    @property
    def ablations(self) -> list[str]:
        return [n for n in ("word_xattn", "high_xattn", "self_attn", "slot_summarizer") if not getattr(self, n)]


@dataclass
class TrainConfig:
    lr: float = 0.0005
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    batch_turns: int = 4
    decay_every_epochs: int = 3
    decay_factor: float = 0.25
    gamma: float = 1.0
    seed: int = 0
    max_epochs: int = 30
    patience: int = 6
    clip_norm: float = 10.0
    min_freq: int = 1
    eval_batch_turns: int = 16

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr <= 0 or self.epsilon <= 0 or self.batch_turns < 1 or self.decay_every_epochs < 1:
            raise ValueError("lr, epsilon, batch_turns and decay_every_epochs must be positive")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")

    def lr_at(self, epoch: int) -> float:
        """Step decay: multiply by ``decay_factor`` every ``decay_every_epochs`` (0-indexed epochs)."""
        return self.lr * self.decay_factor ** (epoch // self.decay_every_epochs)


def _from_mapping(cls, raw: Mapping[str, Any]):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**raw)


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_json(self) -> dict:
        return {"model": dataclasses.asdict(self.model), "train": dataclasses.asdict(self.train)}

    @classmethod
    def from_json(cls, raw: Mapping[str, Any]) -> "RunConfig":
        return cls(_from_mapping(ModelConfig, raw.get("model", {})),
                   _from_mapping(TrainConfig, raw.get("train", {})))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        return cls.from_json(json.loads(Path(path).read_text()))

    def override(self, model: Optional[Mapping] = None, train: Optional[Mapping] = None) -> "RunConfig":
        return RunConfig(dataclasses.replace(self.model, **(model or {})),
                         dataclasses.replace(self.train, **(train or {})))
