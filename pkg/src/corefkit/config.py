"""Flat run configuration shared by the model, trainer and CLI.

Stored on disk as a single flat JSON object; command-line flags override
file keys, which override the defaults below.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

HOI_METHODS = ("none", "aa", "ee", "sc", "cm")


@dataclass
class Config:
    # corpus / segmentation
    max_seg_len: int = 384
    # embedding provider
    embed_provider: str = "hash"  # hash | file
    embeddings_path: str = ""
    embed_dim: int = 64
    embed_seed: int = 0
    # model
    max_span_width: int = 30
    prune_ratio: float = 0.4
    span_cap: int = 3900
    max_antecedents: int = 50
    ffnn_size: int = 1000
    ffnn_depth: int = 2
    feature_dim: int = 20
    dropout: float = 0.3
    # higher-order inference
    hoi_method: str = "none"  # none | aa | ee | sc | cm
    hoi_rounds: int = 1
    cm_order: str = "sequential"  # sequential | easy_first
    cm_reduce: str = "max"  # mean | max
    ee_max_spans: int = 300
    # training
    epochs: int = 24
    lr_task: float = 3e-4
    lr_encoder: float = 1e-5
    weight_decay_task: float = 0.0
    weight_decay_encoder: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 1.0
    seed: int = 0
    # analysis
    include_nongold: bool = True

    def __post_init__(self):
        if self.hoi_method not in HOI_METHODS:
            raise ValueError(f"hoi_method must be one of {HOI_METHODS}, got {self.hoi_method!r}")
        if self.cm_order not in ("sequential", "easy_first"):
            raise ValueError(f"cm_order must be sequential|easy_first, got {self.cm_order!r}")
        if self.cm_reduce not in ("mean", "max"):
            raise ValueError(f"cm_reduce must be mean|max, got {self.cm_reduce!r}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_task <= 0 or self.lr_encoder <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.hoi_rounds < 0:
            raise ValueError("hoi_rounds must be >= 0")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
