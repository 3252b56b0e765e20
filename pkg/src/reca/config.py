"""Experiment configuration with defaults matching the quantized model setup."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass


@dataclass
class ExperimentConfig:
    rule: int = 90
    M: int = 16
    learning_rate: float = 0.008
    beta1: float = 0.9
    beta2: float = 0.999
    reg: float = 0.00012
    batch_size: int = 17000
    distortion_copies: int = 3
    alpha_d: float = 30.0
    sigma_d: float = 5.0
    quantize: bool = True
    quant_mode: str = "per_column"
    max_steps: int = 4000
    eval_every: int = 25
    target_val_error: float = 0.016
    seed: int = 0
    out_dir: str = "out"
    data_dir: str | None = None
    validation_size: int = 5000
    shuffle_split: bool = False

    def __post_init__(self):
        if not 0 <= self.rule <= 255:
            raise ValueError(f"rule must be in [0, 255], got {self.rule}")
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.distortion_copies < 0:
            raise ValueError("distortion_copies must be >= 0")
        if self.quant_mode not in ("per_column", "global"):
            raise ValueError(f"unknown quant_mode {self.quant_mode!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def train_params(self):
        from .readout import TrainParams

        return TrainParams(
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            reg=self.reg,
            batch_size=self.batch_size,
            max_steps=self.max_steps,
            eval_every=self.eval_every,
            target_val_error=self.target_val_error,
            quantize=self.quantize,
            quant_mode=self.quant_mode,
            seed=self.seed,
        )

    def distortion_params(self):
        from .augment import DistortionParams

        return DistortionParams(alpha=self.alpha_d, sigma=self.sigma_d, seed=self.seed)
