"""Experiment configuration: defaults, JSON loading, and validation.

Thresholds failing the validity conditions (zeta > 2/3, gamma < zeta^2) are
rejected before any training starts.
"""

import dataclasses
import json
from dataclasses import dataclass

from .errors import ConfigError
from .theory import thresholds_valid

MODES = ("full", "dcss_u_only", "agg_ablation", "external_embeddings")


@dataclass
class DcssConfig:
    k: int
    d: int = 10
    m: float = 1.5
    alpha: float = 0.1
    zeta: float = 0.8
    gamma: float = 0.2
    t1: int = 2
    t2: int = 5
    epochs_pretrain: int = 100
    epochs_phase1: int = 100
    epochs_phase2: int = 20
    batch_size: int = 256
    lr_pretrain: float = 1e-3
    lr_phase1: float = 1e-3
    lr_mnet: float = 1e-3
    lr_encoder_phase2: float = 1e-4
    seed: int = 0
    mode: str = "full"
    dataset: dict | None = None

    def validate(self):
        verdict = thresholds_valid(self.zeta, self.gamma)
        if not verdict.valid:
            raise ConfigError("invalid thresholds: " + "; ".join(verdict.reasons))
        if self.m <= 1.0:
            raise ConfigError(f"fuzziness m must be > 1, got {self.m}")
        if self.k < 2:
            raise ConfigError(f"need at least 2 clusters, got k={self.k}")
        if self.t2 > self.epochs_phase2:
            raise ConfigError(
                f"t2={self.t2} exceeds the phase-2 epoch budget {self.epochs_phase2}"
            )
        for name in (
            "d",
            "t1",
            "t2",
            "epochs_pretrain",
            "epochs_phase1",
            "epochs_phase2",
            "batch_size",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("lr_pretrain", "lr_phase1", "lr_mnet", "lr_encoder_phase2"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dataset is None:
            raise ConfigError("config needs a dataset spec")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "k" not in payload:
            raise ConfigError("config requires 'k' (number of clusters)")
        return cls(**payload)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(payload)
