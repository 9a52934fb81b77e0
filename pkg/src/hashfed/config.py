"""Experiment configuration models and the canonical config hash.

Configs are plain JSON with these exact field names. Validation happens
before any compute; errors carry field paths. The config hash (short sha256
of the canonical JSON dump) names the run's output directory, so identical
configs share artifacts.
"""

import hashlib
import json
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .codebook import code_length


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BlobsSpec(StrictModel):
    kind: Literal["blobs"] = "blobs"
    classes: int = Field(2, ge=2)
    n_per_class: int = Field(200, ge=1)
    dim: int = Field(8, ge=2)
    separation: float = Field(6.0, gt=0.0)


class ImagesSpec(StrictModel):
    kind: Literal["images"] = "images"
    classes: int = Field(4, ge=2)
    n_per_class: int = Field(100, ge=1)
    side: int = Field(12, ge=8)
    noise: float = Field(0.1, ge=0.0)


class CsvSpec(StrictModel):
    kind: Literal["csv"] = "csv"
    path: str
    label_column: str
    drop_columns: list[str] = Field(default_factory=list)


DatasetSpec = Annotated[Union[BlobsSpec, ImagesSpec, CsvSpec], Field(discriminator="kind")]


class OptimizerConfig(StrictModel):
    learning_rate: float = Field(1e-3, gt=0.0)
    weight_decay: float = Field(5e-4, ge=0.0)


class ReconstructionConfig(StrictModel):
    lam: float = Field(1e-2, ge=0.0)  # total-variation weight
    steps: int = Field(3000, ge=1)
    lr: float = Field(0.1, gt=0.0)
    seeds: int = Field(3, ge=1)  # independent restarts feeding leakage stats


class PgdConfig(StrictModel):
    omega: float = Field(1.0, gt=0.0)
    eta: float = Field(0.1, gt=0.0)
    steps: int = Field(50, ge=1)
    targets: int = Field(50, ge=1)


class ProbeSpec(StrictModel):
    hidden: int = Field(32, ge=1)
    epochs: int = Field(50, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    train_ratio: float = Field(0.7, gt=0.0, lt=1.0)


class AttackConfig(StrictModel):
    reconstruction: ReconstructionConfig = Field(default_factory=ReconstructionConfig)
    pgd: PgdConfig = Field(default_factory=PgdConfig)
    probe: ProbeSpec = Field(default_factory=ProbeSpec)


class DefenseConfig(StrictModel):
    detection_threshold: int | None = Field(None, ge=1)  # None: floor(code_bits/2)
    detection_reference: Literal["pairwise", "initiator"] = "pairwise"
    dp_epsilons: list[float] = Field(default_factory=lambda: [1.0, 2.0, 10.0])
    dp_repeats: int = Field(3, ge=1)

    @field_validator("dp_epsilons")
    @classmethod
    def _positive_epsilons(cls, v):
        if any(e <= 0.0 for e in v):
            raise ValueError("epsilons must be positive")
        return v


class ExperimentConfig(StrictModel):
    seed: int = 7
    dataset: DatasetSpec = Field(default_factory=BlobsSpec)
    parties: int = Field(2, ge=1)
    feature_ratios: list[float] | None = None  # None: equal shares
    code_bits: int | None = None  # None: minimum for the class count
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(256, ge=2)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    bottom_hidden: list[int] = Field(default_factory=lambda: [32])
    top_hidden: int = Field(64, ge=1)
    use_bn: bool = True
    bn_affine_trainable: bool = True
    use_consistency: bool = True
    oversample: bool = True
    train_ratio: float = Field(0.7, gt=0.0, lt=1.0)
    attacks: AttackConfig = Field(default_factory=AttackConfig)
    defense: DefenseConfig = Field(default_factory=DefenseConfig)

    @field_validator("feature_ratios")
    @classmethod
    def _valid_ratios(cls, v):
        if v is None:
            return v
        if any(r <= 0.0 for r in v):
            raise ValueError("feature ratios must be positive")
        if abs(sum(v) - 1.0) > 1e-6:
            raise ValueError("feature ratios must sum to 1")
        return v

    @field_validator("bottom_hidden")
    @classmethod
    def _valid_hidden(cls, v):
        if any(h < 1 for h in v):
            raise ValueError("hidden widths must be positive")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.feature_ratios is not None and len(self.feature_ratios) != self.parties:
            raise ValueError("feature_ratios length must equal parties")
        classes = getattr(self.dataset, "classes", None)
        if classes is not None and self.code_bits is not None:
            if self.code_bits < code_length(classes):
                raise ValueError(
                    f"code_bits must be at least {code_length(classes)} for {classes} classes"
                )
        return self

    def resolved_ratios(self) -> list[float]:
        if self.feature_ratios is not None:
            return list(self.feature_ratios)
        return [1.0 / self.parties] * self.parties

    def resolved_code_bits(self, classes: int) -> int:
        return self.code_bits if self.code_bits is not None else code_length(classes)


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable hash of the canonical JSON form."""
    canon = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
