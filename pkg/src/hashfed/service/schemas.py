"""Request and response bodies for the experiment service.

Every run-addressed request carries the full experiment config; the service
resolves it to a run directory by config hash. Epsilon values in sweep
requests/responses may be the string "inf" (JSON numbers cannot express
infinity).
"""

import math
from typing import Literal

from pydantic import BaseModel, Field, field_validator

from ..config import ExperimentConfig


class HealthResponse(BaseModel):
    status: str
    version: str
    service: str


class TrainRequest(BaseModel):
    config: ExperimentConfig


class RunSummary(BaseModel):
    run_id: str
    config_hash: str
    seed: int
    out_dir: str
    checkpoint_path: str
    train_log_path: str
    epochs: int
    final_train_accuracy: float | None
    final_test_accuracy: float | None


class EvalRequest(BaseModel):
    config: ExperimentConfig


class SplitMetrics(BaseModel):
    accuracy: float
    ce: float
    cos_term: float


class EvalResponse(BaseModel):
    config_hash: str
    seed: int
    train: SplitMetrics
    test: SplitMetrics | None
    report_path: str


class ReconstructRequest(BaseModel):
    config: ExperimentConfig
    party: int = Field(0, ge=0)
    lam: float | None = Field(None, ge=0.0)
    steps: int | None = Field(None, ge=1)
    lr: float | None = Field(None, gt=0.0)
    seed: int | None = None
    restarts: int | None = Field(None, ge=1)
    dump_pgm: bool = False


class ClassReconstruction(BaseModel):
    label: int
    ssim: float
    kld: float
    final_objective: float
    pgm: str | None = None
    real_pgm: str | None = None


class ReconstructResponse(BaseModel):
    config_hash: str
    seed: int
    party: int
    lam: float
    steps: int
    lr: float
    attack_seed: int
    restarts: int
    per_class: list[ClassReconstruction]
    ssim_mean: float
    kld_mean: float
    dcor: float
    report_path: str


class PgdRequest(BaseModel):
    config: ExperimentConfig
    party: int = Field(0, ge=0)
    omega: float | None = Field(None, gt=0.0)
    eta: float | None = Field(None, gt=0.0)
    steps: int | None = Field(None, ge=1)
    targets: int | None = Field(None, ge=1)
    seed: int | None = None


class PgdTrial(BaseModel):
    row: int
    true_label: int
    base_prediction: int
    target: int
    success: bool
    steps_to_success: int | None


class PgdResponse(BaseModel):
    config_hash: str
    seed: int
    party: int
    omega: float
    eta: float
    steps: int
    attack_seed: int
    targets: int
    success_rate: float
    trials: list[PgdTrial]
    report_path: str


class PlaRequest(BaseModel):
    config: ExperimentConfig
    party: int = Field(0, ge=0)
    seed: int | None = None


class PlaResponse(BaseModel):
    config_hash: str
    seed: int
    party: int
    attack_seed: int
    probe_hash_accuracy: float
    probe_embedding_accuracy: float
    leakage_gap: float
    chance_level: float
    report_path: str


class DetectRequest(BaseModel):
    config: ExperimentConfig
    reference: Literal["pairwise", "initiator"] | None = None


class DetectResponse(BaseModel):
    config_hash: str
    seed: int
    threshold: int
    reference: str
    flagged: int
    samples: int
    max_distance: int | None
    audit: dict
    report_path: str


class DpSweepRequest(BaseModel):
    config: ExperimentConfig
    epsilons: list[float | str] | None = None
    seed: int | None = None
    repeats: int | None = Field(None, ge=1)

    @field_validator("epsilons")
    @classmethod
    def _parse_epsilons(cls, v):
        if v is None:
            return v
        out = []
        for e in v:
            try:
                val = float(e)
            except ValueError:
                raise ValueError(f"bad epsilon {e!r}") from None
            if math.isnan(val) or val <= 0.0:
                raise ValueError("epsilons must be positive")
            out.append(val)
        return out


class DpSweepRow(BaseModel):
    epsilon: str
    accuracy: float
    delta: float | None
    repeats: int


class DpSweepResponse(BaseModel):
    config_hash: str
    seed: int
    attack_seed: int
    rows: list[DpSweepRow]
    csv_path: str
    report_path: str


class AblateRequest(BaseModel):
    config: ExperimentConfig
    toggle: Literal["bn", "consistency"]


class AblateResponse(BaseModel):
    config_hash: str
    seed: int
    toggle: str
    base: RunSummary
    variant: RunSummary
    accuracy_drop: float
    bar_accuracy: float | None = None
    epochs_to_bar_with: int | None = None
    epochs_to_bar_without: int | None = None
    report_path: str


class GenCodesRequest(BaseModel):
    classes: int = Field(ge=2)
    code_bits: int | None = Field(None, ge=1)
    seed: int = 7


class GenCodesResponse(BaseModel):
    classes: int
    code_bits: int
    seed: int
    codes: list[list[int]]
    orthogonality: dict
    report_path: str
